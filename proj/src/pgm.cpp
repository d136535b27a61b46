#include "rl4seg/pgm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <tuple>
#include <vector>

namespace rl4seg {

namespace {

struct Parser {
    std::vector<char> bytes;
    size_t pos = 0;
    std::string path;

    explicit Parser(const std::string& p) : path(p) {
        std::ifstream f(p, std::ios::binary);
        if (!f) throw pgm_error("cannot open '" + p + "'", 0);
        bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw pgm_error("'" + path + "': " + msg, pos);
    }

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long parse_int() {
        skip_space_and_comments();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
            fail("expected integer");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 30) fail("integer out of range");
            ++pos;
        }
        return v;
    }

    // returns (w, h, maxval), leaves pos at first payload byte
    std::tuple<int, int, long> header() {
        if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
            fail("bad magic, expected P5");
        pos = 2;
        const int w = int(parse_int());
        const int h = int(parse_int());
        const long maxval = parse_int();
        if (w <= 0 || h <= 0) fail("non-positive dimensions");
        if (pos >= bytes.size()) fail("truncated header");
        const char c = bytes[pos];
        if (c != ' ' && c != '\t' && c != '\r' && c != '\n')
            fail("expected single whitespace before payload");
        ++pos;
        return {w, h, maxval};
    }

    void need(size_t n) {
        if (bytes.size() - pos < n) {
            pos = bytes.size();
            fail("truncated payload, need " + std::to_string(n) + " more bytes");
        }
    }
};

}  // namespace

void write_pgm16(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw pgm_error("cannot write '" + path + "'", 0);
    f << "P5\n" << img.w << " " << img.h << "\n65535\n";
    std::vector<uint8_t> buf(img.size() * 2);
    for (size_t i = 0; i < img.size(); ++i) {
        float v = img.px[i];
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        const uint16_t q = uint16_t(std::lround(v * 65535.f));
        buf[2 * i] = uint8_t(q >> 8);  // most significant byte first
        buf[2 * i + 1] = uint8_t(q & 0xff);
    }
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!f) throw pgm_error("short write to '" + path + "'", 0);
}

Image read_pgm16(const std::string& path) {
    Parser p(path);
    auto [w, h, maxval] = p.header();
    if (maxval != 65535) p.fail("expected maxval 65535, got " + std::to_string(maxval));
    p.need(size_t(w) * h * 2);
    Image img(h, w);
    for (size_t i = 0; i < img.size(); ++i) {
        const uint16_t q = uint16_t(uint8_t(p.bytes[p.pos + 2 * i])) << 8 |
                           uint16_t(uint8_t(p.bytes[p.pos + 2 * i + 1]));
        img.px[i] = float(q) / 65535.f;
    }
    return img;
}

void write_pgm8(const std::string& path, const Mask& mask) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw pgm_error("cannot write '" + path + "'", 0);
    f << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(mask.px.data()), std::streamsize(mask.size()));
    if (!f) throw pgm_error("short write to '" + path + "'", 0);
}

Mask read_pgm8(const std::string& path) {
    Parser p(path);
    auto [w, h, maxval] = p.header();
    if (maxval != 255) p.fail("expected maxval 255, got " + std::to_string(maxval));
    p.need(size_t(w) * h);
    Mask m(h, w);
    for (size_t i = 0; i < m.size(); ++i) m.px[i] = uint8_t(p.bytes[p.pos + i]);
    return m;
}

}  // namespace rl4seg
