#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rl4seg {

// Class indices shared across the project.
constexpr uint8_t kBG = 0;
constexpr uint8_t kLV = 1;
constexpr uint8_t kMYO = 2;
constexpr int kNumClasses = 3;

// H x W grayscale intensity grid, values in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), px(size_t(h_) * w_, fill) {}

    float& at(int y, int x) { return px[size_t(y) * w + x]; }
    float at(int y, int x) const { return px[size_t(y) * w + x]; }
    size_t size() const { return px.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

// H x W byte grid. Used both for class masks (values 0/1/2) and for
// binary maps such as reward targets (values 0/1).
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> px;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), px(size_t(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return px[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return px[size_t(y) * w + x]; }
    size_t size() const { return px.size(); }
    bool same_shape(const Mask& o) const { return h == o.h && w == o.w; }
    bool operator==(const Mask& o) const { return h == o.h && w == o.w && px == o.px; }
    bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }

    Mask binary(uint8_t cls) const {
        Mask out(h, w);
        for (size_t i = 0; i < px.size(); ++i) out.px[i] = px[i] == cls ? 1 : 0;
        return out;
    }

    size_t count(uint8_t v) const {
        size_t n = 0;
        for (uint8_t p : px) n += p == v;
        return n;
    }
};

// 1 where the two masks agree, 0 elsewhere.
inline Mask agreement_map(const Mask& a, const Mask& ref) {
    if (!a.same_shape(ref)) throw std::invalid_argument("agreement_map: shape mismatch");
    Mask e(a.h, a.w);
    for (size_t i = 0; i < a.px.size(); ++i) e.px[i] = a.px[i] == ref.px[i] ? 1 : 0;
    return e;
}

}  // namespace rl4seg
