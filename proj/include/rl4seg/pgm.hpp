#pragma once

// Binary PGM (P5) readers/writers. Images use maxval 65535 (big-endian
// payload per the format), masks use maxval 255 with raw class indices.

#include <stdexcept>
#include <string>

#include "rl4seg/image.hpp"

namespace rl4seg {

struct pgm_error : std::runtime_error {
    pgm_error(const std::string& msg, size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    size_t byte_offset;
};

void write_pgm16(const std::string& path, const Image& img);
Image read_pgm16(const std::string& path);

void write_pgm8(const std::string& path, const Mask& mask);
Mask read_pgm8(const std::string& path);

}  // namespace rl4seg
