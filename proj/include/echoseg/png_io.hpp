#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace echoseg {

struct Png16 {
    std::vector<uint16_t> pixels; // row-major
    int height = 0;
    int width = 0;
};

struct Png8 {
    std::vector<uint8_t> pixels; // row-major
    int height = 0;
    int width = 0;
};

void write_png16(const std::string& path, const uint16_t* pixels, int height, int width);
Png16 read_png16(const std::string& path);

void write_png8(const std::string& path, const uint8_t* pixels, int height, int width);
Png8 read_png8(const std::string& path);

// Interleaved RGB, 8 bits per channel.
void write_png_rgb(const std::string& path, const uint8_t* rgb, int height, int width);

} // namespace echoseg
