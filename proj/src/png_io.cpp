#include "echoseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "echoseg/error.hpp"

namespace echoseg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_gray(const std::string& path, const void* pixels, int height, int width, int bit_depth) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoWriteFailure, "libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoWriteFailure, "libpng write failed for " + path);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png); // host is little-endian, PNG wants big-endian samples

    const size_t stride = static_cast<size_t>(width) * (bit_depth / 8);
    const auto* base = static_cast<const uint8_t*>(pixels);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(base + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct GrayImage {
    std::vector<uint8_t> bytes;
    int height = 0;
    int width = 0;
    int bit_depth = 0;
};

GrayImage read_gray(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error(ErrorCode::IoReadFailure, "cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoReadFailure, "libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoReadFailure, "libpng read failed for " + path);
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY) {
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    }
    if (bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        bit_depth = 8;
    }
    if (bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    GrayImage img;
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.bit_depth = bit_depth;
    const size_t stride = png_get_rowbytes(png, info);
    img.bytes.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y) png_read_row(png, img.bytes.data() + y * stride, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace

void write_png16(const std::string& path, const uint16_t* pixels, int height, int width) {
    write_gray(path, pixels, height, width, 16);
}

Png16 read_png16(const std::string& path) {
    GrayImage img = read_gray(path);
    Png16 out;
    out.height = img.height;
    out.width = img.width;
    out.pixels.resize(static_cast<size_t>(img.height) * img.width);
    if (img.bit_depth == 16) {
        const auto* src = reinterpret_cast<const uint16_t*>(img.bytes.data());
        out.pixels.assign(src, src + out.pixels.size());
    } else {
        for (size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = img.bytes[i];
    }
    return out;
}

void write_png8(const std::string& path, const uint8_t* pixels, int height, int width) {
    write_gray(path, pixels, height, width, 8);
}

Png8 read_png8(const std::string& path) {
    GrayImage img = read_gray(path);
    if (img.bit_depth != 8)
        throw Error(ErrorCode::IoReadFailure, path + " is not an 8-bit grayscale PNG");
    Png8 out;
    out.height = img.height;
    out.width = img.width;
    out.pixels = std::move(img.bytes);
    return out;
}

void write_png_rgb(const std::string& path, const uint8_t* rgb, int height, int width) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoWriteFailure, "libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoWriteFailure, "libpng write failed for " + path);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const size_t stride = static_cast<size_t>(width) * 3;
    for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(rgb + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace echoseg
