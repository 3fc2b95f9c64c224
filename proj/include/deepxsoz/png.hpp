#pragma once
// In-memory PNG encoding and the review slice renderer.
//
// Palette: anatomy template in gray (brain tissue 96, background and
// ventricles 0); activation a = value / IC max is blended over it in pure red
// with alpha a wherever a >= 0.1. Output is 8-bit RGB, no ancillary chunks.

#include <png.h>

#include <cmath>
#include <string>
#include <vector>

#include "anatomy.hpp"
#include "icdata.hpp"

namespace deepxsoz {

inline std::string encode_png_rgb(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
    if (width == 0 || height == 0 || rgb.size() != width * height * 3) throw std::invalid_argument("encode_png_rgb: bad image buffer");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw RuntimeFailure("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw RuntimeFailure("png: cannot allocate info");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("png: encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
        },
        [](png_structp) {});
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (std::size_t r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + r * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline constexpr std::uint8_t kTissueGray = 96;
inline constexpr float kOverlayFloor = 0.1f;

inline std::vector<std::uint8_t> render_slice_rgb(const IndependentComponent& ic, std::size_t k) {
    if (k >= ic.dims.n_slices) throw std::out_of_range("slice index out of range");
    const auto tmpl = anatomy_template(ic.dims);
    const std::size_t n = ic.dims.slice_size();
    const float peak = ic.max_activation();
    const auto s = ic.slice(k);
    std::vector<std::uint8_t> rgb(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const float gray = tmpl[k * n + i] > 0.5f ? kTissueGray : 0.0f;
        float a = peak > 0.0f ? std::clamp(s[i] / peak, 0.0f, 1.0f) : 0.0f;
        if (a < kOverlayFloor) a = 0.0f;
        rgb[3 * i + 0] = static_cast<std::uint8_t>(std::lround((1.0f - a) * gray + a * 255.0f));
        rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround((1.0f - a) * gray));
        rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround((1.0f - a) * gray));
    }
    return rgb;
}

inline std::string render_slice_png(const IndependentComponent& ic, std::size_t k) {
    return encode_png_rgb(ic.dims.width, ic.dims.height, render_slice_rgb(ic, k));
}

}  // namespace deepxsoz
