#pragma once
// Renders an IC's slice stack into a single grayscale "IC image" and resizes
// it to the network input shape.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "icdata.hpp"

namespace deepxsoz {

struct Image {
    std::size_t height = 0, width = 0;
    std::vector<float> pixels;  // row-major, one channel
};

// Slices tiled row-major on a ceil(sqrt(S))-column grid, unused tiles left
// black, intensities divided by the IC maximum and clamped to [0,1].
inline Image render_montage(const IndependentComponent& ic) {
    const auto& d = ic.dims;
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d.n_slices))));
    const std::size_t rows = (d.n_slices + cols - 1) / cols;
    Image img{rows * d.height, cols * d.width, {}};
    img.pixels.assign(img.height * img.width, 0.0f);
    const float peak = ic.max_activation();
    const float inv = peak > 0.0f ? 1.0f / peak : 0.0f;
    for (std::size_t k = 0; k < d.n_slices; ++k) {
        const std::size_t oy = (k / cols) * d.height, ox = (k % cols) * d.width;
        const auto s = ic.slice(k);
        for (std::size_t r = 0; r < d.height; ++r)
            for (std::size_t c = 0; c < d.width; ++c)
                img.pixels[(oy + r) * img.width + ox + c] = std::clamp(s[r * d.width + c] * inv, 0.0f, 1.0f);
    }
    return img;
}

namespace detail {

struct FilterTaps {
    std::size_t first = 0;
    std::vector<double> weights;
};

// Triangle-filter taps per output sample; the support widens by the
// downscale factor so shrinking averages instead of aliasing.
inline std::vector<FilterTaps> triangle_taps(std::size_t in, std::size_t out) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double support = std::max(scale, 1.0);
    std::vector<FilterTaps> taps(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * scale;
        const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support));
        const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support));
        const std::size_t first = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
        const std::size_t last = std::min(in, static_cast<std::size_t>(std::max<std::ptrdiff_t>(hi, 0)));
        double total = 0.0;
        std::vector<double> w;
        for (std::size_t j = first; j < last; ++j) {
            const double x = std::abs((static_cast<double>(j) + 0.5 - center) / support);
            const double v = std::max(0.0, 1.0 - x);
            w.push_back(v);
            total += v;
        }
        if (total > 0.0)
            for (auto& v : w) v /= total;
        taps[i] = {first, std::move(w)};
    }
    return taps;
}

}  // namespace detail

// Separable bilinear resize with antialiasing when downscaling.
inline Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
    if (src.height == 0 || src.width == 0 || out_h == 0 || out_w == 0)
        throw std::invalid_argument("resize_bilinear: empty image or target");
    const auto ty = detail::triangle_taps(src.height, out_h);
    const auto tx = detail::triangle_taps(src.width, out_w);
    std::vector<double> tmp(src.height * out_w, 0.0);
    for (std::size_t r = 0; r < src.height; ++r)
        for (std::size_t c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < tx[c].weights.size(); ++j)
                acc += tx[c].weights[j] * src.pixels[r * src.width + tx[c].first + j];
            tmp[r * out_w + c] = acc;
        }
    Image out{out_h, out_w, std::vector<float>(out_h * out_w)};
    for (std::size_t r = 0; r < out_h; ++r)
        for (std::size_t c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ty[r].weights.size(); ++j) acc += ty[r].weights[j] * tmp[(ty[r].first + j) * out_w + c];
            out.pixels[r * out_w + c] = static_cast<float>(acc);
        }
    return out;
}

// Network input for one IC: montage resized to height x width, replicated
// across `channels`, channel-major.
inline std::vector<float> ic_image(const IndependentComponent& ic, std::size_t height, std::size_t width, std::size_t channels) {
    const Image small = resize_bilinear(render_montage(ic), height, width);
    std::vector<float> out;
    out.reserve(channels * small.pixels.size());
    for (std::size_t c = 0; c < channels; ++c) out.insert(out.end(), small.pixels.begin(), small.pixels.end());
    return out;
}

}  // namespace deepxsoz
