#pragma once
// Synthetic slice anatomy shared by the cohort generator and the review
// renderer: an elliptical brain per slice with two interior ventricles on the
// middle slices. The anatomical template image is a deterministic function of
// the slice dimensions, so it never needs to be persisted.

#include <algorithm>
#include <cmath>
#include <vector>

#include "icdata.hpp"

namespace deepxsoz {

struct Ellipse {
    double cy = 0, cx = 0, ry = 1, rx = 1;

    // Normalised radius; <= 1 inside the ellipse.
    double rho(double y, double x) const {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        return std::sqrt(dy * dy + dx * dx);
    }
    bool contains(double y, double x) const { return rho(y, x) <= 1.0; }
    double max_radius() const { return std::max(ry, rx); }
};

struct SliceAnatomy {
    Ellipse brain;
    std::vector<Ellipse> ventricles;  // empty on outer slices
};

inline constexpr std::uint32_t kMinSliceSide = 16;

inline std::vector<SliceAnatomy> slice_anatomy(const SliceDims& dims) {
    if (dims.height < kMinSliceSide || dims.width < kMinSliceSide)
        throw std::invalid_argument("slice dims too small for brain geometry (need >= 16x16)");
    const double H = dims.height, W = dims.width;
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    const std::size_t S = dims.n_slices;
    const double half = std::max(1.0, (static_cast<double>(S) - 1) / 2.0);
    const std::size_t v_lo = S / 4, v_hi = (3 * S + 3) / 4;

    const double vent_rx = std::max(0.05 * W, 2.2);
    const double vent_ry = std::max(0.11 * H, 3.0);
    const double vent_off = std::max(0.09 * W, vent_rx + 2.5);

    std::vector<SliceAnatomy> out(S);
    for (std::size_t k = 0; k < S; ++k) {
        const double z = (static_cast<double>(k) - (static_cast<double>(S) - 1) / 2.0) / half;
        const double scale = std::sqrt(1.0 - 0.5 * z * z);
        out[k].brain = {cy, cx, 0.40 * H * scale, 0.34 * W * scale};
        if (S < 3 || (k >= v_lo && k < v_hi)) {
            out[k].ventricles.push_back({cy, cx - vent_off, vent_ry, vent_rx});
            out[k].ventricles.push_back({cy, cx + vent_off, vent_ry, vent_rx});
        }
    }
    return out;
}

// Template intensity: 1 inside the brain, 0 in background and ventricles.
inline std::vector<float> anatomy_template(const SliceDims& dims) {
    const auto anatomy = slice_anatomy(dims);
    std::vector<float> img(dims.voxel_count(), 0.0f);
    for (std::size_t k = 0; k < dims.n_slices; ++k) {
        const auto& a = anatomy[k];
        for (std::size_t r = 0; r < dims.height; ++r)
            for (std::size_t c = 0; c < dims.width; ++c) {
                const double y = static_cast<double>(r), x = static_cast<double>(c);
                bool inside = a.brain.contains(y, x);
                for (const auto& v : a.ventricles)
                    if (v.contains(y, x)) inside = false;
                img[k * dims.slice_size() + r * dims.width + c] = inside ? 1.0f : 0.0f;
            }
    }
    return img;
}

}  // namespace deepxsoz
