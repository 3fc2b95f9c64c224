#pragma once
// The five expert-rule features of one IC.

#include <array>
#include <string_view>

#include "spatial.hpp"
#include "temporal.hpp"

namespace deepxsoz {

inline constexpr std::size_t kFeatureCount = 5;
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "n_clusters", "wm_overlap", "activelet_gini", "sine_gini", "hf_dominant"};

struct FeatureVector {
    double n_clusters = 0;
    double wm_overlap = 0;
    double activelet_gini = 0;
    double sine_gini = 0;
    double hf_dominant = 0;

    std::array<double, kFeatureCount> values() const { return {n_clusters, wm_overlap, activelet_gini, sine_gini, hf_dominant}; }

    static FeatureVector from(const spatial::SpatialFeatures& s, const temporal::TemporalFeatures& t) {
        return {static_cast<double>(s.n_clusters), static_cast<double>(s.wm_overlap), t.activelet_gini, t.sine_gini,
                t.hf_dominant ? 1.0 : 0.0};
    }

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct FeatureParams {
    spatial::SpatialParams spatial;
    temporal::TemporalParams temporal;
    // Rescale pixel-count spatial thresholds to the IC's slice size.
    bool scale_spatial_to_dims = true;
};

inline FeatureVector extract_features(const IndependentComponent& ic, const FeatureParams& params) {
    spatial::SpatialParams sp = params.spatial;
    if (params.scale_spatial_to_dims) {
        const auto scaled = spatial::SpatialParams::scaled_for(ic.dims);
        sp.large_cluster_px = static_cast<int>(std::lround(sp.large_cluster_px * (scaled.large_cluster_px / 135.0)));
        sp.large_cluster_px = std::max(1, sp.large_cluster_px);
        sp.wm_band_width = sp.wm_band_width * (scaled.wm_band_width / 2.0);
    }
    return FeatureVector::from(spatial::spatial_features(ic, sp), temporal::temporal_features(ic, params.temporal));
}

}  // namespace deepxsoz
