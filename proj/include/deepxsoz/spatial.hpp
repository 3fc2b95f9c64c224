#pragma once
// Spatial expert features: active-voxel masks, per-slice DBSCAN cluster
// counting, Sobel contour geometry (white-matter band, ventricle regions) and
// the count of large clusters that overlap white matter and reach a ventricle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <tuple>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "anatomy.hpp"
#include "icdata.hpp"

namespace deepxsoz::spatial {

enum class ThresholdMode { Absolute, RelativeToMax };

struct SpatialParams {
    ThresholdMode threshold_mode = ThresholdMode::RelativeToMax;
    double activation_threshold = 0.6;  // fraction of the IC maximum in RelativeToMax mode
    double eps = 1.5;
    int vmin = 3;
    int large_cluster_px = 135;
    double sobel_edge_threshold = 1.0;
    double wm_band_width = 2.0;  // voxels, at 64x64

    // Defaults are tuned for 64x64 slices; this rescales the pixel-count
    // threshold by area and the band width linearly.
    static SpatialParams scaled_for(const SliceDims& dims) {
        SpatialParams p;
        const double lin = std::min(dims.height, dims.width) / 64.0;
        p.large_cluster_px = std::max(1, static_cast<int>(std::lround(135.0 * dims.height * dims.width / (64.0 * 64.0))));
        p.wm_band_width = std::max(1.0, 2.0 * lin);
        return p;
    }

    void validate() const {
        if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
        if (vmin < 1) throw std::invalid_argument("vmin must be >= 1");
        if (large_cluster_px < 1) throw std::invalid_argument("large_cluster_px must be >= 1");
        if (!(wm_band_width >= 0.0)) throw std::invalid_argument("wm_band_width must be >= 0");
    }
};

struct Voxel {
    int row = 0;
    int col = 0;
    friend auto operator<=>(const Voxel&, const Voxel&) = default;
};

inline double distance2(const Voxel& a, const Voxel& b) {
    const double dr = a.row - b.row, dc = a.col - b.col;
    return dr * dr + dc * dc;
}

struct SliceMask {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> bits;

    SliceMask() = default;
    SliceMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}
    bool at(int r, int c) const {
        return r >= 0 && c >= 0 && static_cast<std::size_t>(r) < height && static_cast<std::size_t>(c) < width &&
               bits[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] != 0;
    }
    void set(int r, int c, bool v = true) { bits[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] = v ? 1 : 0; }
    std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
    std::vector<Voxel> voxels() const {
        std::vector<Voxel> out;
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c)
                if (bits[r * width + c]) out.push_back({static_cast<int>(r), static_cast<int>(c)});
        return out;
    }
};

struct BoundingBox {
    int row_min = 0, col_min = 0, row_max = 0, col_max = 0;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Cluster {
    std::vector<Voxel> voxels;  // sorted by (row, col)
    BoundingBox bbox;
    std::size_t size() const { return voxels.size(); }
    friend bool operator==(const Cluster& a, const Cluster& b) { return a.voxels == b.voxels; }
};

using SliceClustering = std::vector<std::vector<Cluster>>;

// --- slice extraction --------------------------------------------------------

inline double absolute_threshold(const IndependentComponent& ic, const SpatialParams& params) {
    return params.threshold_mode == ThresholdMode::Absolute
               ? params.activation_threshold
               : params.activation_threshold * static_cast<double>(ic.max_activation());
}

inline std::vector<SliceMask> extract_brain_slices(const IndependentComponent& ic, const SpatialParams& params) {
    const double thr = absolute_threshold(ic, params);
    std::vector<SliceMask> masks;
    masks.reserve(ic.dims.n_slices);
    for (std::size_t k = 0; k < ic.dims.n_slices; ++k) {
        SliceMask m(ic.dims.height, ic.dims.width);
        const auto s = ic.slice(k);
        // An all-zero IC in relative mode must not mark every voxel active.
        const bool degenerate = params.threshold_mode == ThresholdMode::RelativeToMax && thr <= 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) m.bits[i] = (!degenerate && s[i] >= thr) ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

// --- DBSCAN ------------------------------------------------------------------

namespace detail {

inline std::vector<Voxel> neighbour_offsets(double eps) {
    std::vector<Voxel> offs;
    const int reach = static_cast<int>(std::floor(eps));
    for (int dr = -reach; dr <= reach; ++dr)
        for (int dc = -reach; dc <= reach; ++dc)
            if ((dr != 0 || dc != 0) && dr * dr + dc * dc <= eps * eps) offs.push_back({dr, dc});
    return offs;
}

inline BoundingBox bbox_of(const std::vector<Voxel>& vs) {
    BoundingBox b{vs.front().row, vs.front().col, vs.front().row, vs.front().col};
    for (const auto& v : vs) {
        b.row_min = std::min(b.row_min, v.row);
        b.row_max = std::max(b.row_max, v.row);
        b.col_min = std::min(b.col_min, v.col);
        b.col_max = std::max(b.col_max, v.col);
    }
    return b;
}

// Sorts voxels within clusters and clusters by their first voxel.
inline std::vector<Cluster> canonical(std::vector<std::vector<Voxel>> groups) {
    std::vector<Cluster> out;
    for (auto& g : groups) {
        if (g.empty()) continue;
        std::sort(g.begin(), g.end());
        Cluster c;
        c.bbox = bbox_of(g);
        c.voxels = std::move(g);
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Cluster& a, const Cluster& b) { return a.voxels.front() < b.voxels.front(); });
    return out;
}

}  // namespace detail

// Core points have more than `vmin` other points within `eps` (Euclidean).
// Core points within eps of each other share a cluster; a border point joins
// the cluster of its nearest core point (ties: lowest (row, col) core).
// Everything else is discarded. Duplicate coordinates are collapsed.
inline std::vector<Cluster> dbscan_points(std::vector<Voxel> points, double eps, int vmin) {
    if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be > 0");
    if (vmin < 1) throw std::invalid_argument("dbscan: vmin must be >= 1");
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.empty()) return {};

    const BoundingBox bb = detail::bbox_of(points);
    const int gh = bb.row_max - bb.row_min + 1, gw = bb.col_max - bb.col_min + 1;
    std::vector<int> grid(static_cast<std::size_t>(gh) * static_cast<std::size_t>(gw), -1);
    auto cell = [&](int r, int c) -> int {
        if (r < bb.row_min || r > bb.row_max || c < bb.col_min || c > bb.col_max) return -1;
        return grid[static_cast<std::size_t>(r - bb.row_min) * static_cast<std::size_t>(gw) + static_cast<std::size_t>(c - bb.col_min)];
    };
    for (std::size_t i = 0; i < points.size(); ++i)
        grid[static_cast<std::size_t>(points[i].row - bb.row_min) * static_cast<std::size_t>(gw) +
             static_cast<std::size_t>(points[i].col - bb.col_min)] = static_cast<int>(i);

    const auto offsets = detail::neighbour_offsets(eps);
    const std::size_t n = points.size();
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        int count = 0;
        for (const auto& o : offsets)
            if (cell(points[i].row + o.row, points[i].col + o.col) >= 0) ++count;
        core[i] = count > vmin ? 1 : 0;
    }

    // Connected components of core points.
    std::vector<int> label(n, -1);
    int n_clusters = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!core[seed] || label[seed] >= 0) continue;
        label[seed] = n_clusters;
        stack.assign(1, seed);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            for (const auto& o : offsets) {
                const int j = cell(points[i].row + o.row, points[i].col + o.col);
                if (j >= 0 && core[static_cast<std::size_t>(j)] && label[static_cast<std::size_t>(j)] < 0) {
                    label[static_cast<std::size_t>(j)] = n_clusters;
                    stack.push_back(static_cast<std::size_t>(j));
                }
            }
        }
        ++n_clusters;
    }

    // Border points.
    std::vector<int> border_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = -1;
        for (const auto& o : offsets) {
            const int j = cell(points[i].row + o.row, points[i].col + o.col);
            if (j < 0 || !core[static_cast<std::size_t>(j)]) continue;
            if (best < 0) {
                best = j;
                continue;
            }
            const double dj = distance2(points[i], points[static_cast<std::size_t>(j)]);
            const double db = distance2(points[i], points[static_cast<std::size_t>(best)]);
            if (dj < db || (dj == db && points[static_cast<std::size_t>(j)] < points[static_cast<std::size_t>(best)])) best = j;
        }
        if (best >= 0) border_label[i] = label[static_cast<std::size_t>(best)];
    }

    std::vector<std::vector<Voxel>> groups(static_cast<std::size_t>(n_clusters));
    for (std::size_t i = 0; i < n; ++i) {
        const int l = core[i] ? label[i] : border_label[i];
        if (l >= 0) groups[static_cast<std::size_t>(l)].push_back(points[i]);
    }
    return detail::canonical(std::move(groups));
}

inline std::vector<Cluster> dbscan_clusters(const SliceMask& mask, double eps, int vmin) {
    return dbscan_points(mask.voxels(), eps, vmin);
}

// --- Sobel contours and brain geometry -------------------------------------

// Gradient magnitude with the standard 3x3 Sobel kernels; image borders are
// replicated.
template <typename T>
std::vector<double> sobel_magnitude(const Grid2D<const T>& img) {
    const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
    auto px = [&](int r, int c) -> double {
        r = std::clamp(r, 0, H - 1);
        c = std::clamp(c, 0, W - 1);
        return static_cast<double>(img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
    };
    std::vector<double> mag(img.height * img.width, 0.0);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            mag[static_cast<std::size_t>(r) * img.width + static_cast<std::size_t>(c)] = std::hypot(gx, gy);
        }
    return mag;
}

struct SliceGeometry {
    std::vector<std::vector<Voxel>> contours;  // largest first
    SliceMask white_matter;
    SliceMask ventricles;
};

using BrainGeometry = std::vector<SliceGeometry>;

namespace detail {

using BgPoint = boost::geometry::model::d2::point_xy<double>;
using BgPolygon = boost::geometry::model::polygon<BgPoint>;

inline BgPolygon convex_hull(const std::vector<Voxel>& pts) {
    boost::geometry::model::multi_point<BgPoint> mp;
    for (const auto& v : pts) mp.emplace_back(static_cast<double>(v.col), static_cast<double>(v.row));
    BgPolygon hull;
    boost::geometry::convex_hull(mp, hull);
    return hull;
}

inline bool in_hull(const BgPolygon& hull, int row, int col) {
    return boost::geometry::covered_by(BgPoint(static_cast<double>(col), static_cast<double>(row)), hull);
}

}  // namespace detail

// Edge pixels are Sobel magnitudes above the threshold; contours are their
// 8-connected components. The longest contour anchors the white-matter band;
// slices with more than one contour get ventricle regions: voxels inside the
// convex hull of a secondary contour that lie on no contour.
template <typename T>
SliceGeometry detect_geometry(const Grid2D<const T>& slice, const SpatialParams& params) {
    if (slice.height < 8 || slice.width < 8) throw std::invalid_argument("detect_geometry: slice must be >= 8x8");
    const auto mag = sobel_magnitude(slice);
    SliceMask edges(slice.height, slice.width);
    for (std::size_t i = 0; i < mag.size(); ++i) edges.bits[i] = mag[i] > params.sobel_edge_threshold ? 1 : 0;

    SliceGeometry g;
    g.white_matter = SliceMask(slice.height, slice.width);
    g.ventricles = SliceMask(slice.height, slice.width);

    // 8-connected components of edge pixels.
    SliceMask seen(slice.height, slice.width);
    for (const auto& start : edges.voxels()) {
        if (seen.at(start.row, start.col)) continue;
        std::vector<Voxel> comp, stack{start};
        seen.set(start.row, start.col);
        while (!stack.empty()) {
            const Voxel v = stack.back();
            stack.pop_back();
            comp.push_back(v);
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int r = v.row + dr, c = v.col + dc;
                    if (edges.at(r, c) && !seen.at(r, c)) {
                        seen.set(r, c);
                        stack.push_back({r, c});
                    }
                }
        }
        std::sort(comp.begin(), comp.end());
        g.contours.push_back(std::move(comp));
    }
    std::stable_sort(g.contours.begin(), g.contours.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    if (g.contours.empty()) return g;

    const auto& principal = g.contours.front();
    const double band2 = params.wm_band_width * params.wm_band_width;
    const int reach = static_cast<int>(std::ceil(params.wm_band_width));
    for (const auto& v : principal)
        for (int dr = -reach; dr <= reach; ++dr)
            for (int dc = -reach; dc <= reach; ++dc) {
                const int r = v.row + dr, c = v.col + dc;
                if (r < 0 || c < 0 || r >= static_cast<int>(slice.height) || c >= static_cast<int>(slice.width)) continue;
                if (dr * dr + dc * dc <= band2) g.white_matter.set(r, c);
            }

    if (g.contours.size() > 1) {
        const auto outer = detail::convex_hull(principal);
        for (std::size_t i = 1; i < g.contours.size(); ++i) {
            const auto hull = detail::convex_hull(g.contours[i]);
            const BoundingBox bb = detail::bbox_of(g.contours[i]);
            for (int r = bb.row_min; r <= bb.row_max; ++r)
                for (int c = bb.col_min; c <= bb.col_max; ++c)
                    if (!edges.at(r, c) && detail::in_hull(hull, r, c) && detail::in_hull(outer, r, c)) g.ventricles.set(r, c);
        }
    }
    return g;
}

inline BrainGeometry compute_brain_geometry(const SliceDims& dims, const SpatialParams& params) {
    const auto tmpl = anatomy_template(dims);
    BrainGeometry geom;
    geom.reserve(dims.n_slices);
    for (std::size_t k = 0; k < dims.n_slices; ++k) {
        Grid2D<const float> g{std::span<const float>(tmpl).subspan(k * dims.slice_size(), dims.slice_size()), dims.height,
                              dims.width};
        geom.push_back(detect_geometry(g, params));
    }
    return geom;
}

// Geometry depends only on slice dims and the edge/band parameters, so it is
// computed once per key and shared.
inline std::shared_ptr<const BrainGeometry> brain_geometry(const SliceDims& dims, const SpatialParams& params) {
    using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, double, double>;
    static std::mutex mu;
    static std::map<Key, std::shared_ptr<const BrainGeometry>> cache;
    const Key key{dims.n_slices, dims.height, dims.width, params.sobel_edge_threshold, params.wm_band_width};
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it == cache.end())
        it = cache.emplace(key, std::make_shared<const BrainGeometry>(compute_brain_geometry(dims, params))).first;
    return it->second;
}

// --- overlap counting --------------------------------------------------------

// Clusters larger than `large_cluster_px` that intersect the white-matter band
// and either intersect the ventricle region or come within `eps` of it.
inline int white_matter_overlap_count(const std::vector<Cluster>& clusters, const SliceGeometry& geom, int large_cluster_px,
                                      double eps) {
    const auto offsets = detail::neighbour_offsets(eps);
    int count = 0;
    for (const auto& cl : clusters) {
        if (cl.size() <= static_cast<std::size_t>(large_cluster_px)) continue;
        bool in_wm = false, near_vent = false;
        for (const auto& v : cl.voxels) {
            in_wm = in_wm || geom.white_matter.at(v.row, v.col);
            if (!near_vent) {
                near_vent = geom.ventricles.at(v.row, v.col);
                for (std::size_t o = 0; o < offsets.size() && !near_vent; ++o)
                    near_vent = geom.ventricles.at(v.row + offsets[o].row, v.col + offsets[o].col);
            }
            if (in_wm && near_vent) break;
        }
        if (in_wm && near_vent) ++count;
    }
    return count;
}

inline int white_matter_overlap_count(const SliceClustering& clustering, const BrainGeometry& geom, int large_cluster_px,
                                      double eps) {
    if (clustering.size() != geom.size()) throw std::invalid_argument("clustering and geometry slice counts differ");
    int total = 0;
    for (std::size_t k = 0; k < clustering.size(); ++k)
        total += white_matter_overlap_count(clustering[k], geom[k], large_cluster_px, eps);
    return total;
}

struct SpatialFeatures {
    int n_clusters = 0;  // max per-slice cluster count
    int wm_overlap = 0;  // summed over slices
    friend bool operator==(const SpatialFeatures&, const SpatialFeatures&) = default;
};

inline SliceClustering cluster_slices(const IndependentComponent& ic, const SpatialParams& params) {
    SliceClustering out;
    for (const auto& m : extract_brain_slices(ic, params)) out.push_back(dbscan_clusters(m, params.eps, params.vmin));
    return out;
}

inline SpatialFeatures spatial_features(const IndependentComponent& ic, const SpatialParams& params) {
    params.validate();
    const auto clustering = cluster_slices(ic, params);
    const auto geom = brain_geometry(ic.dims, params);
    SpatialFeatures f;
    for (const auto& s : clustering) f.n_clusters = std::max(f.n_clusters, static_cast<int>(s.size()));
    f.wm_overlap = white_matter_overlap_count(clustering, *geom, params.large_cluster_px, params.eps);
    return f;
}

}  // namespace deepxsoz::spatial
