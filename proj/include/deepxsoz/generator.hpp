#pragma once
// Seeded synthetic cohort generator. Each class has an archetype:
//   SOZ   - one large cluster running from the brain rim through to a
//           ventricle on a few middle slices; BOLD dominated by an
//           oscillation above 0.073 Hz with irregular bursts.
//   RSN   - 2..6 compact clusters away from the ventricles; smooth
//           low-frequency BOLD (a minority peak above the cutoff).
//   Noise - speckle, rim or stripe artifacts; spiky broadband BOLD.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "anatomy.hpp"
#include "icdata.hpp"

namespace deepxsoz {

inline void validate(const GeneratorParams& p) {
    const auto& m = p.class_mix;
    for (double f : {m.noise, m.rsn, m.soz})
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("class_mix fractions must lie in [0,1]");
    if (std::abs(m.noise + m.rsn + m.soz - 1.0) > 1e-9) throw std::invalid_argument("class_mix must sum to 1");
    if (p.n_patients < 1) throw std::invalid_argument("n_patients must be >= 1");
    if (p.ics_per_patient < 1) throw std::invalid_argument("ics_per_patient must be >= 1");
    if (m.soz > 0.0 && p.ics_per_patient < 2) throw std::invalid_argument("need >= 2 ICs per patient with SOZ");
    if (p.slice_dims.n_slices < 1) throw std::invalid_argument("n_slices must be >= 1");
    if (p.slice_dims.height < kMinSliceSide || p.slice_dims.width < kMinSliceSide)
        throw std::invalid_argument("slice dims too small for brain ellipse + ventricles (need >= 16x16)");
    if (!(p.tr_seconds > 0.0)) throw std::invalid_argument("tr_seconds must be positive");
    if (p.bold_len < 8) throw std::invalid_argument("bold_len too short");
}

struct ClassCounts {
    std::uint32_t noise = 0, rsn = 0, soz = 0;
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// Largest-remainder rounding of the class mix; a positive SOZ fraction always
// yields at least one SOZ IC (taken from the largest other class).
inline ClassCounts class_counts(const ClassMix& mix, std::uint32_t total) {
    const std::array<double, 3> exact{mix.noise * total, mix.rsn * total, mix.soz * total};
    std::array<std::uint32_t, 3> n{};
    std::uint32_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        n[i] = static_cast<std::uint32_t>(std::floor(exact[i] + 1e-9));
        assigned += n[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (exact[a] - n[a]) > (exact[b] - n[b]);
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) n[order[i % 3]] += 1;
    if (mix.soz > 0.0 && n[2] == 0) {
        std::size_t donor = n[0] >= n[1] ? 0 : 1;
        n[donor] -= 1;
        n[2] = 1;
    }
    return {n[0], n[1], n[2]};
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::string zero_pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

}  // namespace detail

inline std::uint64_t patient_seed(std::uint64_t cohort_seed, std::size_t index) {
    return detail::splitmix64(cohort_seed ^ detail::splitmix64(0xD1B54A32D192ED03ULL + index));
}

inline std::string patient_id_for(std::size_t index, std::size_t n_patients) {
    return "p" + detail::zero_pad(index + 1, n_patients >= 1000 ? 4 : 3);
}

inline std::string ic_id_for(const std::string& patient_id, std::size_t index) {
    return patient_id + "_ic" + detail::zero_pad(index, 3);
}

// Archetype renderers. Exposed so tests can build controlled fixtures.
class ArchetypeRenderer {
public:
    using Rng = std::mt19937_64;

    ArchetypeRenderer(const SliceDims& dims, double tr_seconds, std::uint32_t bold_len)
        : dims_(dims), tr_(tr_seconds), bold_len_(bold_len), anatomy_(slice_anatomy(dims)) {}

    const std::vector<SliceAnatomy>& anatomy() const { return anatomy_; }
    const SliceDims& dims() const { return dims_; }

    std::vector<std::size_t> ventricle_slices() const {
        std::vector<std::size_t> ks;
        for (std::size_t k = 0; k < anatomy_.size(); ++k)
            if (!anatomy_[k].ventricles.empty()) ks.push_back(k);
        return ks;
    }

    // --- spatial maps --------------------------------------------------------

    std::vector<float> soz_map(Rng& rng) const {
        auto img = background(rng, 0.03);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const auto vks = ventricle_slices();
        const std::size_t slab = std::min<std::size_t>(vks.size(), 3 + static_cast<std::size_t>(U(rng) * 3));
        const std::size_t start = static_cast<std::size_t>(U(rng) * static_cast<double>(vks.size() - slab + 1));
        const int side = U(rng) < 0.5 ? 0 : 1;
        const double angle = (U(rng) - 0.5) * (70.0 * std::numbers::pi / 180.0);
        const double radius = 0.065 * std::min(dims_.height, dims_.width);
        const float level = static_cast<float>(0.85 + 0.1 * U(rng));
        for (std::size_t s = 0; s < slab; ++s) {
            const std::size_t k = vks[std::min(start + s, vks.size() - 1)];
            const auto& a = anatomy_[k];
            const Ellipse& v = a.ventricles[static_cast<std::size_t>(side)];
            const double dir = side == 0 ? std::numbers::pi - angle : angle;
            // End point: just inside the brain boundary along `dir` from the ventricle centre.
            double t = 0.0;
            while (a.brain.rho(v.cy + (t + 0.5) * std::sin(dir), v.cx + (t + 0.5) * std::cos(dir)) < 0.97) t += 0.5;
            const double ey = v.cy + t * std::sin(dir), ex = v.cx + t * std::cos(dir);
            paint_capsule(img, k, v.cy, v.cx, ey, ex, radius, level, rng);
        }
        return img;
    }

    // `coplanar` places every cluster on a shared slab of slices; otherwise
    // each cluster gets its own slab.
    std::vector<float> rsn_map(Rng& rng, int n_clusters, bool coplanar) const {
        auto img = background(rng, 0.03);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const double side = std::min(dims_.height, dims_.width);
        const std::size_t S = dims_.n_slices;
        const std::size_t ref_k = S / 2;
        const auto& ref = anatomy_[ref_k];
        std::vector<std::array<double, 3>> placed;  // cy, cx, r on the reference slice
        auto slab_for = [&](std::size_t& start, std::size_t& len) {
            len = std::min<std::size_t>(S, 2 + static_cast<std::size_t>(U(rng) * 3));
            start = static_cast<std::size_t>(U(rng) * static_cast<double>(S - len + 1));
        };
        std::size_t shared_start = 0, shared_len = 0;
        slab_for(shared_start, shared_len);
        // Margins are tuned at 64x64 and shrink with smaller slices.
        const double vent_margin = std::max(1.0, 3.5 * side / 64.0), gap = std::max(1.0, 3.0 * side / 64.0);
        for (int c = 0; c < n_clusters; ++c) {
            double cy = 0, cx = 0, r = 0;
            bool ok = false;
            for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
                r = side * (0.04 + 0.03 * U(rng));
                const double rho = 0.35 + 0.45 * U(rng);
                const double th = 2.0 * std::numbers::pi * U(rng);
                cy = ref.brain.cy + rho * ref.brain.ry * std::sin(th);
                cx = ref.brain.cx + rho * ref.brain.rx * std::cos(th);
                ok = true;
                // Stay clear of every ventricle (inflated by radius + margin) and of other clusters.
                for (const auto& a : anatomy_)
                    for (const auto& v : a.ventricles) {
                        const Ellipse grown{v.cy, v.cx, v.ry + r + vent_margin, v.rx + r + vent_margin};
                        if (grown.contains(cy, cx)) ok = false;
                    }
                for (const auto& p : placed)
                    if (std::hypot(cy - p[0], cx - p[1]) < r + p[2] + gap) ok = false;
            }
            if (!ok && c >= 2) break;  // crowded slices keep the clusters placed so far
            if (!ok) throw std::runtime_error("could not place RSN cluster away from the ventricles");
            placed.push_back({cy, cx, r});
            std::size_t start = shared_start, len = shared_len;
            if (!coplanar) slab_for(start, len);
            const float level = static_cast<float>(0.8 + 0.2 * U(rng));
            for (std::size_t k = start; k < start + len; ++k) {
                // Keep clusters inside the (possibly smaller) outer slices.
                const auto& b = anatomy_[k].brain;
                const double sy = (cy - ref.brain.cy) * b.ry / ref.brain.ry + b.cy;
                const double sx = (cx - ref.brain.cx) * b.rx / ref.brain.rx + b.cx;
                paint_capsule(img, k, sy, sx, sy, sx, r, level, rng);
            }
        }
        return img;
    }

    enum class NoiseKind { Speckle, Rim, Stripe };

    std::vector<float> noise_map(Rng& rng, NoiseKind kind) const {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        auto img = background(rng, 0.03);
        const std::size_t H = dims_.height, W = dims_.width;
        auto speckle = [&](double density, double lo) {
            for (auto& v : img)
                if (U(rng) < density) v = static_cast<float>(lo + (1.0 - lo) * U(rng));
        };
        switch (kind) {
            case NoiseKind::Speckle: speckle(0.06 + 0.06 * U(rng), 0.2); break;
            case NoiseKind::Rim: {
                speckle(0.02, 0.2);
                const double inner = 0.93 + 0.03 * U(rng), outer = 1.04 + 0.05 * U(rng);
                for (std::size_t k = 0; k < dims_.n_slices; ++k)
                    for (std::size_t r = 0; r < H; ++r)
                        for (std::size_t c = 0; c < W; ++c) {
                            const double rho = anatomy_[k].brain.rho(static_cast<double>(r), static_cast<double>(c));
                            if (rho >= inner && rho <= outer)
                                img[k * dims_.slice_size() + r * W + c] = static_cast<float>(0.7 + 0.3 * U(rng));
                        }
                break;
            }
            case NoiseKind::Stripe: {
                speckle(0.02, 0.2);
                const bool vertical = U(rng) < 0.5;
                const int n_stripes = 2 + static_cast<int>(U(rng) * 3);
                const std::size_t span = vertical ? W : H;
                for (int s = 0; s < n_stripes; ++s) {
                    const std::size_t pos = static_cast<std::size_t>(U(rng) * static_cast<double>(span - 1));
                    const float level = static_cast<float>(0.6 + 0.4 * U(rng));
                    for (std::size_t k = 0; k < dims_.n_slices; ++k) {
                        if (U(rng) < 0.3) continue;
                        for (std::size_t t = 0; t < (vertical ? H : W); ++t) {
                            const std::size_t r = vertical ? t : pos, c = vertical ? pos : t;
                            img[k * dims_.slice_size() + r * W + c] = level;
                        }
                    }
                }
                break;
            }
        }
        return img;
    }

    // --- BOLD time courses ---------------------------------------------------

    std::vector<float> soz_bold(Rng& rng) const {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::normal_distribution<double> N(0.0, 1.0);
        std::vector<double> x(bold_len_, 0.0);
        add_sine(x, 0.080 + 0.015 * U(rng), 1.0, 2 * std::numbers::pi * U(rng));
        const int n_bursts = 3 + static_cast<int>(U(rng) * 5);
        for (int b = 0; b < n_bursts; ++b) {
            const std::size_t t0 = static_cast<std::size_t>(U(rng) * (bold_len_ - 1));
            const double amp = (1.5 + 1.5 * U(rng)) * (U(rng) < 0.5 ? -1.0 : 1.0);
            for (std::size_t t = t0; t < std::min<std::size_t>(bold_len_, t0 + 6); ++t)
                x[t] += amp * std::exp(-static_cast<double>(t - t0) / 1.5);
        }
        for (auto& v : x) v += 0.15 * N(rng);
        return to_float(x);
    }

    std::vector<float> rsn_bold(Rng& rng, double hf_probability = 0.2) const {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::normal_distribution<double> N(0.0, 1.0);
        std::vector<double> x(bold_len_, 0.0);
        const bool hf = U(rng) < hf_probability;
        const double f_dom = hf ? 0.078 + 0.017 * U(rng) : 0.012 + 0.048 * U(rng);
        add_sine(x, f_dom, 1.0, 2 * std::numbers::pi * U(rng));
        const int extra = 1 + static_cast<int>(U(rng) * 2);
        for (int i = 0; i < extra; ++i)
            add_sine(x, 0.01 + 0.05 * U(rng), 0.3 + 0.3 * U(rng), 2 * std::numbers::pi * U(rng));
        for (auto& v : x) v += 0.15 * N(rng);
        return to_float(x);
    }

    std::vector<float> noise_bold(Rng& rng) const {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::normal_distribution<double> N(0.0, 1.0);
        std::vector<double> x(bold_len_, 0.0);
        const double drift = (U(rng) - 0.5) * 2.0 / bold_len_;
        for (std::size_t t = 0; t < bold_len_; ++t) x[t] = N(rng) + drift * static_cast<double>(t);
        const int n_spikes = 2 + static_cast<int>(U(rng) * 5);
        for (int s = 0; s < n_spikes; ++s)
            x[static_cast<std::size_t>(U(rng) * (bold_len_ - 1))] += (3.0 + 3.0 * U(rng)) * (U(rng) < 0.5 ? -1 : 1);
        return to_float(x);
    }

    IndependentComponent render(Rng& rng, ICLabel label, std::string ic_id) const {
        IndependentComponent ic;
        ic.ic_id = std::move(ic_id);
        ic.dims = dims_;
        ic.tr_seconds = tr_;
        ic.truth = label;
        std::uniform_real_distribution<double> U(0.0, 1.0);
        switch (label) {
            case ICLabel::SOZ:
                ic.slices = soz_map(rng);
                ic.bold = soz_bold(rng);
                break;
            case ICLabel::RSN: {
                const int k = 2 + static_cast<int>(U(rng) * 5);
                const bool coplanar = U(rng) < 0.65;
                ic.slices = rsn_map(rng, k, coplanar);
                ic.bold = rsn_bold(rng);
                break;
            }
            case ICLabel::Noise: {
                const double u = U(rng);
                const auto kind = u < 0.4 ? NoiseKind::Speckle : (u < 0.75 ? NoiseKind::Rim : NoiseKind::Stripe);
                ic.slices = noise_map(rng, kind);
                ic.bold = noise_bold(rng);
                break;
            }
        }
        return ic;
    }

private:
    std::vector<float> background(Rng& rng, double sigma) const {
        std::normal_distribution<double> N(0.0, sigma);
        std::vector<float> img(dims_.voxel_count());
        for (auto& v : img) v = static_cast<float>(std::abs(N(rng)));
        return img;
    }

    void paint_capsule(std::vector<float>& img, std::size_t k, double ay, double ax, double by, double bx,
                       double radius, float level, Rng& rng) const {
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        const double dy = by - ay, dx = bx - ax, len2 = dy * dy + dx * dx;
        for (std::size_t r = 0; r < dims_.height; ++r)
            for (std::size_t c = 0; c < dims_.width; ++c) {
                const double py = static_cast<double>(r) - ay, px = static_cast<double>(c) - ax;
                const double t = len2 > 0 ? std::clamp((py * dy + px * dx) / len2, 0.0, 1.0) : 0.0;
                if (std::hypot(py - t * dy, px - t * dx) <= radius)
                    img[k * dims_.slice_size() + r * dims_.width + c] = static_cast<float>(level + jitter(rng));
            }
    }

    void add_sine(std::vector<double>& x, double freq_hz, double amp, double phase) const {
        for (std::size_t t = 0; t < x.size(); ++t)
            x[t] += amp * std::sin(2 * std::numbers::pi * freq_hz * tr_ * static_cast<double>(t) + phase);
    }

    static std::vector<float> to_float(const std::vector<double>& x) {
        return std::vector<float>(x.begin(), x.end());
    }

    SliceDims dims_;
    double tr_;
    std::uint32_t bold_len_;
    std::vector<SliceAnatomy> anatomy_;
};

// Generates patient `index` of the cohort described by `params`. Patients are
// independent given (params, index), so callers may generate them lazily or
// in parallel.
inline Patient generate_patient(const GeneratorParams& params, std::size_t index) {
    validate(params);
    ArchetypeRenderer renderer(params.slice_dims, params.tr_seconds, params.bold_len);
    std::mt19937_64 rng(patient_seed(params.seed, index));
    const auto counts = class_counts(params.class_mix, params.ics_per_patient);
    std::vector<ICLabel> labels;
    labels.insert(labels.end(), counts.noise, ICLabel::Noise);
    labels.insert(labels.end(), counts.rsn, ICLabel::RSN);
    labels.insert(labels.end(), counts.soz, ICLabel::SOZ);
    std::shuffle(labels.begin(), labels.end(), rng);

    Patient p;
    p.patient_id = patient_id_for(index, params.n_patients);
    static constexpr std::array<const char*, 3> kAges{"0-3", "3-12", "12-18"};
    std::uniform_int_distribution<int> age(0, 2), sex(0, 1);
    p.meta.age_group = kAges[static_cast<std::size_t>(age(rng))];
    p.meta.sex = sex(rng) == 0 ? "F" : "M";
    p.ics.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) p.ics.push_back(renderer.render(rng, labels[i], ic_id_for(p.patient_id, i)));
    return p;
}

inline Cohort generate_cohort(const GeneratorParams& params) {
    validate(params);
    Cohort c;
    c.manifest.generator = params;
    c.patients.reserve(params.n_patients);
    for (std::size_t i = 0; i < params.n_patients; ++i) c.patients.push_back(generate_patient(params, i));
    return c;
}

}  // namespace deepxsoz
