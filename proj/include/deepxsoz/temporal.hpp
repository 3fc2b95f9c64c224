#pragma once
// Temporal expert features: windowed a-trous (undecimated) wavelet
// decomposition, sine-dictionary band magnitudes, Gini sparsity, and the
// high-frequency dominance flag.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "icdata.hpp"

namespace deepxsoz::temporal {

// Cubic B-spline smoothing kernel; stands in for the exponential-spline
// activelet scaling filter.
inline std::vector<double> b3_spline_filter() { return {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16}; }

struct TemporalParams {
    std::size_t window_len = 256;
    int n_levels = 4;
    double f_lo = 0.01;
    double f_hi = 0.1;
    double dominance_cutoff = 0.073;
    double tr_seconds = 2.0;
    std::vector<double> smoothing_filter = b3_spline_filter();
    std::string filter_name = "b3-spline";
    bool per_level_gini = false;  // average per-level Ginis instead of one over concatenated details

    double nyquist() const { return 1.0 / (2.0 * tr_seconds); }

    void validate() const {
        if (window_len == 0 || (window_len & (window_len - 1)) != 0) throw std::invalid_argument("window_len must be a power of two");
        if (n_levels < 1 || window_len < (std::size_t{1} << n_levels)) throw std::invalid_argument("window_len must be >= 2^n_levels");
        if (!(tr_seconds > 0)) throw std::invalid_argument("tr_seconds must be positive");
        if (!(0 < f_lo && f_lo < f_hi && f_hi <= nyquist())) throw std::invalid_argument("need 0 < f_lo < f_hi <= Nyquist");
        if (!(f_lo < dominance_cutoff && dominance_cutoff < f_hi)) throw std::invalid_argument("need f_lo < dominance_cutoff < f_hi");
        if (smoothing_filter.empty() || smoothing_filter.size() % 2 == 0) throw std::invalid_argument("smoothing filter must have odd length");
    }
};

struct WaveletDecomposition {
    std::vector<double> approximation;          // a_J
    std::vector<std::vector<double>> details;   // d_1 .. d_J
};

// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1].
inline std::size_t reflect_index(long i, std::size_t n) {
    const long period = 2 * static_cast<long>(n);
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - 1 - m);
}

// a_0 = x; a_j = a_{j-1} convolved with h dilated by 2^(j-1); d_j = a_{j-1} - a_j.
inline WaveletDecomposition atrous_decompose(std::span<const double> window, const TemporalParams& params) {
    params.validate();
    if (window.size() != params.window_len) throw std::invalid_argument("atrous_decompose: window length mismatch");
    for (double v : window)
        if (!std::isfinite(v)) throw std::invalid_argument("atrous_decompose: non-finite sample");
    const auto& h = params.smoothing_filter;
    const long half = static_cast<long>(h.size() / 2);
    const std::size_t n = window.size();

    WaveletDecomposition out;
    std::vector<double> prev(window.begin(), window.end()), next(n);
    for (int j = 1; j <= params.n_levels; ++j) {
        const long step = 1L << (j - 1);
        for (std::size_t t = 0; t < n; ++t) {
            double acc = 0.0;
            for (long m = -half; m <= half; ++m)
                acc += h[static_cast<std::size_t>(m + half)] * prev[reflect_index(static_cast<long>(t) + m * step, n)];
            next[t] = acc;
        }
        std::vector<double> d(n);
        for (std::size_t t = 0; t < n; ++t) d[t] = prev[t] - next[t];
        out.details.push_back(std::move(d));
        std::swap(prev, next);
    }
    out.approximation = std::move(prev);
    return out;
}

// Sparsity Gini index over coefficient magnitudes; 0 for uniform magnitudes,
// 1 - 1/N for a one-hot vector, 0 for the all-zero vector.
inline double gini_index(std::span<const double> coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("gini_index: empty input");
    std::vector<double> a(coeffs.size());
    std::transform(coeffs.begin(), coeffs.end(), a.begin(), [](double v) { return std::abs(v); });
    std::sort(a.begin(), a.end());
    double l1 = 0.0;
    for (double v : a) l1 += v;
    if (l1 == 0.0) return 0.0;
    const double n = static_cast<double>(a.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] / l1) * ((n - static_cast<double>(k + 1) + 0.5) / n);
    return 1.0 - 2.0 * acc;
}

struct BandBins {
    std::size_t k_lo = 0, k_hi = 0;  // inclusive
};

// Bins k with k / (window_len * TR) inside [f_lo, f_hi].
inline BandBins band_bins(const TemporalParams& params) {
    const double res = 1.0 / (static_cast<double>(params.window_len) * params.tr_seconds);
    const double lo = params.f_lo / res, hi = params.f_hi / res;
    // Snap values within rounding noise of an integer before ceil/floor.
    auto snap = [](double v) { return std::abs(v - std::round(v)) < 1e-9 ? std::round(v) : v; };
    BandBins b{static_cast<std::size_t>(std::ceil(snap(lo))), static_cast<std::size_t>(std::floor(snap(hi)))};
    if (b.k_hi < b.k_lo || b.k_hi > params.window_len / 2) throw std::invalid_argument("sine band is empty after discretisation");
    return b;
}

namespace detail {

// exp(-2*pi*i*m/n) for m in [0, n).
inline std::vector<std::complex<double>> twiddles(std::size_t n) {
    std::vector<std::complex<double>> w(n);
    for (std::size_t m = 0; m < n; ++m)
        w[m] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
    return w;
}

inline std::complex<double> dft_bin(std::span<const double> x, std::size_t k, const std::vector<std::complex<double>>& tw) {
    const std::size_t n = x.size();
    std::complex<double> acc = 0.0;
    std::size_t m = 0;
    for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * tw[m];
        m += k;
        if (m >= n) m -= n;
    }
    return acc;
}

}  // namespace detail

// Magnitudes of the projections onto discrete sinusoids at the in-band bins.
inline std::vector<double> sine_band_coefficients(std::span<const double> window, const TemporalParams& params) {
    if (window.size() != params.window_len) throw std::invalid_argument("sine_band_coefficients: window length mismatch");
    const auto bins = band_bins(params);
    const auto tw = detail::twiddles(window.size());
    std::vector<double> mags;
    for (std::size_t k = bins.k_lo; k <= bins.k_hi; ++k) mags.push_back(std::abs(detail::dft_bin(window, k, tw)));
    return mags;
}

// Frequency (Hz) of the largest periodogram bin in (0, Nyquist]; ties go to
// the lower frequency.
inline double dominant_frequency(std::span<const double> signal, double tr_seconds) {
    const std::size_t n = signal.size();
    if (n < 2) throw std::invalid_argument("dominant_frequency: signal too short");
    double best_power = -1.0;
    std::size_t best_k = 1;
    const auto tw = detail::twiddles(n);
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double p = std::norm(detail::dft_bin(signal, k, tw));
        if (p > best_power * (1.0 + 1e-12)) {
            best_power = p;
            best_k = k;
        }
    }
    return static_cast<double>(best_k) / (static_cast<double>(n) * tr_seconds);
}

struct TemporalFeatures {
    double activelet_gini = 0.0;
    double sine_gini = 0.0;
    bool hf_dominant = false;
};

// Consecutive windows of window_len; the final partial window is zero-padded.
inline std::vector<std::vector<double>> split_windows(std::span<const double> signal, std::size_t window_len) {
    std::vector<std::vector<double>> out;
    for (std::size_t start = 0; start < signal.size(); start += window_len) {
        std::vector<double> w(window_len, 0.0);
        const std::size_t m = std::min(window_len, signal.size() - start);
        std::copy_n(signal.begin() + static_cast<long>(start), m, w.begin());
        out.push_back(std::move(w));
    }
    if (out.empty()) out.emplace_back(window_len, 0.0);
    return out;
}

inline TemporalFeatures temporal_features(std::span<const double> bold, const TemporalParams& params) {
    params.validate();
    TemporalFeatures f;
    const auto windows = split_windows(bold, params.window_len);
    for (const auto& w : windows) {
        const auto dec = atrous_decompose(w, params);
        if (params.per_level_gini) {
            double g = 0.0;
            for (const auto& d : dec.details) g += gini_index(d);
            f.activelet_gini += g / static_cast<double>(dec.details.size());
        } else {
            std::vector<double> all;
            for (const auto& d : dec.details) all.insert(all.end(), d.begin(), d.end());
            f.activelet_gini += gini_index(all);
        }
        f.sine_gini += gini_index(sine_band_coefficients(w, params));
    }
    f.activelet_gini /= static_cast<double>(windows.size());
    f.sine_gini /= static_cast<double>(windows.size());
    f.hf_dominant = dominant_frequency(bold, params.tr_seconds) > params.dominance_cutoff;
    return f;
}

inline TemporalFeatures temporal_features(const IndependentComponent& ic, TemporalParams params) {
    params.tr_seconds = ic.tr_seconds;
    std::vector<double> bold(ic.bold.begin(), ic.bold.end());
    return temporal_features(bold, params);
}

}  // namespace deepxsoz::temporal
