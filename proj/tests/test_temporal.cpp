#include <deepxsoz/temporal.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace deepxsoz::temporal;

namespace {

std::vector<double> sine(std::size_t n, double freq_hz, double tr, double phase = 0.3) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(2 * std::numbers::pi * freq_hz * static_cast<double>(t) * tr + phase);
    return x;
}

}  // namespace

TEST(Gini, ClosedForms) {
    EXPECT_DOUBLE_EQ(gini_index(std::vector<double>(10, 3.0)), 0.0);
    EXPECT_DOUBLE_EQ(gini_index(std::vector<double>(10, 0.0)), 0.0);
    for (std::size_t n : {1u, 2u, 7u, 64u}) {
        std::vector<double> one_hot(n, 0.0);
        one_hot[n / 2] = -4.0;
        EXPECT_NEAR(gini_index(one_hot), 1.0 - 1.0 / static_cast<double>(n), 1e-12);
        for (std::size_t k = 1; k <= n; ++k) {
            std::vector<double> v(n, 0.0);
            for (std::size_t i = 0; i < k; ++i) v[i] = 2.5;
            EXPECT_NEAR(gini_index(v), 1.0 - static_cast<double>(k) / static_cast<double>(n), 1e-12);
        }
    }
    EXPECT_THROW(gini_index(std::vector<double>{}), std::invalid_argument);
}

TEST(Gini, ScaleSignAndPermutationInvariant) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> v(50);
    for (auto& x : v) x = nd(rng);
    const double g = gini_index(v);
    EXPECT_GE(g, 0.0);
    EXPECT_LT(g, 1.0);
    auto w = v;
    for (auto& x : w) x *= -3.7;
    std::shuffle(w.begin(), w.end(), rng);
    EXPECT_NEAR(gini_index(w), g, 1e-12);
}

TEST(Atrous, PerfectReconstruction) {
    TemporalParams p;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    std::vector<double> x(p.window_len);
    for (auto& v : x) v = nd(rng);
    const auto dec = atrous_decompose(x, p);
    ASSERT_EQ(dec.details.size(), static_cast<std::size_t>(p.n_levels));
    for (std::size_t t = 0; t < x.size(); ++t) {
        double s = dec.approximation[t];
        for (const auto& d : dec.details) s += d[t];
        EXPECT_NEAR(s, x[t], 1e-12);
    }
}

TEST(Atrous, ConstantSignalHasZeroDetails) {
    TemporalParams p;
    const std::vector<double> x(p.window_len, 2.0);
    const auto dec = atrous_decompose(x, p);
    for (const auto& d : dec.details)
        for (double v : d) EXPECT_NEAR(v, 0.0, 1e-12);
    for (double v : dec.approximation) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(Atrous, RejectsBadInput) {
    TemporalParams p;
    EXPECT_THROW(atrous_decompose(std::vector<double>(p.window_len - 1), p), std::invalid_argument);
    std::vector<double> x(p.window_len, 0.0);
    x[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(atrous_decompose(x, p), std::invalid_argument);
    p.window_len = 100;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Reflect, HalfSampleSymmetric) {
    EXPECT_EQ(reflect_index(-1, 5), 0u);
    EXPECT_EQ(reflect_index(-2, 5), 1u);
    EXPECT_EQ(reflect_index(5, 5), 4u);
    EXPECT_EQ(reflect_index(6, 5), 3u);
    EXPECT_EQ(reflect_index(12, 5), 2u);
}

TEST(SineBand, BinsForDefaultBand) {
    TemporalParams p;  // 256 samples at TR 2 s: resolution 1/512 Hz
    const auto b = band_bins(p);
    EXPECT_EQ(b.k_lo, 6u);
    EXPECT_EQ(b.k_hi, 51u);
}

TEST(SineBand, OnBinSinusoidIsOneHot) {
    TemporalParams p;
    const auto x = sine(p.window_len, 20.0 / 512.0, p.tr_seconds);
    const auto mags = sine_band_coefficients(x, p);
    const std::size_t m = mags.size();
    EXPECT_NEAR(gini_index(mags), 1.0 - 1.0 / static_cast<double>(m), 1e-9);
    EXPECT_NEAR(mags[20 - 6], 128.0, 1e-9);
}

TEST(DominantFrequency, PicksThePeak) {
    EXPECT_NEAR(dominant_frequency(sine(300, 0.09, 2.0), 2.0), 0.09, 1.0 / 600.0);
    EXPECT_NEAR(dominant_frequency(sine(300, 0.03, 2.0), 2.0), 0.03, 1.0 / 600.0);
}

TEST(TemporalFeatures, HfFlagAndSparsityOrdering) {
    TemporalParams p;
    EXPECT_TRUE(temporal_features(sine(300, 0.09, 2.0), p).hf_dominant);
    EXPECT_FALSE(temporal_features(sine(300, 0.03, 2.0), p).hf_dominant);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    std::vector<double> noise(300);
    for (auto& v : noise) v = nd(rng);
    const auto tone = temporal_features(sine(300, 20.0 / 512.0, 2.0), p);
    const auto white = temporal_features(noise, p);
    EXPECT_GT(tone.sine_gini, white.sine_gini);
}

TEST(TemporalFeatures, PartialWindowIsZeroPadded) {
    const auto w = split_windows(std::vector<double>(300, 1.0), 256);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[1][43], 1.0);
    EXPECT_EQ(w[1][44], 0.0);
}
