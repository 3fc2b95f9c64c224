#include <deepxsoz/shallow.hpp>

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace deepxsoz;
using namespace deepxsoz::shallow;

namespace {

struct Data {
    Rows X;
    std::vector<int> y;
};

// Two Gaussian blobs; `overlap` widens them until they mix.
Data blobs(std::size_t n, std::size_t d, double overlap, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, overlap);
    Data out;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 3 == 0 ? 1 : -1;
        Row x(d);
        for (std::size_t k = 0; k < d; ++k) x[k] = N(rng) + (k == 0 ? 1.5 * label : 0.3 * k);
        out.X.push_back(x);
        out.y.push_back(label);
    }
    return out;
}

double hinge_sum(const Rows& X, const std::vector<int>& y, const Row& w, double b) {
    double s = 0;
    for (std::size_t i = 0; i < X.size(); ++i) s += std::max(0.0, 1.0 - y[i] * (dot(w, X[i]) + b));
    return s;
}

}  // namespace

TEST(Standardizer, ZeroMeanUnitVarianceAndConstantColumns) {
    Rows X{{1, 5, 2}, {3, 5, 4}, {5, 5, 9}};
    const auto s = Standardizer::fit(X);
    EXPECT_DOUBLE_EQ(s.sd[1], 1.0);
    const auto Z = s.apply(X);
    for (std::size_t j : {0u, 2u}) {
        double m = 0, v = 0;
        for (const auto& r : Z) m += r[j];
        for (const auto& r : Z) v += r[j] * r[j];
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 3.0, 1.0, 1e-12);
    }
    EXPECT_THROW(s.apply(Row{1, std::nan(""), 2}), DataError);
    EXPECT_THROW(s.apply(Row{1, 2}), std::invalid_argument);
}

TEST(Smote, SamplesLieOnSegmentsToNearNeighbours) {
    const auto d = blobs(40, 3, 1.0, 1);
    const Rows& M = d.X;
    const auto r = smote_oversample(M, 140, 5, 9);
    ASSERT_EQ(r.samples.size(), 100u);
    EXPECT_EQ(r.k_used, 5u);
    EXPECT_FALSE(r.k_clamped);
    const auto nn = nearest_neighbors(M, 5);
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
        const auto& q = r.samples[s];
        EXPECT_EQ(q.base, s % M.size());
        EXPECT_NE(std::find(nn[q.base].begin(), nn[q.base].end(), q.neighbor), nn[q.base].end());
        EXPECT_GE(q.lambda, 0.0);
        EXPECT_LT(q.lambda, 1.0);
        for (std::size_t f = 0; f < 3; ++f) {
            EXPECT_NEAR(q.x[f], M[q.base][f] + q.lambda * (M[q.neighbor][f] - M[q.base][f]), 1e-12);
            EXPECT_GE(q.x[f], std::min(M[q.base][f], M[q.neighbor][f]) - 1e-12);
            EXPECT_LE(q.x[f], std::max(M[q.base][f], M[q.neighbor][f]) + 1e-12);
        }
    }
}

TEST(Smote, NeighboursMatchBruteForce) {
    const auto d = blobs(25, 4, 1.0, 2);
    const auto nn = nearest_neighbors(d.X, 3);
    for (std::size_t i = 0; i < d.X.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < d.X.size(); ++j) {
            if (j == i) continue;
            double s = 0;
            for (std::size_t f = 0; f < 4; ++f) s += std::pow(d.X[i][f] - d.X[j][f], 2);
            all.emplace_back(s, j);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(nn[i][t], all[t].second);
    }
}

TEST(Smote, ClampsKAndHandlesSmallInputs) {
    Rows two{{0, 0}, {1, 1}};
    const auto r = smote_oversample(two, 6, 5, 1);
    EXPECT_EQ(r.k_used, 1u);
    EXPECT_TRUE(r.k_clamped);
    EXPECT_EQ(r.samples.size(), 4u);
    EXPECT_TRUE(smote_oversample(two, 2, 5, 1).samples.empty());
    EXPECT_THROW(smote_oversample({{0, 0}}, 5, 5, 1), DataError);
    EXPECT_EQ(smote_oversample(two, 6, 5, 1).samples[3].x, r.samples[3].x);
}

TEST(OptimalBias, MinimisesHingeOverAllCandidates) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> f(15 + trial % 7);
        std::vector<int> y(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = N(rng);
            y[i] = (i % 2 == 0) ? 1 : -1;
        }
        const double b = optimal_bias(f, y);
        auto H = [&](double bb) {
            double s = 0;
            for (std::size_t i = 0; i < f.size(); ++i) s += std::max(0.0, 1.0 - y[i] * (f[i] + bb));
            return s;
        };
        for (double g = -5; g <= 5; g += 0.001) ASSERT_LE(H(b), H(g) + 1e-9) << trial;
    }
}

TEST(LinearSvm, CertifiedOptimalByDualityAndKkt) {
    for (double C : {0.1, 1.0, 10.0}) {
        const auto d = blobs(120, 4, 1.2, 4);
        const auto s = solve_linear_svm(d.X, d.y, C);
        // Recompute w, primal and dual from alpha.
        Row w(4, 0.0);
        double sum_a = 0, sum_ay = 0;
        for (std::size_t i = 0; i < d.X.size(); ++i) {
            for (std::size_t k = 0; k < 4; ++k) w[k] += s.alpha[i] * d.y[i] * d.X[i][k];
            sum_a += s.alpha[i];
            sum_ay += s.alpha[i] * d.y[i];
            EXPECT_GE(s.alpha[i], -1e-12);
            EXPECT_LE(s.alpha[i], C + 1e-12);
        }
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(w[k], s.w[k], 1e-9);
        EXPECT_NEAR(sum_ay, 0.0, 1e-9);
        const double primal = 0.5 * dot(s.w, s.w) + C * hinge_sum(d.X, d.y, s.w, s.b);
        const double dual = sum_a - 0.5 * dot(w, w);
        EXPECT_NEAR(primal, s.primal, 1e-9 * std::max(1.0, primal));
        EXPECT_LE((primal - dual) / std::max(primal, 1.0), 1e-6);
        // KKT up to the gap tolerance.
        std::size_t violations = 0;
        for (std::size_t i = 0; i < d.X.size(); ++i) {
            const double m = d.y[i] * (dot(s.w, d.X[i]) + s.b);
            if (s.alpha[i] < 1e-8 * C && m < 1 - 1e-2) ++violations;
            if (s.alpha[i] > C * (1 - 1e-8) && m > 1 + 1e-2) ++violations;
        }
        EXPECT_EQ(violations, 0u) << "C=" << C;
    }
}

TEST(LinearSvm, SeparableDataClassifiedWithMargin) {
    const auto d = blobs(60, 2, 0.2, 5);
    const auto s = solve_linear_svm(d.X, d.y, 100.0);
    for (std::size_t i = 0; i < d.X.size(); ++i) EXPECT_GE(d.y[i] * (dot(s.w, d.X[i]) + s.b), 1.0 - 1e-3);
}

TEST(LinearSvm, DuplicatingDataEqualsDoublingC) {
    const auto d = blobs(80, 3, 1.0, 6);
    Data dd = d;
    dd.X.insert(dd.X.end(), d.X.begin(), d.X.end());
    dd.y.insert(dd.y.end(), d.y.begin(), d.y.end());
    const auto a = solve_linear_svm(d.X, d.y, 2.0), b = solve_linear_svm(dd.X, dd.y, 1.0);
    EXPECT_NEAR(a.primal, b.primal, 1e-5 * a.primal);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a.w[k], b.w[k], 5e-3);
}

TEST(LinearSvm, RejectsBadInput) {
    const auto d = blobs(10, 2, 1.0, 7);
    EXPECT_THROW(solve_linear_svm(d.X, d.y, 0.0), std::invalid_argument);
    EXPECT_THROW(solve_linear_svm(d.X, std::vector<int>(10, 1), 1.0), DataError);
    auto bad = d.y;
    bad[0] = 0;
    EXPECT_THROW(solve_linear_svm(d.X, bad, 1.0), std::invalid_argument);
    SolverOptions tight;
    tight.max_iterations = 1;
    EXPECT_THROW(solve_linear_svm(blobs(200, 3, 2.0, 8).X, blobs(200, 3, 2.0, 8).y, 10.0, tight), RuntimeFailure);
}

TEST(Platt, MonotoneAndClamped) {
    const auto d = blobs(200, 2, 1.0, 9);
    std::vector<double> f;
    for (const auto& x : d.X) f.push_back(x[0]);
    const auto p = fit_platt(f, d.y);
    EXPECT_LT(p.A, 0.0);
    double prev = -1;
    for (double v = -4; v <= 4; v += 0.25) {
        const double q = platt_probability(p, v);
        EXPECT_GT(q, prev);
        EXPECT_GT(q, 0.0);
        EXPECT_LT(q, 1.0);
        prev = q;
    }
    // Anti-correlated scores would give A > 0; the fit clamps it.
    auto flipped = d.y;
    for (auto& v : flipped) v = -v;
    EXPECT_DOUBLE_EQ(fit_platt(f, flipped).A, kMaxPlattSlope);
    EXPECT_NEAR(platt_probability({-1.0, 0.0}, 0.0), 0.5, 1e-15);
    EXPECT_NEAR(platt_probability({-1.0, 0.0}, 800.0), 1.0, 1e-15);
}

TEST(TrainSvm, AugmenterSeesOnlyTrainingParts) {
    const auto d = blobs(90, 3, 1.0, 10);
    std::vector<std::size_t> sizes;
    SvmParams params;
    const auto m = train_svm(d.X, d.y, params, 3, [&](Rows& X, std::vector<int>& y, std::uint64_t) { sizes.push_back(X.size()); (void)y; });
    ASSERT_EQ(sizes.size(), params.platt_folds + 1);
    for (std::size_t i = 0; i < params.platt_folds; ++i) EXPECT_EQ(sizes[i], 60u);
    EXPECT_EQ(sizes.back(), 90u);
    EXPECT_LE(m.relative_gap, 1e-6);
}

TEST(TrainSvm, PosteriorAgreesWithDecisionAndJsonRoundTrips) {
    const auto d = blobs(90, 3, 1.0, 11);
    const auto m = train_svm(d.X, d.y, {}, 5);
    const auto back = svm_model_from_json(to_json(m));
    for (const auto& x : d.X) {
        const auto p = predict_posterior(m, x);
        EXPECT_EQ(p.soz, p.decision > 0);
        EXPECT_EQ(predict_posterior(back, x).p_soz, p.p_soz);
    }
    auto j = to_json(m);
    j["version"] = 7;
    EXPECT_THROW(svm_model_from_json(j), FormatError);
}

TEST(StratifiedFolds, Balanced) {
    std::vector<int> y(31, -1);
    for (std::size_t i = 0; i < 10; ++i) y[i] = 1;
    const auto f = stratified_folds(y, 3, 1);
    for (std::size_t k = 0; k < 3; ++k) {
        std::size_t pos = 0, all = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (f[i] == k) ++all, pos += y[i] > 0;
        EXPECT_GE(pos, 3u);
        EXPECT_LE(pos, 4u);
        EXPECT_GE(all, 10u);
    }
}

TEST(LsSvm, MatchesFullDualSystem) {
    for (double gamma : {0.1, 1.0, 50.0}) {
        const auto d = blobs(40, 3, 1.0, 12);
        const auto m = train_ls_svm_binary(d.X, d.y, gamma);
        const long n = static_cast<long>(d.X.size());
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
        for (long i = 0; i < n; ++i) {
            A(0, i + 1) = A(i + 1, 0) = 1.0;
            for (long j = 0; j < n; ++j) A(i + 1, j + 1) = dot(d.X[static_cast<std::size_t>(i)], d.X[static_cast<std::size_t>(j)]);
            A(i + 1, i + 1) += 1.0 / gamma;
            rhs[i + 1] = d.y[static_cast<std::size_t>(i)];
        }
        const Eigen::VectorXd sol = A.fullPivLu().solve(rhs);
        EXPECT_NEAR(m.b, sol[0], 1e-8);
        for (long i = 0; i < n; ++i) EXPECT_NEAR(m.alpha[static_cast<std::size_t>(i)], sol[i + 1], 1e-7 * std::max(1.0, gamma));
    }
}

TEST(LsSvm, InfiniteGammaIsSingular) {
    const auto d = blobs(20, 2, 1.0, 13);
    EXPECT_THROW(train_ls_svm_binary(d.X, d.y, std::numeric_limits<double>::infinity()), RuntimeFailure);
    EXPECT_THROW(train_ls_svm_binary(d.X, d.y, 0.0), std::invalid_argument);
}

TEST(LsSvm, OneVsOneRecoversSeparatedClasses) {
    Rows X;
    std::vector<std::size_t> l;
    std::mt19937_64 rng(14);
    std::normal_distribution<double> N(0, 0.3);
    const double centers[3][2] = {{0, 0}, {5, 0}, {0, 5}};
    for (std::size_t i = 0; i < 90; ++i) {
        const auto c = i % 3;
        X.push_back({centers[c][0] + N(rng), centers[c][1] + N(rng)});
        l.push_back(c);
    }
    const auto m = train_ls_svm(X, l, 3, 1.0);
    EXPECT_EQ(m.machines.size(), 3u);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < X.size(); ++i) ok += m.predict(X[i]) == l[i];
    EXPECT_EQ(ok, X.size());
    EXPECT_THROW(train_ls_svm(X, std::vector<std::size_t>(90, 0), 3, 1.0), DataError);
}

TEST(LsSvm, VoteTiesGoToLowestClass) {
    LsSvmMulticlass m;
    m.n_classes = 3;
    m.scaler = {{0.0}, {1.0}};
    m.pairs = {{0, 1}, {0, 2}, {1, 2}};
    // 0 beats 1, 2 beats 0, 1 beats 2: one vote each.
    m.machines = {{{0.0}, 1.0, {}}, {{0.0}, -1.0, {}}, {{0.0}, 1.0, {}}};
    EXPECT_EQ(m.predict({0.0}), 0u);
}
