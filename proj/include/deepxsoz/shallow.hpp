#pragma once
// Step-2 shallow learners: z-score standardization, SMOTE, a soft-margin
// linear SVM (SMO) with Platt-calibrated posteriors, and a one-vs-one
// least-squares SVM used as a comparison baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "common.hpp"

namespace deepxsoz::shallow {

using Row = std::vector<double>;
using Rows = std::vector<Row>;

inline std::size_t row_width(const Rows& X) {
    if (X.empty()) throw std::invalid_argument("empty feature matrix");
    const std::size_t d = X.front().size();
    if (d == 0) throw std::invalid_argument("feature rows must be non-empty");
    for (const auto& r : X) {
        if (r.size() != d) throw std::invalid_argument("ragged feature matrix");
        for (double v : r)
            if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    return d;
}

inline double dot(const Row& a, const Row& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// --- standardization ---------------------------------------------------------

struct Standardizer {
    Row mean, sd;  // population sd; zero-variance features keep sd = 1

    static Standardizer fit(const Rows& X) {
        const std::size_t d = row_width(X);
        Standardizer s{Row(d, 0.0), Row(d, 0.0)};
        const auto n = static_cast<double>(X.size());
        for (const auto& r : X)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
        for (auto& m : s.mean) m /= n;
        for (const auto& r : X)
            for (std::size_t j = 0; j < d; ++j) s.sd[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
        for (auto& v : s.sd) {
            v = std::sqrt(v / n);
            if (!(v > 0.0)) v = 1.0;
        }
        return s;
    }

    Row apply(const Row& x) const {
        if (x.size() != mean.size()) throw std::invalid_argument("standardize: feature width mismatch");
        Row z(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (!std::isfinite(x[j])) throw DataError("non-finite feature value");
            z[j] = (x[j] - mean[j]) / sd[j];
        }
        return z;
    }

    Rows apply(const Rows& X) const {
        Rows out;
        out.reserve(X.size());
        for (const auto& r : X) out.push_back(apply(r));
        return out;
    }
};

// --- SMOTE -------------------------------------------------------------------

struct SyntheticSample {
    Row x;
    std::size_t base = 0;      // index of x_i in the minority set
    std::size_t neighbor = 0;  // index of x_j
    double lambda = 0.0;       // x = x_i + lambda (x_j - x_i)
};

struct SmoteResult {
    std::vector<SyntheticSample> samples;
    std::size_t k_used = 0;
    bool k_clamped = false;
};

// k nearest minority neighbours of every minority point (Euclidean, self
// excluded, ties by index).
inline std::vector<std::vector<std::size_t>> nearest_neighbors(const Rows& X, std::size_t k) {
    std::vector<std::vector<std::size_t>> nn(X.size());
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < X.size(); ++i) {
        dist.clear();
        for (std::size_t j = 0; j < X.size(); ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t f = 0; f < X[i].size(); ++f) d2 += (X[i][f] - X[j][f]) * (X[i][f] - X[j][f]);
            dist.emplace_back(d2, j);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
        for (std::size_t t = 0; t < k; ++t) nn[i].push_back(dist[t].second);
    }
    return nn;
}

// Emits max(0, target_count - |minority|) synthetic points. Base points are
// visited round-robin; the neighbour and lambda ~ U(0,1) are drawn per sample.
inline SmoteResult smote_oversample(const Rows& minority, std::size_t target_count, std::size_t k, std::uint64_t seed) {
    if (minority.size() < 2) throw DataError("SMOTE needs at least 2 minority samples");
    row_width(minority);
    if (k == 0) throw std::invalid_argument("SMOTE k must be positive");
    SmoteResult out;
    out.k_used = std::min(k, minority.size() - 1);
    out.k_clamped = out.k_used != k;
    if (target_count <= minority.size()) return out;
    const auto nn = nearest_neighbors(minority, out.k_used);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, out.k_used - 1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const std::size_t n_new = target_count - minority.size();
    out.samples.reserve(n_new);
    for (std::size_t s = 0; s < n_new; ++s) {
        const std::size_t i = s % minority.size();
        const std::size_t j = nn[i][pick(rng)];
        const double lambda = U(rng);
        Row x(minority[i].size());
        for (std::size_t f = 0; f < x.size(); ++f) x[f] = minority[i][f] + lambda * (minority[j][f] - minority[i][f]);
        out.samples.push_back({std::move(x), i, j, lambda});
    }
    return out;
}

// --- linear soft-margin SVM --------------------------------------------------

struct SolverOptions {
    double gap_tolerance = 1e-6;       // relative duality gap (P - D) / max(P, 1)
    std::size_t max_iterations = 2'000'000;
};

struct LinearSvmSolution {
    Row w;
    double b = 0.0;
    Row alpha;
    std::size_t iterations = 0;
    double primal = 0.0, dual = 0.0;
    double relative_gap() const { return (primal - dual) / std::max(primal, 1.0); }
};

// Bias minimizing the hinge term for fixed w: the midpoint of the interval of
// minimizers of sum_i max(0, 1 - y_i (f_i + b)).
inline double optimal_bias(const std::vector<double>& f, const std::vector<int>& y) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < f.size(); ++i) (y[i] > 0 ? pos : neg).push_back(static_cast<double>(y[i]) - f[i]);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    auto count_gt = [](const std::vector<double>& v, double b) { return static_cast<long>(v.end() - std::upper_bound(v.begin(), v.end(), b)); };
    auto count_ge = [](const std::vector<double>& v, double b) { return static_cast<long>(v.end() - std::lower_bound(v.begin(), v.end(), b)); };
    auto count_le = [](const std::vector<double>& v, double b) { return static_cast<long>(std::upper_bound(v.begin(), v.end(), b) - v.begin()); };
    auto count_lt = [](const std::vector<double>& v, double b) { return static_cast<long>(std::lower_bound(v.begin(), v.end(), b) - v.begin()); };
    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    double lo = all.back(), hi = all.front();
    for (double b : all)
        if (-count_gt(pos, b) + count_le(neg, b) >= 0) {
            lo = b;
            break;
        }
    for (auto it = all.rbegin(); it != all.rend(); ++it)
        if (-count_ge(pos, *it) + count_lt(neg, *it) <= 0) {
            hi = *it;
            break;
        }
    return 0.5 * (lo + hi);
}

// Dual SMO with second-order working-set selection on the linear kernel,
// keeping w = sum alpha_i y_i x_i explicit. Stops once the relative duality
// gap falls below tolerance; exceeding the iteration cap throws.
inline LinearSvmSolution solve_linear_svm(const Rows& X, const std::vector<int>& y, double C, const SolverOptions& opt = {}) {
    const std::size_t d = row_width(X);
    const std::size_t n = X.size();
    if (y.size() != n) throw std::invalid_argument("svm: label count mismatch");
    if (!(C > 0.0) || !std::isfinite(C)) throw std::invalid_argument("svm: C must be positive and finite");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v != 1 && v != -1) throw std::invalid_argument("svm: labels must be +1/-1");
        (v > 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw DataError("svm: training data has a single class");

    constexpr double tau = 1e-12;
    LinearSvmSolution sol{Row(d, 0.0), 0.0, Row(n, 0.0)};
    std::vector<double> kd(n), f(n, 0.0), G(n, -1.0);
    for (std::size_t i = 0; i < n; ++i) kd[i] = dot(X[i], X[i]);

    auto evaluate = [&]() {
        double w2 = dot(sol.w, sol.w), sum_alpha = 0.0, hinge = 0.0;
        for (double a : sol.alpha) sum_alpha += a;
        sol.b = optimal_bias(f, y);
        for (std::size_t i = 0; i < n; ++i) hinge += std::max(0.0, 1.0 - y[i] * (f[i] + sol.b));
        sol.primal = 0.5 * w2 + C * hinge;
        sol.dual = sum_alpha - 0.5 * w2;
    };

    for (std::size_t iter = 0;; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * G[t];
            const bool up = y[t] > 0 ? sol.alpha[t] < C : sol.alpha[t] > 0.0;
            const bool low = y[t] > 0 ? sol.alpha[t] > 0.0 : sol.alpha[t] < C;
            if (up && v > gmax) {
                gmax = v;
                i = t;
            }
            if (low) gmin = std::min(gmin, v);
        }
        const double violation = gmax - gmin;
        if (violation < 1e-3 || iter % 256 == 0) {
            evaluate();
            if (sol.relative_gap() <= opt.gap_tolerance || violation <= 1e-14) {
                sol.iterations = iter;
                return sol;
            }
        }
        if (iter >= opt.max_iterations)
            throw RuntimeFailure("svm: no convergence after " + std::to_string(iter) + " iterations (relative gap " +
                                 std::to_string(sol.relative_gap()) + ", KKT violation " + std::to_string(violation) + ")");

        std::size_t j = n;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const bool low = y[t] > 0 ? sol.alpha[t] > 0.0 : sol.alpha[t] < C;
            if (!low) continue;
            const double grad_diff = gmax + y[t] * G[t];
            if (grad_diff <= 0.0) continue;
            double a = kd[i] + kd[t] - 2.0 * dot(X[i], X[t]);
            if (a <= 0.0) a = tau;
            const double obj = -grad_diff * grad_diff / a;
            if (obj < best) {
                best = obj;
                j = t;
            }
        }
        if (j == n) {
            evaluate();
            sol.iterations = iter;
            return sol;
        }

        const double ai_old = sol.alpha[i], aj_old = sol.alpha[j];
        double& ai = sol.alpha[i];
        double& aj = sol.alpha[j];
        const double kij = dot(X[i], X[j]);
        double quad = kd[i] + kd[j] - 2.0 * kij;
        if (quad <= 0.0) quad = tau;
        if (y[i] != y[j]) {
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0.0) {
                if (aj < 0.0) { aj = 0.0; ai = diff; }
            } else if (ai < 0.0) { ai = 0.0; aj = -diff; }
            if (diff > 0.0) {
                if (ai > C) { ai = C; aj = C - diff; }
            } else if (aj > C) { aj = C; ai = C + diff; }
        } else {
            const double delta = (G[i] - G[j]) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > C) {
                if (ai > C) { ai = C; aj = sum - C; }
            } else if (aj < 0.0) { aj = 0.0; ai = sum; }
            if (sum > C) {
                if (aj > C) { aj = C; ai = sum - C; }
            } else if (ai < 0.0) { ai = 0.0; aj = sum; }
        }
        const double di = (ai - ai_old) * y[i], dj = (aj - aj_old) * y[j];
        for (std::size_t k = 0; k < d; ++k) sol.w[k] += di * X[i][k] + dj * X[j][k];
        for (std::size_t t = 0; t < n; ++t) {
            f[t] = dot(sol.w, X[t]);
            G[t] = y[t] * f[t] - 1.0;
        }
    }
}

// --- Platt scaling -----------------------------------------------------------

struct PlattParams {
    double A = -1.0, B = 0.0;  // p(+1 | f) = 1 / (1 + exp(A f + B)); A < 0
};

inline double platt_probability(const PlattParams& p, double f) {
    const double z = p.A * f + p.B;
    return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

inline constexpr double kMaxPlattSlope = -1e-6;

// Regularized maximum likelihood with smoothed targets, Newton steps with
// backtracking. A fitted slope that is not negative is clamped so posteriors
// stay strictly increasing in the decision value.
inline PlattParams fit_platt(const std::vector<double>& f, const std::vector<int>& y) {
    if (f.size() != y.size() || f.empty()) throw std::invalid_argument("platt: bad input sizes");
    double n_pos = 0, n_neg = 0;
    for (int v : y) (v > 0 ? n_pos : n_neg) += 1.0;
    const double hi = (n_pos + 1.0) / (n_pos + 2.0), lo = 1.0 / (n_neg + 2.0);
    std::vector<double> t(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) t[i] = y[i] > 0 ? hi : lo;
    PlattParams p{0.0, std::log((n_neg + 1.0) / (n_pos + 1.0))};
    auto objective = [&](double A, double B) {
        double v = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double z = f[i] * A + B;
            v += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return v;
    };
    double fval = objective(p.A, p.B);
    for (int it = 0; it < 100; ++it) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double z = f[i] * p.A + p.B;
            double pp, qq;
            if (z >= 0.0) {
                pp = std::exp(-z) / (1.0 + std::exp(-z));
                qq = 1.0 / (1.0 + std::exp(-z));
            } else {
                pp = 1.0 / (1.0 + std::exp(z));
                qq = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = pp * qq;
            h11 += f[i] * f[i] * d2;
            h22 += d2;
            h21 += f[i] * d2;
            const double d1 = t[i] - pp;
            g1 += f[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;
        double step = 1.0;
        while (step >= 1e-10) {
            const double nA = p.A + step * dA, nB = p.B + step * dB;
            const double nf = objective(nA, nB);
            if (nf < fval + 1e-4 * step * gd) {
                p = {nA, nB};
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < 1e-10) break;
    }
    p.A = std::min(p.A, kMaxPlattSlope);
    return p;
}

// --- calibrated SVM model ----------------------------------------------------

struct SvmParams {
    double C = 1.0;
    std::size_t platt_folds = 3;
    SolverOptions solver;
};

struct SvmModel {
    Row w;
    double b = 0.0;
    double C = 1.0;
    PlattParams platt;
    Standardizer scaler;
    std::size_t iterations = 0;
    double relative_gap = 0.0;

    double decision_value(const Row& raw) const {
        const Row z = scaler.apply(raw);
        return dot(w, z) + b;
    }
};

struct Posterior {
    bool soz = false;  // decision value > 0; ties go to RSN
    double p_soz = 0.5;
    double decision = 0.0;
};

inline Posterior predict_posterior(const SvmModel& m, const Row& raw) {
    const double f = m.decision_value(raw);
    return {f > 0.0, platt_probability(m.platt, f), f};
}

// Optional hook applied to every training set before the SVM sees it (used
// for SMOTE); receives standardized rows, +1/-1 labels and a seed.
using Augmenter = std::function<void(Rows&, std::vector<int>&, std::uint64_t)>;

// Stratified split of [0, n) into `folds` parts, seeded.
inline std::vector<std::size_t> stratified_folds(const std::vector<int>& y, std::size_t folds, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> fold(y.size());
    for (int cls : {1, -1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = k % folds;
    }
    return fold;
}

// Standardizes with statistics of `X_raw`, fits Platt parameters on
// out-of-fold decision values from an inner stratified split, then trains the
// final SVM on everything. The augmenter (if any) runs inside every training
// set, never on calibration rows.
inline SvmModel train_svm(const Rows& X_raw, const std::vector<int>& y, const SvmParams& params, std::uint64_t seed,
                          const Augmenter& augment = nullptr) {
    row_width(X_raw);
    if (y.size() != X_raw.size()) throw std::invalid_argument("svm: label count mismatch");
    SvmModel model;
    model.C = params.C;
    model.scaler = Standardizer::fit(X_raw);
    const Rows Z = model.scaler.apply(X_raw);
    std::size_t n_pos = 0;
    for (int v : y) n_pos += v > 0 ? 1 : 0;
    if (n_pos == 0 || n_pos == y.size()) throw DataError("svm: training data has a single class");

    auto fit = [&](Rows X, std::vector<int> lab, std::uint64_t s) {
        if (augment) augment(X, lab, s);
        return solve_linear_svm(X, lab, params.C, params.solver);
    };

    const std::size_t folds = std::min<std::size_t>(params.platt_folds, std::min(n_pos, y.size() - n_pos));
    if (folds >= 2) {
        const auto fold = stratified_folds(y, folds, seed);
        std::vector<double> f;
        std::vector<int> lab;
        for (std::size_t k = 0; k < folds; ++k) {
            Rows Xt;
            std::vector<int> yt;
            for (std::size_t i = 0; i < Z.size(); ++i)
                if (fold[i] != k) {
                    Xt.push_back(Z[i]);
                    yt.push_back(y[i]);
                }
            const auto sol = fit(std::move(Xt), std::move(yt), seed + 1 + k);
            for (std::size_t i = 0; i < Z.size(); ++i)
                if (fold[i] == k) {
                    f.push_back(dot(sol.w, Z[i]) + sol.b);
                    lab.push_back(y[i]);
                }
        }
        model.platt = fit_platt(f, lab);
    }
    const auto sol = fit(Z, y, seed);
    model.w = sol.w;
    model.b = sol.b;
    model.iterations = sol.iterations;
    model.relative_gap = sol.relative_gap();
    if (folds < 2) {
        std::vector<double> f;
        for (const auto& z : Z) f.push_back(dot(sol.w, z) + sol.b);
        model.platt = fit_platt(f, y);
    }
    return model;
}

inline constexpr int kSvmModelVersion = 1;

inline nlohmann::json to_json(const SvmModel& m) {
    return {{"format", "deepxsoz-svm"},
            {"version", kSvmModelVersion},
            {"w", m.w},
            {"b", m.b},
            {"C", m.C},
            {"platt", {{"A", m.platt.A}, {"B", m.platt.B}}},
            {"scaler", {{"mean", m.scaler.mean}, {"sd", m.scaler.sd}}},
            {"iterations", m.iterations},
            {"relative_gap", m.relative_gap}};
}

inline SvmModel svm_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "deepxsoz-svm") throw FormatError("svm model: wrong format tag");
        if (j.at("version").get<int>() != kSvmModelVersion) throw FormatError("svm model: unsupported version");
        SvmModel m;
        m.w = j.at("w").get<Row>();
        m.b = j.at("b").get<double>();
        m.C = j.at("C").get<double>();
        m.platt = {j.at("platt").at("A").get<double>(), j.at("platt").at("B").get<double>()};
        m.scaler = {j.at("scaler").at("mean").get<Row>(), j.at("scaler").at("sd").get<Row>()};
        m.iterations = j.at("iterations").get<std::size_t>();
        m.relative_gap = j.at("relative_gap").get<double>();
        if (m.w.size() != m.scaler.mean.size() || m.w.size() != m.scaler.sd.size())
            throw FormatError("svm model: inconsistent feature widths");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("svm model: ") + e.what());
    }
}

// --- least-squares SVM -------------------------------------------------------

struct LsSvmBinary {
    Row w;
    double b = 0.0;
    Row alpha;  // alpha_i = gamma * e_i
};

// Linear-kernel LS-SVM on +1/-1 targets. Solved through the equivalent
// (d+1)-dimensional primal system; the dual residual of
//   [0 1^T; 1 K + I/gamma] [b; alpha] = [0; y]
// is then checked without forming K.
inline LsSvmBinary train_ls_svm_binary(const Rows& X, const std::vector<int>& y, double gamma) {
    const std::size_t d = row_width(X);
    const std::size_t n = X.size();
    if (!(gamma > 0.0)) throw std::invalid_argument("ls-svm: gamma must be positive");
    // Without the ridge term the dual matrix has rank <= d + 2 < n + 1.
    if (!std::isfinite(gamma)) throw RuntimeFailure("ls-svm: singular system (gamma is infinite)");
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<long>(d + 1), static_cast<long>(d + 1));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<long>(d + 1));
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd xi(static_cast<long>(d + 1));
        for (std::size_t k = 0; k < d; ++k) xi[static_cast<long>(k)] = X[i][k];
        xi[static_cast<long>(d)] = 1.0;
        M.noalias() += xi * xi.transpose();
        rhs += static_cast<double>(y[i]) * xi;
    }
    for (std::size_t k = 0; k < d; ++k) M(static_cast<long>(k), static_cast<long>(k)) += 1.0 / gamma;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) throw RuntimeFailure("ls-svm: singular system");
    const Eigen::VectorXd sol = lu.solve(rhs);
    LsSvmBinary out;
    out.w.assign(sol.data(), sol.data() + d);
    out.b = sol[static_cast<long>(d)];
    out.alpha.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.alpha[i] = gamma * (y[i] - dot(out.w, X[i]) - out.b);

    // Dual residual: sum(alpha) = 0 and b + x_i . (sum_j alpha_j x_j) + alpha_i / gamma = y_i.
    Row v(d, 0.0);
    double sum_alpha = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_alpha += out.alpha[i];
        scale = std::max(scale, std::abs(out.alpha[i]));
        for (std::size_t k = 0; k < d; ++k) v[k] += out.alpha[i] * X[i][k];
    }
    double resid = std::abs(sum_alpha);
    for (std::size_t i = 0; i < n; ++i)
        resid = std::max(resid, std::abs(out.b + dot(X[i], v) + out.alpha[i] / gamma - y[i]));
    if (!(resid < 1e-8 * scale)) throw RuntimeFailure("ls-svm: linear system residual " + std::to_string(resid) + " too large");
    return out;
}

struct LsSvmMulticlass {
    std::size_t n_classes = 0;
    Standardizer scaler;
    // One machine per class pair (a < b); positive target means class a.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<LsSvmBinary> machines;

    // Majority vote over pairwise machines; ties go to the lowest class index.
    std::size_t predict(const Row& raw) const {
        const Row z = scaler.apply(raw);
        std::vector<int> votes(n_classes, 0);
        for (std::size_t m = 0; m < machines.size(); ++m) {
            const double f = dot(machines[m].w, z) + machines[m].b;
            ++votes[f > 0.0 ? pairs[m].first : pairs[m].second];
        }
        return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
};

// One-vs-one LS-SVM; `X_raw` is standardized with its own statistics.
inline LsSvmMulticlass train_ls_svm(const Rows& X_raw, const std::vector<std::size_t>& labels, std::size_t n_classes, double gamma) {
    row_width(X_raw);
    if (labels.size() != X_raw.size()) throw std::invalid_argument("ls-svm: label count mismatch");
    std::vector<std::size_t> count(n_classes, 0);
    for (auto l : labels) {
        if (l >= n_classes) throw std::invalid_argument("ls-svm: label out of range");
        ++count[l];
    }
    for (auto c : count)
        if (c == 0) throw DataError("ls-svm: every class must be present");
    LsSvmMulticlass model;
    model.n_classes = n_classes;
    model.scaler = Standardizer::fit(X_raw);
    const Rows Z = model.scaler.apply(X_raw);
    for (std::size_t a = 0; a < n_classes; ++a)
        for (std::size_t b = a + 1; b < n_classes; ++b) {
            Rows X;
            std::vector<int> y;
            for (std::size_t i = 0; i < Z.size(); ++i)
                if (labels[i] == a || labels[i] == b) {
                    X.push_back(Z[i]);
                    y.push_back(labels[i] == a ? 1 : -1);
                }
            model.pairs.emplace_back(a, b);
            model.machines.push_back(train_ls_svm_binary(X, y, gamma));
        }
    return model;
}

}  // namespace deepxsoz::shallow
