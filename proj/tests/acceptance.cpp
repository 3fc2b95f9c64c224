// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: acceptance [report_dir] [--quick]   (--quick skips the 52-patient run)

#include <deepxsoz/cohort_io.hpp>
#include <deepxsoz/eval.hpp>
#include <deepxsoz/neuralnet.hpp>
#include <deepxsoz/pipeline.hpp>
#include <deepxsoz/report.hpp>
#include <deepxsoz/shallow.hpp>
#include <deepxsoz/spatial.hpp>
#include <deepxsoz/temporal.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

using namespace deepxsoz;
using pipeline::FoldResult;
using pipeline::ICRecord;
using pipeline::Step1Label;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void verdict(const std::string& name, bool ok, double seconds, double budget, const std::string& detail) {
    const bool in_budget = seconds <= budget;
    ok = ok && in_budget;
    failures += ok ? 0 : 1;
    std::printf("%s  %-22s %7.2fs (budget %gs)  %s%s\n", ok ? "PASS" : "FAIL", name.c_str(), seconds, budget, detail.c_str(),
                in_budget ? "" : "  [over budget]");
    std::fflush(stdout);
}

template <typename F>
void criterion(const std::string& name, double budget, F body) {
    const auto t0 = Clock::now();
    std::ostringstream detail;
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail << "exception: " << e.what();
    }
    verdict(name, ok, std::chrono::duration<double>(Clock::now() - t0).count(), budget, detail.str());
}

FoldResult fold_of(const std::string& id, std::vector<std::pair<ICLabel, ICLabel>> pairs) {
    FoldResult f;
    f.patient_id = id;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ICRecord r;
        r.ic_id = id + "_" + std::to_string(i);
        r.truth = pairs[i].first;
        r.fused = pairs[i].second;
        f.records.push_back(r);
    }
    return f;
}

// --- metrics -----------------------------------------------------------------

bool metrics_oracle(std::ostream& out) {
    constexpr auto S = ICLabel::SOZ, R = ICLabel::RSN, N = ICLabel::Noise;
    std::vector<FoldResult> folds;
    for (int i = 0; i < 44; ++i) folds.push_back(fold_of("tp" + std::to_string(i), {{S, S}, {R, R}}));
    for (int i = 0; i < 3; ++i) folds.push_back(fold_of("fp" + std::to_string(i), {{S, R}, {N, S}}));
    for (int i = 0; i < 5; ++i) folds.push_back(fold_of("fn" + std::to_string(i), {{S, N}, {R, R}}));
    const auto m = eval::patient_level_metrics(folds);
    const auto& c = m.confusion;
    const double tol = 0.0005;  // 0.05 percentage points
    out << "TP/FP/FN/TN " << c.tp << "/" << c.fp << "/" << c.fn << "/" << c.tn << "  sens " << *m.sensitivity << " prec "
        << *m.precision << " acc " << *m.accuracy;
    return c.tp == 44 && c.fp == 3 && c.fn == 5 && c.tn == 0 && std::abs(*m.sensitivity - 0.898) <= tol &&
           std::abs(*m.precision - 0.936) <= tol && std::abs(*m.accuracy - 0.846) <= tol;
}

// --- fusion ------------------------------------------------------------------

bool fusion_table(std::ostream& out) {
    const pipeline::FusionParams fp{0.9};
    const double lo = 0.9 - 1e-9, hi = 0.9 + 1e-9;
    using pipeline::fuse_labels;
    bool ok = true;
    // Step 1 non-noise: Step 2 decides.
    ok &= fuse_labels(Step1Label::NonNoise, ICLabel::RSN, 0.05, fp) == ICLabel::RSN;
    ok &= fuse_labels(Step1Label::NonNoise, ICLabel::SOZ, lo, fp) == ICLabel::SOZ;
    // Step 1 noise, Step 2 RSN: noise stands at any posterior.
    ok &= fuse_labels(Step1Label::Noise, ICLabel::RSN, hi, fp) == ICLabel::Noise;
    // Step 1 noise, Step 2 confident SOZ: overridden.
    ok &= fuse_labels(Step1Label::Noise, ICLabel::SOZ, hi, fp) == ICLabel::SOZ;
    ok &= fuse_labels(Step1Label::Noise, ICLabel::SOZ, 0.9, fp) == ICLabel::SOZ;
    // Step 1 noise, Step 2 unconfident SOZ: noise stands.
    ok &= fuse_labels(Step1Label::Noise, ICLabel::SOZ, lo, fp) == ICLabel::Noise;
    out << "4 cases at 0.9 +/- 1e-9 " << (ok ? "ok" : "WRONG");

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U;
    std::size_t violations = 0;
    const std::vector<double> grid{0.01, 0.1, 0.3, 0.5, 0.7, 0.85, 0.9, 0.95, 0.99, 0.999999};
    for (int fixture = 0; fixture < 1000; ++fixture) {
        std::vector<ICRecord> recs(20 + fixture % 40);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            auto& r = recs[i];
            r.ic_id = std::to_string(i);
            r.step1 = U(rng) < 0.55 ? Step1Label::Noise : Step1Label::NonNoise;
            r.p_soz = U(rng);
            r.step2 = *r.p_soz >= 0.5 ? ICLabel::SOZ : ICLabel::RSN;
        }
        FoldResult f;
        f.records = recs;
        std::size_t prev = recs.size() + 1;
        for (double t : grid) {
            std::size_t soz = 0;
            for (const auto& r : pipeline::refuse({f}, {t})[0].records) soz += r.fused == ICLabel::SOZ;
            violations += soz > prev;
            prev = soz;
        }
    }
    out << ", monotonicity violations " << violations << "/1000 fixtures";
    return ok && violations == 0;
}

// --- gradients ---------------------------------------------------------------

double gradient_error(const nn::NetworkConfig& c, std::uint64_t seed, bool train_mode) {
    auto net = nn::Network<double>::he_uniform(c, seed);
    std::mt19937_64 data_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    // He init leaves biases at zero, which can park every ReLU exactly on its
    // kink where finite differences see half a slope. Jitter all parameters.
    for (auto& w : net.params()) w += 0.2 * (U(data_rng) - 0.5);
    std::vector<std::vector<double>> images(4, std::vector<double>(c.channels * c.height * c.width));
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (auto& v : images[i]) v = U(data_rng);
        labels.push_back(i % c.label_count());
    }
    const std::vector<std::span<const double>> views(images.begin(), images.end());
    const std::mt19937_64 mask_rng(seed + 1);
    auto loss = [&] {
        auto r = mask_rng;
        return nn::loss_and_gradients<double>(net, views, labels, train_mode, train_mode ? &r : nullptr);
    };
    const auto analytic = loss().gradients;
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        const double saved = net.params()[i];
        net.params()[i] = saved + h;
        const double up = loss().loss;
        net.params()[i] = saved - h;
        const double down = loss().loss;
        net.params()[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max(std::abs(numeric) + std::abs(analytic[i]), 1e-7);
        worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
    return worst;
}

bool gradient_suite(std::ostream& out) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed * 7919);
        auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
        nn::NetworkConfig c;
        c.height = 8;
        c.width = 8;
        c.channels = pick(1, 3);
        c.conv_filters = {pick(1, 4)};
        c.dense_units = pick(2, 8);
        c.output_classes = pick(1, 3);
        c.dropout_rate = seed % 2 ? 0.0 : 0.3;
        if (c.output_classes > 1 && seed % 3 == 0)
            for (std::size_t k = 0; k < c.output_classes; ++k) c.class_weights.push_back(0.5 + 0.75 * static_cast<double>(k));
        worst = std::max(worst, gradient_error(c, seed, c.dropout_rate > 0));
    }
    out << "max relative error " << worst << " over 20 seeds (tolerance 1e-4)";
    return worst < 1e-4;
}

// --- closed forms ------------------------------------------------------------

std::vector<std::vector<spatial::Voxel>> brute_dbscan(std::vector<spatial::Voxel> pts, double eps, int vmin) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const std::size_t n = pts.size();
    auto d2 = [&](std::size_t i, std::size_t j) {
        const double dr = pts[i].row - pts[j].row, dc = pts[i].col - pts[j].col;
        return dr * dr + dc * dc;
    };
    auto near = [&](std::size_t i, std::size_t j) { return i != j && d2(i, j) <= eps * eps; };
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        int c = 0;
        for (std::size_t j = 0; j < n; ++j) c += near(i, j);
        core[i] = c > vmin;
    }
    std::vector<int> lab(n, -1);
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || lab[i] >= 0) continue;
        std::vector<std::size_t> stack{i};
        lab[i] = k;
        while (!stack.empty()) {
            const auto a = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j)
                if (core[j] && lab[j] < 0 && near(a, j)) {
                    lab[j] = k;
                    stack.push_back(j);
                }
        }
        ++k;
    }
    std::vector<std::vector<spatial::Voxel>> groups(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        int l = lab[i];
        if (!core[i]) {
            std::optional<std::size_t> best;
            for (std::size_t j = 0; j < n; ++j)
                if (core[j] && near(i, j) && (!best || d2(i, j) < d2(i, *best))) best = j;
            l = best ? lab[*best] : -1;
        }
        if (l >= 0) groups[static_cast<std::size_t>(l)].push_back(pts[i]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    std::sort(groups.begin(), groups.end());
    return groups;
}

bool closed_forms(std::ostream& out) {
    double gini_err = temporal::gini_index(std::vector<double>(37, 2.5));
    for (std::size_t n : {2u, 4u, 16u, 256u}) {
        std::vector<double> v(n, 0.0);
        v[n - 1] = 3.0;
        gini_err = std::max(gini_err, std::abs(temporal::gini_index(v) - (1.0 - 1.0 / static_cast<double>(n))));
    }

    temporal::TemporalParams tp;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    double recon_err = 0.0;
    std::vector<double> x(tp.window_len);
    for (int w = 0; w < 1000; ++w) {
        for (auto& v : x) v = nd(rng) * (1 + w % 10);
        const auto dec = temporal::atrous_decompose(x, tp);
        for (std::size_t t = 0; t < x.size(); ++t) {
            double s = dec.approximation[t];
            for (const auto& d : dec.details) s += d[t];
            recon_err = std::max(recon_err, std::abs(s - x[t]));
        }
    }

    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int side = 24 + trial % 40;
        const int n = 1 + static_cast<int>(rng() % 500);
        std::uniform_int_distribution<int> u(0, side - 1);
        std::vector<spatial::Voxel> pts;
        for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
        const double eps = trial % 3 == 0 ? 1.0 : trial % 3 == 1 ? 1.5 : 2.3;
        const int vmin = 1 + trial % 5;
        std::vector<std::vector<spatial::Voxel>> got;
        for (const auto& c : spatial::dbscan_points(pts, eps, vmin)) got.push_back(c.voxels);
        std::sort(got.begin(), got.end());
        mismatches += got != brute_dbscan(pts, eps, vmin);
    }
    out << "gini err " << gini_err << ", a-trous err " << recon_err << " (1000 windows), dbscan mismatches " << mismatches << "/200";
    return gini_err <= 1e-12 && recon_err < 1e-9 && mismatches == 0;
}

// --- SMOTE -------------------------------------------------------------------

bool smote_geometry(std::ostream& out) {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd;
    shallow::Rows M(200, shallow::Row(6));
    for (auto& r : M)
        for (auto& v : r) v = nd(rng);
    const std::size_t k = 5;
    const auto a = shallow::smote_oversample(M, M.size() + 10000, k, 99);
    const auto b = shallow::smote_oversample(M, M.size() + 10000, k, 99);

    // Brute-force neighbour sets; a pair tied with the k-th distance counts.
    std::vector<double> kth(M.size());
    auto dist2 = [&](std::size_t i, std::size_t j) {
        double s = 0;
        for (std::size_t f = 0; f < M[i].size(); ++f) s += (M[i][f] - M[j][f]) * (M[i][f] - M[j][f]);
        return s;
    };
    for (std::size_t i = 0; i < M.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < M.size(); ++j)
            if (j != i) d.push_back(dist2(i, j));
        std::nth_element(d.begin(), d.begin() + static_cast<long>(k - 1), d.end());
        kth[i] = d[k - 1];
    }

    double worst = 0.0;
    std::size_t bad_neighbour = 0;
    for (const auto& s : a.samples) {
        // Project onto the segment with freshly computed coordinates.
        const auto& p = M[s.base];
        const auto& q = M[s.neighbor];
        double num = 0, den = 0;
        for (std::size_t f = 0; f < p.size(); ++f) {
            num += (s.x[f] - p[f]) * (q[f] - p[f]);
            den += (q[f] - p[f]) * (q[f] - p[f]);
        }
        const double t = std::clamp(num / den, 0.0, 1.0);
        double r2 = 0;
        for (std::size_t f = 0; f < p.size(); ++f) r2 += std::pow(s.x[f] - (p[f] + t * (q[f] - p[f])), 2);
        worst = std::max(worst, std::sqrt(r2));
        bad_neighbour += s.neighbor == s.base || dist2(s.base, s.neighbor) > kth[s.base];
    }
    bool identical = a.samples.size() == b.samples.size();
    for (std::size_t i = 0; identical && i < a.samples.size(); ++i) identical = a.samples[i].x == b.samples[i].x;
    out << a.samples.size() << " points, max residual " << worst << ", non-neighbour pairs " << bad_neighbour
        << ", reproducible " << (identical ? "bit-exact" : "NO");
    return a.samples.size() == 10000 && worst < 1e-12 && bad_neighbour == 0 && identical;
}

// --- t-test ------------------------------------------------------------------

// Student-t upper tail by Simpson integration of the density.
double t_upper_tail(double t, double df) {
    auto pdf = [df](double x) {
        return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi) *
               std::pow(1 + x * x / df, -(df + 1) / 2);
    };
    const double hi = 400.0;
    const int n = 800000;
    const double h = (hi - t) / n;
    double s = pdf(t) + pdf(hi);
    for (int i = 1; i < n; ++i) s += pdf(t + i * h) * (i % 2 ? 4 : 2);
    return s * h / 3;
}

bool t_test_oracle(std::ostream& out) {
    const std::vector<double> same{0.3, 0.7, 0.9, 0.4};
    const double p_same = eval::one_sided_t_test(same, same).p;
    // a: mean 3, var 2.5; b: mean 2.8, var 0.7. t = 0.2 / sqrt(0.5 + 0.14) = 0.25,
    // df = 0.64^2 / (0.5^2/4 + 0.14^2/4) = 0.4096 / 0.0674.
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 2, 3, 3, 4};
    const auto r = eval::one_sided_t_test(a, b);
    const double df = 0.4096 / 0.0674;
    const double p = t_upper_tail(0.25, df);
    out << "identical p " << p_same << ", fixture t " << r.t << " df " << r.df << " p " << r.p << " (oracle " << p << ")";
    return p_same == 0.5 && std::abs(r.t - 0.25) < 1e-6 && std::abs(r.df - df) < 1e-6 && std::abs(r.p - p) < 1e-6;
}

// --- end to end --------------------------------------------------------------

struct EndToEnd {
    std::vector<std::vector<FoldResult>> results;  // full, no-spatial, no-wm-overlap
    std::map<std::string, std::set<std::string>> reference;
    double seconds = 0;
};

EndToEnd run_end_to_end(const std::filesystem::path& report_dir) {
    EndToEnd e;
    const auto t0 = Clock::now();
    GeneratorParams gp;  // 52 x 100, 55/40/5, seed 42
    pipeline::PipelineConfig cfg;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto cohort = pipeline::prepare_generated(gp, cfg.features, cfg.network);
    const std::vector<pipeline::AblationMask> masks{pipeline::AblationMask::named("full"), pipeline::AblationMask::named("no-spatial"),
                                                    pipeline::AblationMask::named("no-wm-overlap")};
    e.results = pipeline::run_lopo_cv(cohort, cfg, masks);
    e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    // Reference hashes come from regenerating each patient, not from the pipeline.
    for (std::size_t i = 0; i < gp.n_patients; ++i) {
        const auto p = generate_patient(gp, i);
        for (const auto& ic : p.ics) e.reference[p.patient_id].insert(content_hash(p.patient_id, ic));
    }

    report::ReportInput in;
    in.run = {{"command", "acceptance"}, {"seed", cfg.seed}, {"cohort", to_json(gp)}};
    in.methods.push_back({"deepxsoz", e.results[0]});
    for (std::size_t m = 0; m < masks.size(); ++m) in.ablations.push_back({masks[m], e.results[m]});
    report::emit_report(in, report_dir);
    return e;
}

}  // namespace

int main(int argc, char** argv) {
    std::filesystem::path report_dir = std::filesystem::temp_directory_path() / "deepxsoz_acceptance";
    bool quick = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--quick") quick = true;
        else report_dir = a;
    }

    criterion("metrics-oracle", 1, metrics_oracle);
    criterion("fusion-truth-table", 5, fusion_table);
    criterion("gradient-suite", 120, gradient_suite);
    criterion("closed-forms", 60, closed_forms);
    criterion("smote-geometry", 30, smote_geometry);
    criterion("t-test-oracle", 5, t_test_oracle);

    if (quick) {
        std::printf("SKIP  end-to-end, ablation-direction, leakage-audit (--quick)\n");
        return failures == 0 ? 0 : 1;
    }

    EndToEnd e;
    try {
        e = run_end_to_end(report_dir);
    } catch (const std::exception& ex) {
        verdict("end-to-end", false, 0, 1800, std::string("exception: ") + ex.what());
        return 1;
    }
    const auto plm = eval::patient_level_metrics(e.results[0]);
    const auto ilm = eval::ic_level_metrics(e.results[0]);
    {
        std::ostringstream d;
        d << "PLM sens " << plm.sensitivity.value_or(-1) << " (>= 0.85) prec " << plm.precision.value_or(-1) << " (>= 0.85), MM-SOZ "
          << ilm.mm_soz.mean.value_or(-1) << " (<= 25), effort " << ilm.effort_reduction.mean.value_or(-1) << "x (>= 4), report "
          << report_dir.string();
        const bool ok = plm.sensitivity.value_or(0) >= 0.85 && plm.precision.value_or(0) >= 0.85 && ilm.mm_soz.mean.value_or(1e9) <= 25 &&
                        ilm.effort_reduction.mean.value_or(0) >= 4;
        verdict("end-to-end", ok, e.seconds, 1800, d.str());
    }
    {
        const double full = ilm.mm_soz.mean.value_or(0);
        const double no_spatial = eval::ic_level_metrics(e.results[1]).mm_soz.mean.value_or(0);
        const double no_wm = eval::ic_level_metrics(e.results[2]).mm_soz.mean.value_or(0);
        std::ostringstream d;
        d << "mean MM-SOZ full " << full << ", no-spatial " << no_spatial << ", no-wm-overlap " << no_wm;
        verdict("ablation-direction", no_spatial > full && no_wm > full, 0, 1, d.str());
    }
    {
        const auto t0 = Clock::now();
        std::size_t checked = 0, violations = 0;
        for (const auto& folds : e.results) {
            const auto audit = pipeline::audit_leakage(folds, e.reference);
            checked += audit.folds_checked;
            violations += audit.violations;
        }
        std::ostringstream d;
        d << checked << " folds checked across 3 masks, " << violations << " held-out ICs in training inputs";
        verdict("leakage-audit", checked == 3 * 52 && violations == 0, std::chrono::duration<double>(Clock::now() - t0).count(), 60,
                d.str());
    }
    return failures == 0 ? 0 : 1;
}
