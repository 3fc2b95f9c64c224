#pragma once
// Patient-level and IC-level metrics, effort reduction, ROC assembly and the
// one-sided Welch t-test used to compare methods.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "pipeline.hpp"

namespace deepxsoz::eval {

using pipeline::FoldResult;

// --- patient level ------------------------------------------------------------

enum class PatientOutcome { TP, FP, FN, TN };

inline std::string_view to_string(PatientOutcome o) {
    switch (o) {
        case PatientOutcome::TP: return "TP";
        case PatientOutcome::FP: return "FP";
        case PatientOutcome::FN: return "FN";
        case PatientOutcome::TN: return "TN";
    }
    return "?";
}

// S = ICs fused as SOZ, G = true SOZ ICs. A patient is a hit if any flagged
// IC is a true SOZ IC; flagging only wrong ICs is a false positive whether or
// not the patient has SOZ ICs.
inline PatientOutcome classify_patient(const FoldResult& f) {
    bool any_s = false, any_g = false, hit = false;
    for (const auto& r : f.records) {
        const bool s = r.fused == ICLabel::SOZ, g = r.truth == ICLabel::SOZ;
        any_s = any_s || s;
        any_g = any_g || g;
        hit = hit || (s && g);
    }
    if (hit) return PatientOutcome::TP;
    if (any_s) return PatientOutcome::FP;
    return any_g ? PatientOutcome::FN : PatientOutcome::TN;
}

struct PatientConfusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t n() const { return tp + fp + fn + tn; }
    friend bool operator==(const PatientConfusion&, const PatientConfusion&) = default;
};

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

struct PatientLevelMetrics {
    PatientConfusion confusion;
    std::optional<double> accuracy, precision, sensitivity;
    std::vector<std::string> failed;  // folds excluded from the counts
};

inline PatientLevelMetrics plm_from_confusion(const PatientConfusion& c) {
    return {c, ratio(c.tp + c.tn, c.n()), ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn), {}};
}

inline PatientLevelMetrics patient_level_metrics(std::span<const FoldResult> folds) {
    if (folds.empty()) throw std::invalid_argument("patient_level_metrics: no fold results");
    PatientConfusion c;
    std::vector<std::string> failed;
    for (const auto& f : folds) {
        if (!f.ok) {
            failed.push_back(f.patient_id);
            continue;
        }
        switch (classify_patient(f)) {
            case PatientOutcome::TP: ++c.tp; break;
            case PatientOutcome::FP: ++c.fp; break;
            case PatientOutcome::FN: ++c.fn; break;
            case PatientOutcome::TN: ++c.tn; break;
        }
    }
    auto m = plm_from_confusion(c);
    m.failed = std::move(failed);
    return m;
}

// --- IC level -----------------------------------------------------------------

struct BinaryConfusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const BinaryConfusion&, const BinaryConfusion&) = default;
};

inline BinaryConfusion soz_confusion(const FoldResult& f) {
    BinaryConfusion c;
    for (const auto& r : f.records) {
        const bool s = r.fused == ICLabel::SOZ, g = r.truth == ICLabel::SOZ;
        if (s && g) ++c.tp;
        else if (s) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

struct PatientICMetrics {
    std::string patient_id;
    BinaryConfusion confusion;
    std::optional<double> accuracy, precision, sensitivity, specificity, f1, fpr;
    std::size_t mm_soz = 0;
    std::size_t total = 0;
    double effort_reduction = 0.0;  // total / max(MM-SOZ, 1)
};

inline PatientICMetrics patient_ic_metrics(const FoldResult& f) {
    PatientICMetrics m;
    m.patient_id = f.patient_id;
    const auto c = m.confusion = soz_confusion(f);
    m.total = c.total();
    m.mm_soz = c.tp + c.fp;
    m.accuracy = ratio(c.tp + c.tn, c.total());
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.sensitivity = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.tn + c.fp);
    m.fpr = ratio(c.fp, c.tn + c.fp);
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    m.effort_reduction = static_cast<double>(m.total) / static_cast<double>(std::max<std::size_t>(m.mm_soz, 1));
    return m;
}

// Mean and sample SD over the defined values; SD needs two or more.
struct Summary {
    std::optional<double> mean, sd;
    std::size_t n = 0;
};

inline Summary summarize(const std::vector<std::optional<double>>& xs) {
    std::vector<double> v;
    for (const auto& x : xs)
        if (x) v.push_back(*x);
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    s.mean = mean;
    if (v.size() >= 2) {
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

struct ICLevelMetrics {
    std::vector<PatientICMetrics> per_patient;
    Summary accuracy, precision, sensitivity, specificity, f1, fpr, mm_soz, effort_reduction;
};

inline ICLevelMetrics ic_level_metrics(std::span<const FoldResult> folds) {
    ICLevelMetrics out;
    for (const auto& f : folds)
        if (f.ok) out.per_patient.push_back(patient_ic_metrics(f));
    auto collect = [&](auto getter) {
        std::vector<std::optional<double>> xs;
        for (const auto& p : out.per_patient) xs.push_back(getter(p));
        return summarize(xs);
    };
    out.accuracy = collect([](const PatientICMetrics& p) { return p.accuracy; });
    out.precision = collect([](const PatientICMetrics& p) { return p.precision; });
    out.sensitivity = collect([](const PatientICMetrics& p) { return p.sensitivity; });
    out.specificity = collect([](const PatientICMetrics& p) { return p.specificity; });
    out.f1 = collect([](const PatientICMetrics& p) { return p.f1; });
    out.fpr = collect([](const PatientICMetrics& p) { return p.fpr; });
    out.mm_soz = collect([](const PatientICMetrics& p) { return std::optional<double>(static_cast<double>(p.mm_soz)); });
    out.effort_reduction = collect([](const PatientICMetrics& p) { return std::optional<double>(p.effort_reduction); });
    return out;
}

inline Summary effort_reduction(std::span<const FoldResult> folds) { return ic_level_metrics(folds).effort_reduction; }

// --- ROC ----------------------------------------------------------------------

struct RocPoint {
    std::string sweep;  // "threshold" or "training_fraction"
    double parameter = 0.0;
    double training_fraction = 1.0;
    std::optional<double> sensitivity, fpr;  // means of per-patient IC-level rates
    double mean_mm_soz = 0.0;
};

inline RocPoint roc_point(std::span<const FoldResult> folds, std::string sweep, double parameter, double training_fraction) {
    const auto m = ic_level_metrics(folds);
    return {std::move(sweep), parameter, training_fraction, m.sensitivity.mean, m.fpr.mean, m.mm_soz.mean.value_or(0.0)};
}

// Sorted by FPR (undefined last), then sensitivity, then sweep parameter.
inline std::vector<RocPoint> roc_assemble(std::vector<RocPoint> points) {
    if (points.size() < 2) throw std::invalid_argument("roc_assemble: need at least 2 sweep points");
    auto key = [](const std::optional<double>& x) { return x.value_or(std::numeric_limits<double>::infinity()); };
    std::stable_sort(points.begin(), points.end(), [&](const RocPoint& a, const RocPoint& b) {
        if (key(a.fpr) != key(b.fpr)) return key(a.fpr) < key(b.fpr);
        if (key(a.sensitivity) != key(b.sensitivity)) return key(a.sensitivity) < key(b.sensitivity);
        return a.parameter < b.parameter;
    });
    return points;
}

// --- one-sided Welch t-test ---------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 0.5;               // P(T >= t) under H0; alternative mean(A) > mean(B)
    bool zero_variance = false;   // both samples constant: p set by the sign of the difference
};

inline TTestResult one_sided_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test: each sample needs >= 2 values");
    auto moments = [](std::span<const double> x) {
        double m = 0.0;
        for (double v : x) {
            if (!std::isfinite(v)) throw std::invalid_argument("t-test: non-finite sample value");
            m += v;
        }
        m /= static_cast<double>(x.size());
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return std::pair{m, ss / static_cast<double>(x.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double qa = va / na, qb = vb / nb;
    const double se2 = qa + qb;
    TTestResult r;
    const double diff = ma - mb;
    if (!(se2 > 0.0)) {
        r.zero_variance = true;
        r.t = diff > 0 ? std::numeric_limits<double>::infinity() : diff < 0 ? -std::numeric_limits<double>::infinity() : 0.0;
        r.df = na + nb - 2.0;
        r.p = diff > 0 ? 0.0 : diff < 0 ? 1.0 : 0.5;
        return r;
    }
    r.t = diff / std::sqrt(se2);
    r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    if (r.t == 0.0) {
        r.p = 0.5;
        return r;
    }
    const boost::math::students_t dist(r.df);
    r.p = boost::math::cdf(boost::math::complement(dist, r.t));
    return r;
}

}  // namespace deepxsoz::eval
