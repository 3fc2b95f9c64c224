#pragma once
// report.json (schema-versioned) plus plm.csv, ilm.csv, ablation.csv and
// roc.csv. Undefined ratios are written as null / empty cells.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eval.hpp"

namespace deepxsoz::report {

inline constexpr std::string_view kSchemaName = "deepxsoz-report";
inline constexpr int kSchemaVersion = 1;

struct MethodResult {
    std::string name;
    std::vector<pipeline::FoldResult> folds;
};

struct AblationResult {
    pipeline::AblationMask mask;
    std::vector<pipeline::FoldResult> folds;
};

struct ReportInput {
    nlohmann::json run = nlohmann::json::object();  // config echo, seeds, cohort description
    std::vector<MethodResult> methods;               // the first is compared against the rest
    std::vector<AblationResult> ablations;
    std::vector<eval::RocPoint> roc;
};

inline nlohmann::json opt(const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const eval::Summary& s) { return {{"mean", opt(s.mean)}, {"sd", opt(s.sd)}, {"n", s.n}}; }

inline nlohmann::json plm_json(const eval::PatientLevelMetrics& m) {
    return {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn},
            {"n", m.confusion.n()}, {"accuracy", opt(m.accuracy)}, {"precision", opt(m.precision)},
            {"sensitivity", opt(m.sensitivity)}};
}

inline nlohmann::json ilm_json(const eval::ICLevelMetrics& m) {
    return {{"accuracy", to_json(m.accuracy)},       {"precision", to_json(m.precision)},
            {"sensitivity", to_json(m.sensitivity)}, {"specificity", to_json(m.specificity)},
            {"f1", to_json(m.f1)},                   {"fpr", to_json(m.fpr)},
            {"mm_soz", to_json(m.mm_soz)},           {"effort_reduction", to_json(m.effort_reduction)}};
}

inline nlohmann::json failures_json(const std::vector<pipeline::FoldResult>& folds) {
    auto out = nlohmann::json::array();
    for (const auto& f : folds)
        if (!f.ok) out.push_back({{"patient_id", f.patient_id}, {"reason", f.failure}});
    return out;
}

inline std::string num(const std::optional<double>& x) {
    if (!x) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *x);
    return buf;
}

inline std::string num(double x) { return num(std::optional<double>(x)); }

// Per-patient values of an IC-level metric, skipping undefined ones.
template <typename Getter>
std::vector<double> per_patient(const eval::ICLevelMetrics& m, Getter g) {
    std::vector<double> v;
    for (const auto& p : m.per_patient)
        if (auto x = g(p)) v.push_back(*x);
    return v;
}

inline nlohmann::json build_report(const ReportInput& in) {
    nlohmann::json j{{"schema", kSchemaName}, {"schema_version", kSchemaVersion}, {"run", in.run}};
    j["effort_reduction_rule"] = "total ICs / max(MM-SOZ, 1); MM-SOZ = 0 counts as full reduction";
    j["methods"] = nlohmann::json::array();
    std::vector<eval::ICLevelMetrics> ilms;
    for (const auto& m : in.methods) {
        const auto plm = eval::patient_level_metrics(m.folds);
        ilms.push_back(eval::ic_level_metrics(m.folds));
        std::size_t evaluated = 0;
        for (const auto& f : m.folds) evaluated += f.ok ? 1 : 0;
        j["methods"].push_back({{"name", m.name},
                                {"n_patients", m.folds.size()},
                                {"n_evaluated", evaluated},
                                {"failed_folds", failures_json(m.folds)},
                                {"plm", plm_json(plm)},
                                {"ilm", ilm_json(ilms.back())}});
    }

    j["comparisons"] = nlohmann::json::array();
    using Get = std::optional<double> (*)(const eval::PatientICMetrics&);
    const std::vector<std::pair<std::string, Get>> metrics{
        {"sensitivity", [](const eval::PatientICMetrics& p) { return p.sensitivity; }},
        {"precision", [](const eval::PatientICMetrics& p) { return p.precision; }},
        {"f1", [](const eval::PatientICMetrics& p) { return p.f1; }}};
    for (std::size_t k = 1; k < in.methods.size(); ++k)
        for (const auto& [name, get] : metrics) {
            const auto a = per_patient(ilms[0], get), b = per_patient(ilms[k], get);
            nlohmann::json c{{"method_a", in.methods[0].name}, {"method_b", in.methods[k].name}, {"metric", name},
                             {"alternative", "a > b"}, {"n_a", a.size()}, {"n_b", b.size()}};
            if (a.size() >= 2 && b.size() >= 2) {
                const auto t = eval::one_sided_t_test(a, b);
                c["t"] = std::isfinite(t.t) ? nlohmann::json(t.t) : nlohmann::json(nullptr);
                c["df"] = t.df;
                c["p"] = t.p;
                c["zero_variance"] = t.zero_variance;
            } else {
                c["t"] = c["df"] = c["p"] = nullptr;
                c["zero_variance"] = false;
            }
            j["comparisons"].push_back(std::move(c));
        }

    j["ablation"] = nlohmann::json::array();
    for (const auto& a : in.ablations) {
        std::vector<std::string> feats;
        for (auto i : a.mask.indices()) feats.emplace_back(kFeatureNames[i]);
        j["ablation"].push_back({{"mask", a.mask.name},
                                 {"features", feats},
                                 {"failed_folds", failures_json(a.folds)},
                                 {"plm", plm_json(eval::patient_level_metrics(a.folds))},
                                 {"ilm", ilm_json(eval::ic_level_metrics(a.folds))}});
    }

    j["roc"] = nlohmann::json::array();
    for (const auto& p : in.roc)
        j["roc"].push_back({{"sweep", p.sweep}, {"parameter", p.parameter}, {"training_fraction", p.training_fraction},
                            {"sensitivity", opt(p.sensitivity)}, {"fpr", opt(p.fpr)}, {"mean_mm_soz", p.mean_mm_soz}});
    return j;
}

inline void emit_report(const ReportInput& in, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw RuntimeFailure("cannot create report directory " + dir.string() + ": " + ec.message());
    const auto j = build_report(in);

    std::string plm = "method,n,tp,fp,fn,tn,accuracy,precision,sensitivity\n";
    std::string ilm = "method,metric,mean,sd,n\n";
    for (const auto& m : j["methods"]) {
        const auto& p = m["plm"];
        auto o = [](const nlohmann::json& x) { return x.is_null() ? std::optional<double>{} : std::optional<double>(x.get<double>()); };
        plm += m["name"].get<std::string>() + "," + std::to_string(p["n"].get<std::size_t>()) + "," +
               std::to_string(p["tp"].get<std::size_t>()) + "," + std::to_string(p["fp"].get<std::size_t>()) + "," +
               std::to_string(p["fn"].get<std::size_t>()) + "," + std::to_string(p["tn"].get<std::size_t>()) + "," +
               num(o(p["accuracy"])) + "," + num(o(p["precision"])) + "," + num(o(p["sensitivity"])) + "\n";
        for (const auto& [metric, s] : m["ilm"].items())
            ilm += m["name"].get<std::string>() + "," + metric + "," + num(o(s["mean"])) + "," + num(o(s["sd"])) + "," +
                   std::to_string(s["n"].get<std::size_t>()) + "\n";
    }

    std::string abl = "mask,features,plm_accuracy,plm_precision,plm_sensitivity,ilm_sensitivity_mean,ilm_precision_mean,mm_soz_mean,mm_soz_sd,effort_reduction_mean\n";
    for (const auto& a : in.ablations) {
        const auto plm_m = eval::patient_level_metrics(a.folds);
        const auto ilm_m = eval::ic_level_metrics(a.folds);
        std::string feats;
        for (auto i : a.mask.indices()) feats += (feats.empty() ? "" : ";") + std::string(kFeatureNames[i]);
        abl += a.mask.name + "," + feats + "," + num(plm_m.accuracy) + "," + num(plm_m.precision) + "," + num(plm_m.sensitivity) + "," +
               num(ilm_m.sensitivity.mean) + "," + num(ilm_m.precision.mean) + "," + num(ilm_m.mm_soz.mean) + "," +
               num(ilm_m.mm_soz.sd) + "," + num(ilm_m.effort_reduction.mean) + "\n";
    }

    std::string roc = "sweep,parameter,training_fraction,sensitivity,fpr,mean_mm_soz\n";
    for (const auto& p : in.roc)
        roc += p.sweep + "," + num(p.parameter) + "," + num(p.training_fraction) + "," + num(p.sensitivity) + "," + num(p.fpr) + "," +
               num(p.mean_mm_soz) + "\n";

    try {
        write_file_atomic(dir / "report.json", j.dump(2) + "\n");
        write_file_atomic(dir / "plm.csv", plm);
        write_file_atomic(dir / "ilm.csv", ilm);
        write_file_atomic(dir / "ablation.csv", abl);
        write_file_atomic(dir / "roc.csv", roc);
    } catch (const std::exception& e) {
        throw RuntimeFailure(std::string("cannot write report: ") + e.what());
    }
}

}  // namespace deepxsoz::report
