#pragma once
// Run configuration: one JSON document, unknown keys rejected, parse errors
// reported with line and column. CLI flags are applied on top by the caller.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipeline.hpp"

namespace deepxsoz {

struct RunConfig {
    std::filesystem::path cohort;
    std::filesystem::path out = "out";
    std::string network_profile = "desk";
    pipeline::PipelineConfig pipeline;
    std::vector<std::string> masks = pipeline::AblationMask::names();
    std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> thresholds{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
};

namespace detail {

// Reads fields from a JSON object and rejects any key nobody asked for.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& field) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            field = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type");
        }
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace detail

inline nlohmann::json parse_json_text(std::string_view text, const std::string& source) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON (" + e.what() + ")");
    }
}

inline void apply_network_profile(RunConfig& c, const std::string& profile) {
    if (profile == "desk") c.pipeline.network = nn::NetworkConfig::desk_profile();
    else if (profile == "paper") c.pipeline.network = nn::NetworkConfig::paper_profile();
    else throw ConfigError("unknown network profile '" + profile + "' (expected desk or paper)");
    c.network_profile = profile;
}

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
    detail::StrictObject root(j, "config");
    std::string cohort = c.cohort.string(), out = c.out.string();
    root.get("cohort", cohort);
    root.get("out", out);
    c.cohort = cohort;
    c.out = out;
    auto& p = c.pipeline;
    root.get("seed", p.seed);
    root.get("threads", p.threads);
    root.get("step1_groups", p.step1_groups);
    root.get("training_fraction", p.training_fraction);
    root.get("smote_k", p.smote_k);
    root.get("ls_svm_gamma", p.ls_svm_gamma);
    root.get("masks", c.masks);
    root.get("fractions", c.fractions);
    root.get("thresholds", c.thresholds);

    if (const auto* n = root.child("network")) {
        if (!n->is_object()) throw ConfigError("config.network: expected an object");
        nlohmann::json rest = *n;
        if (rest.contains("profile")) {
            if (!rest["profile"].is_string()) throw ConfigError("config.network.profile: wrong type");
            apply_network_profile(c, rest["profile"].get<std::string>());
            rest.erase("profile");
        }
        try {
            p.network = nn::network_config_from_json(rest, p.network);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config.network: wrong value type");
        }
    }
    if (const auto* s = root.child("spatial")) {
        detail::StrictObject o(*s, "config.spatial");
        auto& sp = p.features.spatial;
        std::string mode = sp.threshold_mode == spatial::ThresholdMode::Absolute ? "absolute" : "relative";
        o.get("threshold_mode", mode);
        if (mode == "absolute") sp.threshold_mode = spatial::ThresholdMode::Absolute;
        else if (mode == "relative") sp.threshold_mode = spatial::ThresholdMode::RelativeToMax;
        else throw ConfigError("config.spatial.threshold_mode: expected 'relative' or 'absolute'");
        o.get("activation_threshold", sp.activation_threshold);
        o.get("eps", sp.eps);
        o.get("vmin", sp.vmin);
        o.get("large_cluster_px", sp.large_cluster_px);
        o.get("sobel_edge_threshold", sp.sobel_edge_threshold);
        o.get("wm_band_width", sp.wm_band_width);
        o.get("scale_to_dims", p.features.scale_spatial_to_dims);
        o.finish();
    }
    if (const auto* t = root.child("temporal")) {
        detail::StrictObject o(*t, "config.temporal");
        auto& tp = p.features.temporal;
        o.get("window_len", tp.window_len);
        o.get("n_levels", tp.n_levels);
        o.get("f_lo", tp.f_lo);
        o.get("f_hi", tp.f_hi);
        o.get("dominance_cutoff", tp.dominance_cutoff);
        o.get("per_level_gini", tp.per_level_gini);
        std::vector<double> filter;
        o.get("smoothing_filter", filter);
        if (!filter.empty()) {
            tp.smoothing_filter = filter;
            tp.filter_name = "custom";
        }
        o.finish();
    }
    if (const auto* f = root.child("fusion")) {
        detail::StrictObject o(*f, "config.fusion");
        o.get("posterior_threshold", p.fusion.posterior_threshold);
        o.finish();
    }
    if (const auto* s = root.child("svm")) {
        detail::StrictObject o(*s, "config.svm");
        o.get("C", p.svm.C);
        o.get("platt_folds", p.svm.platt_folds);
        o.get("gap_tolerance", p.svm.solver.gap_tolerance);
        o.get("max_iterations", p.svm.solver.max_iterations);
        o.finish();
    }
    root.finish();
    return c;
}

inline void validate(const RunConfig& c) {
    try {
        c.pipeline.validate();
        nn::make_layout(c.pipeline.network);
        c.pipeline.features.spatial.validate();
        c.pipeline.features.temporal.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    for (const auto& m : c.masks) pipeline::AblationMask::named(m).indices();
    for (double f : c.fractions)
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0,1]");
    for (double t : c.thresholds)
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("thresholds must lie in (0,1)");
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return run_config_from_json(parse_json_text(text, path.string()), std::move(base));
}

inline nlohmann::json to_json(const RunConfig& c) {
    const auto& p = c.pipeline;
    const auto& sp = p.features.spatial;
    const auto& tp = p.features.temporal;
    nlohmann::json net = nn::to_json(p.network);
    net["profile"] = c.network_profile;
    return {{"cohort", c.cohort.string()},
            {"out", c.out.string()},
            {"seed", p.seed},
            {"threads", p.threads},
            {"step1_groups", p.step1_groups},
            {"training_fraction", p.training_fraction},
            {"smote_k", p.smote_k},
            {"ls_svm_gamma", p.ls_svm_gamma},
            {"masks", c.masks},
            {"fractions", c.fractions},
            {"thresholds", c.thresholds},
            {"network", net},
            {"spatial",
             {{"threshold_mode", sp.threshold_mode == spatial::ThresholdMode::Absolute ? "absolute" : "relative"},
              {"activation_threshold", sp.activation_threshold},
              {"eps", sp.eps},
              {"vmin", sp.vmin},
              {"large_cluster_px", sp.large_cluster_px},
              {"sobel_edge_threshold", sp.sobel_edge_threshold},
              {"wm_band_width", sp.wm_band_width},
              {"scale_to_dims", p.features.scale_spatial_to_dims}}},
            {"temporal",
             {{"window_len", tp.window_len},
              {"n_levels", tp.n_levels},
              {"f_lo", tp.f_lo},
              {"f_hi", tp.f_hi},
              {"dominance_cutoff", tp.dominance_cutoff},
              {"per_level_gini", tp.per_level_gini},
              {"smoothing_filter", tp.smoothing_filter}}},
            {"fusion", {{"posterior_threshold", p.fusion.posterior_threshold}}},
            {"svm",
             {{"C", p.svm.C},
              {"platt_folds", p.svm.platt_folds},
              {"gap_tolerance", p.svm.solver.gap_tolerance},
              {"max_iterations", p.svm.solver.max_iterations}}}};
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace deepxsoz
