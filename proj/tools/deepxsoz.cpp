// deepxsoz command-line entry point.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure. Errors
// are printed to stderr as one JSON object; progress logs also go to stderr.

#include <deepxsoz/cohort_io.hpp>
#include <deepxsoz/config.hpp>
#include <deepxsoz/report.hpp>
#include <deepxsoz/review_service.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

using namespace deepxsoz;
namespace fs = std::filesystem;

namespace {

void log(const std::string& msg) { std::cerr << "[deepxsoz] " << msg << std::endl; }

int fail(int code, std::string_view kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}}.dump() << std::endl;
    return code;
}

// Flags shared by the pipeline commands; set values override the config file.
struct CommonFlags {
    std::string config, cohort, out, profile;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads, step1_groups;
    std::optional<double> threshold;

    void add_to(CLI::App* app, bool needs_out = true) {
        app->add_option("--config", config, "JSON run configuration (flags override its values)");
        app->add_option("--cohort", cohort, "cohort directory written by `gen`");
        if (needs_out) app->add_option("--out", out, "output directory");
        app->add_option("--seed", seed, "pipeline seed");
        app->add_option("--threads", threads, "parallel folds");
        app->add_option("--profile", profile, "network profile: desk or paper");
        app->add_option("--step1-groups", step1_groups, "train Step 1 once per patient group (0 = per patient)");
        app->add_option("--threshold", threshold, "fusion posterior threshold");
    }

    RunConfig resolve() const {
        RunConfig c;
        if (!config.empty()) c = load_run_config(config);
        if (!cohort.empty()) c.cohort = cohort;
        if (!out.empty()) c.out = out;
        if (!profile.empty()) apply_network_profile(c, profile);
        if (seed) c.pipeline.seed = *seed;
        if (threads) c.pipeline.threads = *threads;
        if (step1_groups) c.pipeline.step1_groups = *step1_groups;
        if (threshold) c.pipeline.fusion.posterior_threshold = *threshold;
        if (c.cohort.empty()) throw ConfigError("no cohort given (--cohort or \"cohort\" in the config)");
        validate(c);
        return c;
    }
};

pipeline::PreparedCohort prepare(const RunConfig& c) {
    log("preparing cohort " + c.cohort.string());
    pipeline::PreparedCohort pc{{}, c.pipeline.network.height, c.pipeline.network.width, c.pipeline.network.channels};
    for_each_patient(c.cohort, [&](Patient&& p) {
        pc.patients.push_back(pipeline::prepare_patient(p, c.pipeline.features, c.pipeline.network));
    });
    if (pc.patients.empty()) throw DataError("cohort has no patients");
    log("prepared " + std::to_string(pc.patients.size()) + " patients, " + std::to_string(pc.ic_count()) + " ICs");
    return pc;
}

void write_run_manifest(const RunConfig& c, const std::string& command) {
    fs::create_directories(c.out);
    const auto cfg = to_json(c);
    write_file_atomic(c.out / "config.json", cfg.dump(2) + "\n");
    write_file_atomic(c.out / "run_manifest.json",
                      nlohmann::json{{"command", command}, {"config_sha256", config_hash(c)}, {"seed", c.pipeline.seed}, {"config", cfg}}.dump(2) + "\n");
}

pipeline::FoldSink fold_writer(const fs::path& out) {
    return [out](const pipeline::FoldResult& f) {
        pipeline::write_fold(out, f);
        log(f.method + "/" + f.mask + " " + f.patient_id + (f.ok ? " done" : " FAILED: " + f.failure));
    };
}

std::vector<pipeline::AblationMask> masks_of(const std::vector<std::string>& names) {
    std::vector<pipeline::AblationMask> out;
    for (const auto& n : names) out.push_back(pipeline::AblationMask::named(n));
    return out;
}

std::vector<eval::RocPoint> threshold_points(const std::vector<pipeline::FoldResult>& folds, const RunConfig& c) {
    std::vector<eval::RocPoint> pts;
    for (double t : c.thresholds)
        pts.push_back(eval::roc_point(pipeline::refuse(folds, {t}), "threshold", t, c.pipeline.training_fraction));
    return pts;
}

nlohmann::json run_description(const RunConfig& c, const std::string& command) {
    return {{"command", command}, {"config_sha256", config_hash(c)}, {"seed", c.pipeline.seed}, {"config", to_json(c)}};
}

int cmd_gen(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed, std::optional<std::uint32_t> patients,
            std::optional<std::uint32_t> ics, std::optional<std::uint32_t> bold_len) {
    GeneratorParams p;
    if (!config.empty()) {
        const std::string text = read_file(config);
        auto j = parse_json_text(text, config);
        nlohmann::json base = to_json(p);
        for (const auto& [k, v] : j.items()) {
            if (!base.contains(k)) throw ConfigError(config + ": unknown key '" + k + "'");
            base[k] = v;
        }
        try {
            p = generator_params_from_json(base);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(config + ": " + e.what());
        }
    }
    if (seed) p.seed = *seed;
    if (patients) p.n_patients = *patients;
    if (ics) p.ics_per_patient = *ics;
    if (bold_len) p.bold_len = *bold_len;
    try {
        validate(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (fs::exists(fs::path(out) / "manifest.json")) log("overwriting cohort in " + out);
    generate_cohort_to(p, out);
    log("wrote " + std::to_string(p.n_patients) + " patients x " + std::to_string(p.ics_per_patient) + " ICs to " + out);
    return 0;
}

int cmd_features(const std::string& cohort, const std::string& out, const std::string& config) {
    RunConfig c;
    if (!config.empty()) c = load_run_config(config);
    std::string spatial = "ic_id,n_clusters,wm_overlap\n", temporal = "ic_id,activelet_gini,sine_gini,hf_dominant\n";
    for_each_patient(cohort, [&](Patient&& p) {
        for (const auto& ic : p.ics) {
            const auto f = extract_features(ic, c.pipeline.features);
            spatial += ic.ic_id + "," + report::num(f.n_clusters) + "," + report::num(f.wm_overlap) + "\n";
            temporal += ic.ic_id + "," + report::num(f.activelet_gini) + "," + report::num(f.sine_gini) + "," + (f.hf_dominant > 0.5 ? "1" : "0") + "\n";
        }
        log("features " + p.patient_id);
    });
    write_file_atomic(fs::path(out) / "spatial_features.csv", spatial);
    write_file_atomic(fs::path(out) / "temporal_features.csv", temporal);
    return 0;
}

int cmd_train_step1(const CommonFlags& flags, const std::string& model_path) {
    const auto c = flags.resolve();
    const auto pc = prepare(c);
    std::vector<std::size_t> all(pc.patients.size());
    std::iota(all.begin(), all.end(), 0);
    auto net = c.pipeline.network;
    net.seed = c.pipeline.seed;
    const auto model = pipeline::train_step1(pc, all, net);
    nn::save_model(model, model_path);
    log("step-1 model written to " + model_path + " (best epoch " + std::to_string(model.log.best_epoch) + ")");
    return 0;
}

int cmd_train_step2(const CommonFlags& flags, const std::string& model_path, const std::string& mask) {
    const auto c = flags.resolve();
    const auto pc = prepare(c);
    std::vector<std::size_t> all(pc.patients.size());
    std::iota(all.begin(), all.end(), 0);
    const auto m = pipeline::train_step2(pc, all, pipeline::AblationMask::named(mask), c.pipeline, c.pipeline.seed);
    auto j = shallow::to_json(m.svm);
    j["mask"] = mask;
    write_file_atomic(model_path, j.dump(2) + "\n");
    log("step-2 model written to " + model_path);
    return 0;
}

int cmd_run(const CommonFlags& flags) {
    const auto c = flags.resolve();
    write_run_manifest(c, "run");
    const auto pc = prepare(c);
    const auto res = pipeline::run_lopo_cv(pc, c.pipeline, {pipeline::AblationMask::named("full")}, fold_writer(c.out));
    report::ReportInput in{run_description(c, "run"), {{"deepxsoz", res[0]}}, {}, {}};
    const auto pts = threshold_points(res[0], c);
    if (pts.size() >= 2) in.roc = eval::roc_assemble(pts);
    report::emit_report(in, c.out);
    log("report written to " + c.out.string());
    return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::vector<std::string>& masks) {
    auto c = flags.resolve();
    if (!masks.empty()) c.masks = masks;
    if (std::find(c.masks.begin(), c.masks.end(), "full") == c.masks.end()) c.masks.insert(c.masks.begin(), "full");
    validate(c);
    write_run_manifest(c, "ablate");
    const auto pc = prepare(c);
    const auto ms = masks_of(c.masks);
    const auto res = pipeline::run_lopo_cv(pc, c.pipeline, ms, fold_writer(c.out));
    report::ReportInput in{run_description(c, "ablate"), {}, {}, {}};
    for (std::size_t m = 0; m < ms.size(); ++m) {
        if (ms[m].name == "full") in.methods.push_back({"deepxsoz", res[m]});
        in.ablations.push_back({ms[m], res[m]});
    }
    report::emit_report(in, c.out);
    log("ablation report written to " + c.out.string());
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<double>& fractions, const std::vector<double>& thresholds) {
    auto c = flags.resolve();
    if (!fractions.empty()) c.fractions = fractions;
    if (!thresholds.empty()) c.thresholds = thresholds;
    validate(c);
    write_run_manifest(c, "sweep");
    const auto pc = prepare(c);
    std::vector<eval::RocPoint> pts;
    report::ReportInput in{run_description(c, "sweep"), {}, {}, {}};
    for (double f : c.fractions) {
        auto pcfg = c.pipeline;
        pcfg.training_fraction = f;
        log("training fraction " + report::num(f));
        const auto res = pipeline::run_lopo_cv(pc, pcfg, {pipeline::AblationMask::named("full")}, [&](const pipeline::FoldResult& fold) {
            auto copy = fold;
            copy.mask = "full-f" + report::num(f);
            pipeline::write_fold(c.out, copy);
        });
        pts.push_back(eval::roc_point(res[0], "training_fraction", f, f));
        if (f == 1.0) {
            in.methods.push_back({"deepxsoz", res[0]});
            for (auto& p : threshold_points(res[0], c)) pts.push_back(p);
        }
    }
    in.roc = eval::roc_assemble(pts);
    report::emit_report(in, c.out);
    log("ROC written to " + (c.out / "roc.csv").string());
    return 0;
}

int cmd_baselines(const CommonFlags& flags) {
    const auto c = flags.resolve();
    write_run_manifest(c, "baselines");
    const auto pc = prepare(c);
    const auto sink = fold_writer(c.out);
    const auto ours = pipeline::run_lopo_cv(pc, c.pipeline, {pipeline::AblationMask::named("full")}, sink);
    const auto cnn3 = pipeline::run_cnn3_baseline(pc, c.pipeline, sink);
    const auto lssvm = pipeline::run_lssvm_baseline(pc, c.pipeline, sink);
    report::ReportInput in{run_description(c, "baselines"), {{"deepxsoz", ours[0]}, {"cnn3", cnn3}, {"lssvm", lssvm}}, {}, {}};
    report::emit_report(in, c.out);
    log("baseline comparison written to " + c.out.string());
    return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& cohort, const std::string& results, const std::string& bind, std::string session,
              const std::string& origin) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--bind must be host:port");
    const std::string host = bind.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("--bind must be host:port");
    }
    review::ServiceOptions opt;
    opt.cohort_dir = cohort;
    opt.folds = pipeline::read_folds(results, "deepxsoz", "full");
    opt.results_ref = fs::weakly_canonical(results).string();
    opt.session_path = session.empty() ? fs::path(results) / "review_session.json" : fs::path(session);
    opt.cors_origin = origin;
    review::ReviewService service(std::move(opt));
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    log("serving " + std::string(review::kApiPrefix) + " on " + bind);
    if (!server.listen(host, port)) throw RuntimeFailure("cannot listen on " + bind);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeepXSOZ: sort rs-fMRI independent components into Noise / RSN / SOZ"};
    app.require_subcommand(1);

    std::string gen_out, gen_config;
    std::optional<std::uint64_t> gen_seed;
    std::optional<std::uint32_t> gen_patients, gen_ics, gen_bold;
    auto* gen = app.add_subcommand("gen", "generate a synthetic cohort directory");
    gen->add_option("--out", gen_out, "cohort directory")->required();
    gen->add_option("--config", gen_config, "JSON generator parameters");
    gen->add_option("--seed", gen_seed, "cohort seed");
    gen->add_option("--patients", gen_patients, "number of patients");
    gen->add_option("--ics", gen_ics, "ICs per patient");
    gen->add_option("--bold-len", gen_bold, "BOLD samples per IC");

    std::string feat_cohort, feat_out, feat_config;
    auto* features = app.add_subcommand("features", "write per-IC spatial and temporal feature CSVs");
    features->add_option("--cohort", feat_cohort, "cohort directory")->required();
    features->add_option("--out", feat_out, "output directory")->required();
    features->add_option("--config", feat_config, "JSON run configuration (feature parameters)");

    CommonFlags run_f, abl_f, sweep_f, base_f, s1_f, s2_f;
    auto* run = app.add_subcommand("run", "leave-one-patient-out run with full features, plus report");
    run_f.add_to(run);

    std::vector<std::string> abl_masks;
    auto* ablate = app.add_subcommand("ablate", "feature ablation study (ablation.csv)");
    abl_f.add_to(ablate);
    ablate->add_option("--mask", abl_masks, "mask name(s); 'full' is always included")
        ->check(CLI::IsMember(pipeline::AblationMask::names()));

    std::vector<double> sweep_fractions, sweep_thresholds;
    auto* sweep = app.add_subcommand("sweep", "training-size and posterior-threshold sweeps (roc.csv)");
    sweep_f.add_to(sweep);
    sweep->add_option("--fractions", sweep_fractions, "training-data fractions in (0,1]");
    sweep->add_option("--thresholds", sweep_thresholds, "posterior thresholds in (0,1)");

    auto* baselines = app.add_subcommand("baselines", "three-class CNN and LS-SVM baselines with t-tests");
    base_f.add_to(baselines);

    std::string s1_model;
    auto* train1 = app.add_subcommand("train-step1", "train the Step-1 network on the whole cohort");
    s1_f.add_to(train1, false);
    train1->add_option("--model", s1_model, "output model file")->required();

    std::string s2_model, s2_mask = "full";
    auto* train2 = app.add_subcommand("train-step2", "train the Step-2 SVM on the whole cohort");
    s2_f.add_to(train2, false);
    train2->add_option("--model", s2_model, "output model file (JSON)")->required();
    train2->add_option("--mask", s2_mask, "feature mask")->check(CLI::IsMember(pipeline::AblationMask::names()));

    std::string serve_cohort, serve_results, serve_bind = "127.0.0.1:8080", serve_session, serve_origin = "*";
    auto* serve = app.add_subcommand("serve", "review service over a finished run (/api/v1)");
    serve->add_option("--cohort", serve_cohort, "cohort directory")->required();
    serve->add_option("--results", serve_results, "output directory of `run`")->required();
    serve->add_option("--bind", serve_bind, "host:port");
    serve->add_option("--session", serve_session, "review session file (default <results>/review_session.json)");
    serve->add_option("--cors-origin", serve_origin, "Access-Control-Allow-Origin value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "config", e.what());
    }

    try {
        if (*gen) return cmd_gen(gen_config, gen_out, gen_seed, gen_patients, gen_ics, gen_bold);
        if (*features) return cmd_features(feat_cohort, feat_out, feat_config);
        if (*run) return cmd_run(run_f);
        if (*ablate) return cmd_ablate(abl_f, abl_masks);
        if (*sweep) return cmd_sweep(sweep_f, sweep_fractions, sweep_thresholds);
        if (*baselines) return cmd_baselines(base_f);
        if (*train1) return cmd_train_step1(s1_f, s1_model);
        if (*train2) return cmd_train_step2(s2_f, s2_model, s2_mask);
        if (*serve) return cmd_serve(serve_cohort, serve_results, serve_bind, serve_session, serve_origin);
    } catch (const ConfigError& e) {
        return fail(2, "config", e.what());
    } catch (const DataError& e) {
        return fail(3, "data", e.what());
    } catch (const std::exception& e) {
        return fail(4, "runtime", e.what());
    }
    return 0;
}
