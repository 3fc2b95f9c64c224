#pragma once
// Leave-one-patient-out orchestration of Step 1 (CNN noise filter), Step 2
// (SMOTE + calibrated linear SVM) and the fusion rule, plus the two
// comparison baselines and training-size sweeps.

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "features.hpp"
#include "generator.hpp"
#include "montage.hpp"
#include "neuralnet.hpp"
#include "shallow.hpp"

namespace deepxsoz::pipeline {

enum class Step1Label : std::uint8_t { Noise, NonNoise };

inline std::string_view to_string(Step1Label s) { return s == Step1Label::Noise ? "Noise" : "NonNoise"; }

struct FusionParams {
    double posterior_threshold = 0.9;
    void validate() const {
        if (!(posterior_threshold > 0.0 && posterior_threshold < 1.0))
            throw std::invalid_argument("posterior_threshold must lie in (0,1)");
    }
};

// Step 2 only knows RSN and SOZ, so every Noise label comes from Step 1: a
// Step-1 Noise call stands unless Step 2 says SOZ with p_soz >= threshold.
inline ICLabel fuse_labels(Step1Label step1, ICLabel step2, std::optional<double> p_soz, const FusionParams& params) {
    if (step2 == ICLabel::Noise) throw std::invalid_argument("fuse_labels: step 2 never emits Noise");
    if (step1 == Step1Label::NonNoise) return step2;
    if (step2 == ICLabel::RSN) return ICLabel::Noise;
    if (!p_soz) throw std::invalid_argument("fuse_labels: posterior required for a Step-1 Noise / Step-2 SOZ IC");
    return *p_soz >= params.posterior_threshold ? ICLabel::SOZ : ICLabel::Noise;
}

// --- ablation masks -----------------------------------------------------------

struct AblationMask {
    std::string name = "full";
    std::array<bool, kFeatureCount> enabled{true, true, true, true, true};

    static const std::vector<std::string>& names() {
        static const std::vector<std::string> n{"full",  "no-temporal", "no-activelet", "no-sine",
                                                "no-hf", "no-spatial",  "no-clusters",  "no-wm-overlap"};
        return n;
    }

    // Feature order: n_clusters, wm_overlap, activelet_gini, sine_gini, hf_dominant.
    static AblationMask named(std::string_view name) {
        AblationMask m;
        m.name = std::string(name);
        auto off = [&](std::initializer_list<std::size_t> idx) {
            for (auto i : idx) m.enabled[i] = false;
        };
        if (name == "full") return m;
        if (name == "no-temporal") off({2, 3, 4});
        else if (name == "no-activelet") off({2});
        else if (name == "no-sine") off({3});
        else if (name == "no-hf") off({4});
        else if (name == "no-spatial") off({0, 1});
        else if (name == "no-clusters") off({0});
        else if (name == "no-wm-overlap") off({1});
        else throw ConfigError("unknown ablation mask '" + std::string(name) + "'");
        return m;
    }

    // Features enabled in both masks.
    AblationMask intersect(const AblationMask& other) const {
        AblationMask m{name + "+" + other.name, {}};
        for (std::size_t i = 0; i < kFeatureCount; ++i) m.enabled[i] = enabled[i] && other.enabled[i];
        return m;
    }

    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < kFeatureCount; ++i)
            if (enabled[i]) idx.push_back(i);
        if (idx.empty()) throw ConfigError("ablation mask '" + name + "' disables every feature");
        return idx;
    }

    shallow::Row select(const FeatureVector& f) const {
        const auto v = f.values();
        shallow::Row r;
        for (auto i : indices()) r.push_back(v[i]);
        return r;
    }
};

// --- prepared cohort ----------------------------------------------------------

struct PreparedIC {
    std::string ic_id;
    ICLabel truth = ICLabel::Noise;
    FeatureVector features;
    std::vector<float> image;  // Step-1 network input
    std::string hash;          // content hash of the raw IC
};

struct PreparedPatient {
    std::string patient_id;
    PatientMeta meta;
    std::vector<PreparedIC> ics;
};

struct PreparedCohort {
    std::vector<PreparedPatient> patients;
    std::size_t image_height = 0, image_width = 0, image_channels = 0;

    std::size_t ic_count() const {
        std::size_t n = 0;
        for (const auto& p : patients) n += p.ics.size();
        return n;
    }
};

inline PreparedPatient prepare_patient(const Patient& p, const FeatureParams& fp, const nn::NetworkConfig& net) {
    PreparedPatient out{p.patient_id, p.meta, {}};
    out.ics.reserve(p.ics.size());
    for (const auto& ic : p.ics)
        out.ics.push_back({ic.ic_id, ic.truth, extract_features(ic, fp), ic_image(ic, net.height, net.width, net.channels),
                           content_hash(p.patient_id, ic)});
    return out;
}

inline PreparedCohort prepare_cohort(const Cohort& c, const FeatureParams& fp, const nn::NetworkConfig& net) {
    PreparedCohort out{{}, net.height, net.width, net.channels};
    for (const auto& p : c.patients) out.patients.push_back(prepare_patient(p, fp, net));
    return out;
}

// Generates patients one at a time so the raw slice stacks never coexist.
inline PreparedCohort prepare_generated(const GeneratorParams& gp, const FeatureParams& fp, const nn::NetworkConfig& net) {
    validate(gp);
    PreparedCohort out{{}, net.height, net.width, net.channels};
    for (std::size_t i = 0; i < gp.n_patients; ++i) out.patients.push_back(prepare_patient(generate_patient(gp, i), fp, net));
    return out;
}

// --- fold results -------------------------------------------------------------

struct ICRecord {
    std::string ic_id;
    ICLabel truth = ICLabel::Noise;
    std::optional<Step1Label> step1;
    std::optional<double> p_nonnoise;
    std::optional<ICLabel> step2;
    std::optional<double> p_soz;
    std::optional<double> decision;
    ICLabel fused = ICLabel::Noise;
};

// What went into a fold's training, by IC content hash.
struct TrainingManifest {
    std::vector<std::string> patients;
    std::vector<std::string> step1_hashes;
    std::vector<std::string> step2_hashes;
    std::vector<std::string> smote_hashes;
    std::size_t smote_synthetic = 0;
};

struct FoldResult {
    std::string patient_id;
    PatientMeta meta;
    std::string method = "deepxsoz";
    std::string mask = "full";
    double training_fraction = 1.0;
    bool ok = true;
    std::string failure;
    std::vector<ICRecord> records;
    TrainingManifest manifest;
};

inline std::string digest_of(std::vector<std::string> hashes) {
    std::sort(hashes.begin(), hashes.end());
    Sha256 h;
    for (const auto& s : hashes) h.update(s).update("\n");
    return h.hex();
}

inline nlohmann::json to_json(const ICRecord& r) {
    nlohmann::json j{{"ic_id", r.ic_id}, {"truth", to_string(r.truth)}, {"fused", to_string(r.fused)}};
    j["step1"] = r.step1 ? nlohmann::json(to_string(*r.step1)) : nlohmann::json(nullptr);
    j["p_nonnoise"] = r.p_nonnoise ? nlohmann::json(*r.p_nonnoise) : nlohmann::json(nullptr);
    j["step2"] = r.step2 ? nlohmann::json(to_string(*r.step2)) : nlohmann::json(nullptr);
    j["p_soz"] = r.p_soz ? nlohmann::json(*r.p_soz) : nlohmann::json(nullptr);
    j["decision"] = r.decision ? nlohmann::json(*r.decision) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const FoldResult& f) {
    nlohmann::json j{{"format", "deepxsoz-fold"},
                     {"version", 1},
                     {"patient_id", f.patient_id},
                     {"age_group", f.meta.age_group},
                     {"sex", f.meta.sex},
                     {"method", f.method},
                     {"mask", f.mask},
                     {"training_fraction", f.training_fraction},
                     {"ok", f.ok},
                     {"failure", f.failure}};
    j["records"] = nlohmann::json::array();
    for (const auto& r : f.records) j["records"].push_back(to_json(r));
    j["training"] = {{"patients", f.manifest.patients},
                     {"step1_ics", f.manifest.step1_hashes.size()},
                     {"step2_ics", f.manifest.step2_hashes.size()},
                     {"smote_inputs", f.manifest.smote_hashes.size()},
                     {"smote_synthetic", f.manifest.smote_synthetic},
                     {"step1_digest", digest_of(f.manifest.step1_hashes)},
                     {"step2_digest", digest_of(f.manifest.step2_hashes)},
                     {"smote_digest", digest_of(f.manifest.smote_hashes)}};
    return j;
}

inline ICLabel label_field(const nlohmann::json& j) {
    const auto l = parse_label(j.get<std::string>());
    if (!l) throw FormatError("fold file: bad label '" + j.get<std::string>() + "'");
    return *l;
}

inline FoldResult fold_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "deepxsoz-fold" || j.at("version") != 1) throw FormatError("fold file: unsupported format");
        FoldResult f;
        f.patient_id = j.at("patient_id").get<std::string>();
        f.meta = {j.value("age_group", ""), j.value("sex", "")};
        f.method = j.at("method").get<std::string>();
        f.mask = j.at("mask").get<std::string>();
        f.training_fraction = j.at("training_fraction").get<double>();
        f.ok = j.at("ok").get<bool>();
        f.failure = j.at("failure").get<std::string>();
        f.manifest.patients = j.at("training").at("patients").get<std::vector<std::string>>();
        for (const auto& jr : j.at("records")) {
            ICRecord r;
            r.ic_id = jr.at("ic_id").get<std::string>();
            r.truth = label_field(jr.at("truth"));
            r.fused = label_field(jr.at("fused"));
            if (!jr.at("step1").is_null()) r.step1 = jr.at("step1") == "Noise" ? Step1Label::Noise : Step1Label::NonNoise;
            if (!jr.at("p_nonnoise").is_null()) r.p_nonnoise = jr.at("p_nonnoise").get<double>();
            if (!jr.at("step2").is_null()) r.step2 = label_field(jr.at("step2"));
            if (!jr.at("p_soz").is_null()) r.p_soz = jr.at("p_soz").get<double>();
            if (!jr.at("decision").is_null()) r.decision = jr.at("decision").get<double>();
            f.records.push_back(std::move(r));
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("fold file: ") + e.what());
    }
}

inline std::filesystem::path fold_path(const std::filesystem::path& dir, const FoldResult& f) {
    return dir / "folds" / f.method / f.mask / (f.patient_id + ".json");
}

inline void write_fold(const std::filesystem::path& dir, const FoldResult& f) {
    const auto path = fold_path(dir, f);
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, to_json(f).dump(1) + "\n");
}

// All fold files under <dir>/folds/<method>/<mask>/, sorted by patient id.
inline std::vector<FoldResult> read_folds(const std::filesystem::path& dir, const std::string& method, const std::string& mask) {
    const auto sub = dir / "folds" / method / mask;
    if (!std::filesystem::is_directory(sub)) throw DataError("no fold results under " + sub.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(sub))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<FoldResult> out;
    for (const auto& p : files) {
        try {
            out.push_back(fold_from_json(nlohmann::json::parse(read_file(p))));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(p.string() + ": " + e.what());
        }
    }
    return out;
}

// --- configuration ------------------------------------------------------------

struct PipelineConfig {
    FeatureParams features;
    nn::NetworkConfig network = nn::NetworkConfig::desk_profile();
    shallow::SvmParams svm;
    std::size_t smote_k = 5;
    FusionParams fusion;
    double ls_svm_gamma = 1.0;
    std::uint64_t seed = 42;
    std::size_t threads = 1;
    // 0 retrains Step 1 for every held-out patient. G > 0 splits patients into
    // G groups and trains one Step-1 model per group on the other groups.
    std::size_t step1_groups = 0;
    double training_fraction = 1.0;

    void validate() const {
        fusion.validate();
        if (smote_k == 0) throw ConfigError("smote_k must be positive");
        if (!(training_fraction > 0.0 && training_fraction <= 1.0)) throw ConfigError("training_fraction must lie in (0,1]");
        if (!(ls_svm_gamma > 0.0)) throw ConfigError("ls_svm_gamma must be positive");
        if (threads == 0) throw ConfigError("threads must be >= 1");
        if (!(svm.C > 0.0)) throw ConfigError("svm C must be positive");
    }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return detail::splitmix64(detail::splitmix64(seed ^ (a * 0x9E3779B97F4A7C15ULL)) + b);
}

// Training patients for a held-out patient: everyone else, optionally
// subsampled at patient level (seeded per fold).
inline std::vector<std::size_t> training_patients(std::size_t n_patients, const std::vector<std::size_t>& excluded,
                                                  double fraction, std::uint64_t seed) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_patients; ++i)
        if (std::find(excluded.begin(), excluded.end(), i) == excluded.end()) out.push_back(i);
    if (fraction < 1.0 && !out.empty()) {
        const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(out.size()))));
        std::mt19937_64 rng(seed);
        std::shuffle(out.begin(), out.end(), rng);
        out.resize(std::min(keep, out.size()));
        std::sort(out.begin(), out.end());
    }
    return out;
}

// --- bounded-parallel fold executor -------------------------------------------

// Runs job(i) for i in [0, n) on up to `threads` workers. Jobs must not throw.
inline void run_jobs(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) job(i);
        });
}

// Called once per finished fold (serialized); used to stream results to disk.
using FoldSink = std::function<void(const FoldResult&)>;

// --- Step 1 -------------------------------------------------------------------

struct Step1Output {
    std::vector<double> p_nonnoise;  // per held-out IC
    std::vector<std::string> hashes;
    std::vector<std::string> patients;
};

inline nn::ModelWeights<float> train_step1(const PreparedCohort& cohort, const std::vector<std::size_t>& train, const nn::NetworkConfig& cfg,
                                           std::vector<std::string>* hashes = nullptr) {
    std::vector<std::span<const float>> images;
    std::vector<std::size_t> labels;
    for (auto pi : train)
        for (const auto& ic : cohort.patients[pi].ics) {
            images.emplace_back(ic.image);
            labels.push_back(ic.truth == ICLabel::Noise ? 0 : 1);
            if (hashes) hashes->push_back(ic.hash);
        }
    std::size_t n_pos = 0;
    for (auto l : labels) n_pos += l;
    if (n_pos < 2 || labels.size() - n_pos < 2) throw DataError("step 1: training fold needs >= 2 noise and >= 2 non-noise ICs");
    return nn::train<float>(cfg, images, labels);
}

inline double predict_step1(const nn::Network<float>& net, const PreparedIC& ic) { return net.forward(ic.image)[0]; }

// --- Step 2 -------------------------------------------------------------------

struct Step2Model {
    shallow::SvmModel svm;
    std::vector<std::string> hashes;
    std::vector<std::string> smote_hashes;
    std::size_t smote_synthetic = 0;
};

// SMOTE on standardized rows: oversample the +1 class up to the -1 count.
inline shallow::Augmenter smote_augmenter(std::size_t k, std::size_t* synthetic = nullptr) {
    return [k, synthetic](shallow::Rows& X, std::vector<int>& y, std::uint64_t seed) {
        shallow::Rows minority;
        std::size_t majority = 0;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (y[i] > 0) minority.push_back(X[i]);
            else ++majority;
        }
        std::size_t added = 0;
        if (minority.size() >= 2 && minority.size() < majority) {
            for (auto& s : shallow::smote_oversample(minority, majority, k, seed).samples) {
                X.push_back(std::move(s.x));
                y.push_back(1);
                ++added;
            }
        }
        // The final full-data fit runs last, so this ends up describing it.
        if (synthetic) *synthetic = added;
    };
}

inline Step2Model train_step2(const PreparedCohort& cohort, const std::vector<std::size_t>& train, const AblationMask& mask,
                              const PipelineConfig& cfg, std::uint64_t seed) {
    Step2Model out;
    shallow::Rows X;
    std::vector<int> y;
    for (auto pi : train)
        for (const auto& ic : cohort.patients[pi].ics) {
            if (ic.truth == ICLabel::Noise) continue;  // Step 2 never trains on noise ICs
            X.push_back(mask.select(ic.features));
            y.push_back(ic.truth == ICLabel::SOZ ? 1 : -1);
            out.hashes.push_back(ic.hash);
            if (ic.truth == ICLabel::SOZ) out.smote_hashes.push_back(ic.hash);
        }
    if (X.empty()) throw DataError("step 2: training fold has no RSN or SOZ ICs");
    out.svm = shallow::train_svm(X, y, cfg.svm, seed, smote_augmenter(cfg.smote_k, &out.smote_synthetic));
    return out;
}

// --- LOPO cross-validation ----------------------------------------------------

inline ICRecord make_record(const PreparedIC& ic, double p_nonnoise, const shallow::SvmModel& svm, const AblationMask& mask,
                            const FusionParams& fusion) {
    ICRecord r;
    r.ic_id = ic.ic_id;
    r.truth = ic.truth;
    r.p_nonnoise = p_nonnoise;
    r.step1 = p_nonnoise >= 0.5 ? Step1Label::NonNoise : Step1Label::Noise;
    const auto post = shallow::predict_posterior(svm, mask.select(ic.features));
    r.step2 = post.soz ? ICLabel::SOZ : ICLabel::RSN;
    r.p_soz = post.p_soz;
    r.decision = post.decision;
    r.fused = fuse_labels(*r.step1, *r.step2, r.p_soz, fusion);
    return r;
}

inline FoldResult failed_fold(const PreparedPatient& p, std::string method, std::string mask, double fraction, std::string why) {
    FoldResult f;
    f.patient_id = p.patient_id;
    f.meta = p.meta;
    f.method = std::move(method);
    f.mask = std::move(mask);
    f.training_fraction = fraction;
    f.ok = false;
    f.failure = std::move(why);
    return f;
}

// Runs every mask over the same folds; Step 1 is trained once per fold (or
// per group) and shared across masks since it does not see the features.
// Returns results[mask][patient].
inline std::vector<std::vector<FoldResult>> run_lopo_cv(const PreparedCohort& cohort, const PipelineConfig& cfg,
                                                        const std::vector<AblationMask>& masks, const FoldSink& sink = {}) {
    cfg.validate();
    if (cohort.patients.size() < 2) throw DataError("LOPO CV needs at least 2 patients");
    if (masks.empty()) throw ConfigError("no ablation masks given");
    for (const auto& m : masks) m.indices();
    const std::size_t P = cohort.patients.size();

    // Step-1 grouping: every patient is its own group unless grouped mode is on.
    const std::size_t G = cfg.step1_groups == 0 ? P : std::min(cfg.step1_groups, P);
    std::vector<std::size_t> group_of(P);
    for (std::size_t i = 0; i < P; ++i) group_of[i] = i % G;

    struct GroupStep1 {
        std::once_flag once;
        std::optional<nn::ModelWeights<float>> model;
        std::vector<std::string> hashes, patients;
        std::string error;
    };
    std::vector<GroupStep1> groups(G);
    auto step1_for = [&](std::size_t g) -> GroupStep1& {
        auto& gs = groups[g];
        std::call_once(gs.once, [&] {
            std::vector<std::size_t> excluded;
            for (std::size_t i = 0; i < P; ++i)
                if (group_of[i] == g) excluded.push_back(i);
            const auto train = training_patients(P, excluded, cfg.training_fraction, derive_seed(cfg.seed, g, 3));
            for (auto t : train) gs.patients.push_back(cohort.patients[t].patient_id);
            auto net = cfg.network;
            net.seed = derive_seed(cfg.seed, g, 2);
            try {
                gs.model = train_step1(cohort, train, net, &gs.hashes);
            } catch (const std::exception& e) {
                gs.error = std::string("step 1: ") + e.what();
            }
        });
        return gs;
    };

    std::vector<std::vector<FoldResult>> results(masks.size(), std::vector<FoldResult>(P));
    std::mutex sink_mutex;
    run_jobs(P, cfg.threads, [&](std::size_t h) {
        const auto& patient = cohort.patients[h];
        auto& gs = step1_for(group_of[h]);
        std::vector<double> p_nonnoise;
        if (gs.model)
            for (const auto& ic : patient.ics) p_nonnoise.push_back(predict_step1(gs.model->network, ic));
        const auto train = training_patients(P, {h}, cfg.training_fraction, derive_seed(cfg.seed, h, 3));
        for (std::size_t m = 0; m < masks.size(); ++m) {
            FoldResult fold;
            if (!gs.model) {
                fold = failed_fold(patient, "deepxsoz", masks[m].name, cfg.training_fraction, gs.error);
            } else {
                try {
                    const auto step2 = train_step2(cohort, train, masks[m], cfg, derive_seed(cfg.seed, h, 4));
                    fold.patient_id = patient.patient_id;
                    fold.meta = patient.meta;
                    fold.mask = masks[m].name;
                    fold.training_fraction = cfg.training_fraction;
                    for (std::size_t i = 0; i < patient.ics.size(); ++i)
                        fold.records.push_back(make_record(patient.ics[i], p_nonnoise[i], step2.svm, masks[m], cfg.fusion));
                    for (auto t : train) fold.manifest.patients.push_back(cohort.patients[t].patient_id);
                    fold.manifest.step1_hashes = gs.hashes;
                    fold.manifest.step2_hashes = step2.hashes;
                    fold.manifest.smote_hashes = step2.smote_hashes;
                    fold.manifest.smote_synthetic = step2.smote_synthetic;
                } catch (const std::exception& e) {
                    fold = failed_fold(patient, "deepxsoz", masks[m].name, cfg.training_fraction, std::string("step 2: ") + e.what());
                }
            }
            if (sink) {
                std::lock_guard lock(sink_mutex);
                sink(fold);
            }
            results[m][h] = std::move(fold);
        }
    });
    return results;
}

// Re-applies fusion to existing DeepXSOZ records with different parameters.
inline std::vector<FoldResult> refuse(std::vector<FoldResult> folds, const FusionParams& params) {
    params.validate();
    for (auto& f : folds)
        for (auto& r : f.records) {
            if (!r.step1 || !r.step2) throw std::invalid_argument("refuse: record " + r.ic_id + " has no step outputs");
            r.fused = fuse_labels(*r.step1, *r.step2, r.p_soz, params);
        }
    return folds;
}

// --- baselines ----------------------------------------------------------------

inline std::size_t class_index(ICLabel l) { return static_cast<std::size_t>(l); }

// Three-class CNN with inverse-frequency class weights.
inline std::vector<FoldResult> run_cnn3_baseline(const PreparedCohort& cohort, const PipelineConfig& cfg, const FoldSink& sink = {}) {
    cfg.validate();
    const std::size_t P = cohort.patients.size();
    std::vector<FoldResult> results(P);
    std::mutex sink_mutex;
    run_jobs(P, cfg.threads, [&](std::size_t h) {
        const auto& patient = cohort.patients[h];
        FoldResult fold;
        try {
            const auto train = training_patients(P, {h}, cfg.training_fraction, derive_seed(cfg.seed, h, 3));
            std::vector<std::span<const float>> images;
            std::vector<std::size_t> labels;
            std::array<double, 3> counts{};
            for (auto pi : train)
                for (const auto& ic : cohort.patients[pi].ics) {
                    images.emplace_back(ic.image);
                    labels.push_back(class_index(ic.truth));
                    counts[class_index(ic.truth)] += 1.0;
                    fold.manifest.step1_hashes.push_back(ic.hash);
                }
            auto net = cfg.network;
            net.output_classes = 3;
            net.class_weights.clear();
            for (double c : counts) net.class_weights.push_back(c > 0 ? static_cast<double>(labels.size()) / (3.0 * c) : 0.0);
            net.seed = derive_seed(cfg.seed, h, 5);
            const auto model = nn::train<float>(net, images, labels);
            fold.patient_id = patient.patient_id;
            fold.meta = patient.meta;
            fold.method = "cnn3";
            fold.training_fraction = cfg.training_fraction;
            for (auto t : train) fold.manifest.patients.push_back(cohort.patients[t].patient_id);
            for (const auto& ic : patient.ics) {
                const auto probs = model.network.forward(ic.image);
                ICRecord r;
                r.ic_id = ic.ic_id;
                r.truth = ic.truth;
                r.p_soz = probs[2];
                r.fused = static_cast<ICLabel>(std::max_element(probs.begin(), probs.end()) - probs.begin());
                fold.records.push_back(std::move(r));
            }
        } catch (const std::exception& e) {
            fold = failed_fold(patient, "cnn3", "full", cfg.training_fraction, e.what());
        }
        if (sink) {
            std::lock_guard lock(sink_mutex);
            sink(fold);
        }
        results[h] = std::move(fold);
    });
    return results;
}

// One-vs-one LS-SVM on all five features, every class SMOTE-balanced to the
// majority count.
inline std::vector<FoldResult> run_lssvm_baseline(const PreparedCohort& cohort, const PipelineConfig& cfg, const FoldSink& sink = {}) {
    cfg.validate();
    const std::size_t P = cohort.patients.size();
    const AblationMask full;
    std::vector<FoldResult> results(P);
    std::mutex sink_mutex;
    run_jobs(P, cfg.threads, [&](std::size_t h) {
        const auto& patient = cohort.patients[h];
        FoldResult fold;
        try {
            const auto train = training_patients(P, {h}, cfg.training_fraction, derive_seed(cfg.seed, h, 3));
            shallow::Rows X;
            std::vector<std::size_t> labels;
            for (auto pi : train)
                for (const auto& ic : cohort.patients[pi].ics) {
                    X.push_back(full.select(ic.features));
                    labels.push_back(class_index(ic.truth));
                    fold.manifest.step2_hashes.push_back(ic.hash);
                    if (ic.truth != ICLabel::Noise) fold.manifest.smote_hashes.push_back(ic.hash);
                }
            const auto scaler = shallow::Standardizer::fit(X);
            shallow::Rows Z = scaler.apply(X);
            std::array<shallow::Rows, 3> by_class;
            for (std::size_t i = 0; i < Z.size(); ++i) by_class[labels[i]].push_back(Z[i]);
            std::size_t majority = 0;
            for (const auto& c : by_class) majority = std::max(majority, c.size());
            for (std::size_t c = 0; c < 3; ++c) {
                if (by_class[c].size() >= majority) continue;
                if (by_class[c].size() < 2) throw DataError("ls-svm: class " + std::string(to_string(static_cast<ICLabel>(c))) + " has < 2 training ICs");
                for (auto& s : shallow::smote_oversample(by_class[c], majority, cfg.smote_k, derive_seed(cfg.seed, h, 10 + c)).samples) {
                    Z.push_back(std::move(s.x));
                    labels.push_back(c);
                    ++fold.manifest.smote_synthetic;
                }
            }
            const auto model = shallow::train_ls_svm(Z, labels, 3, cfg.ls_svm_gamma);
            fold.patient_id = patient.patient_id;
            fold.meta = patient.meta;
            fold.method = "lssvm";
            fold.training_fraction = cfg.training_fraction;
            for (auto t : train) fold.manifest.patients.push_back(cohort.patients[t].patient_id);
            for (const auto& ic : patient.ics) {
                ICRecord r;
                r.ic_id = ic.ic_id;
                r.truth = ic.truth;
                r.fused = static_cast<ICLabel>(model.predict(scaler.apply(full.select(ic.features))));
                fold.records.push_back(std::move(r));
            }
        } catch (const std::exception& e) {
            fold = failed_fold(patient, "lssvm", "full", cfg.training_fraction, e.what());
        }
        if (sink) {
            std::lock_guard lock(sink_mutex);
            sink(fold);
        }
        results[h] = std::move(fold);
    });
    return results;
}

// --- leakage audit ------------------------------------------------------------

struct LeakageAudit {
    std::size_t folds_checked = 0;
    std::size_t violations = 0;
    std::vector<std::string> details;
    bool passed() const { return violations == 0 && folds_checked > 0; }
};

// `held_out` maps a patient id to the content hashes of that patient's ICs,
// computed independently of the pipeline.
inline LeakageAudit audit_leakage(const std::vector<FoldResult>& folds, const std::map<std::string, std::set<std::string>>& held_out) {
    LeakageAudit audit;
    for (const auto& f : folds) {
        if (!f.ok) continue;
        const auto it = held_out.find(f.patient_id);
        if (it == held_out.end()) {
            ++audit.violations;
            audit.details.push_back(f.patient_id + ": no reference hashes");
            continue;
        }
        ++audit.folds_checked;
        if (std::find(f.manifest.patients.begin(), f.manifest.patients.end(), f.patient_id) != f.manifest.patients.end()) {
            ++audit.violations;
            audit.details.push_back(f.patient_id + ": held-out patient listed among training patients");
        }
        for (const auto* list : {&f.manifest.step1_hashes, &f.manifest.step2_hashes, &f.manifest.smote_hashes})
            for (const auto& h : *list)
                if (it->second.count(h)) {
                    ++audit.violations;
                    audit.details.push_back(f.patient_id + ": held-out IC " + h.substr(0, 12) + " in training inputs");
                }
    }
    return audit;
}

}  // namespace deepxsoz::pipeline
