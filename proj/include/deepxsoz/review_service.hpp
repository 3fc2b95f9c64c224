#pragma once
// HTTP JSON API (/api/v1) over a finished run for the expert sorting step:
// browse machine-marked SOZ candidates, label them, and read the patient
// decision with effort figures. Reviewer labels live in a separate session
// document that is fsynced before every acknowledgement.

#include <chrono>
#include <ctime>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Eigen must be seen before httplib, whose system headers define macros that
// collide with Eigen's product kernels.
#include "cohort_io.hpp"
#include "features.hpp"
#include "pipeline.hpp"
#include "png.hpp"

#include <httplib.h>

namespace deepxsoz::review {

inline constexpr std::string_view kApiPrefix = "/api/v1";
inline constexpr int kSessionFormatVersion = 1;

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

inline ApiResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }

inline ApiResponse error_response(int status, const std::string& message) {
    return json_response(status, {{"error", {{"status", status}, {"message", message}}}});
}

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Where each IC's raw data lives, read from the cohort manifest; ICs are
// decoded on demand so the service never holds the whole cohort.
class CohortIndex {
public:
    explicit CohortIndex(std::filesystem::path dir) : dir_(std::move(dir)) {
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(read_file(dir_ / "manifest.json"));
            for (const auto& jp : m.at("patients"))
                for (const auto& ji : jp.at("ics"))
                    files_[ji.at("id").get<std::string>()] = {jp.at("id").get<std::string>(), ji.at("file").get<std::string>(),
                                                              ji.at("sha256").get<std::string>()};
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("cohort manifest: " + std::string(e.what()));
        }
    }

    bool contains(const std::string& ic_id) const { return files_.count(ic_id) != 0; }

    IndependentComponent load(const std::string& ic_id) const {
        const auto& e = files_.at(ic_id);
        const auto path = dir_ / "patients" / e.patient / e.file;
        const std::string bytes = read_file(path);
        if (sha256_hex(bytes) != e.sha256) throw FormatError("checksum mismatch for " + path.string());
        return decode_icsl(bytes, ic_id, path.string());
    }

private:
    struct Entry {
        std::string patient, file, sha256;
    };
    std::filesystem::path dir_;
    std::map<std::string, Entry> files_;
};

struct LabelEntry {
    ICLabel label = ICLabel::Noise;
    std::string updated_at;
};

struct ReviewSession {
    std::string session_id;
    std::string results_ref;
    bool show_all = false;
    std::uint64_t version = 0;
    std::string created_at, updated_at;
    std::map<std::string, LabelEntry> labels;
};

inline nlohmann::json to_json(const ReviewSession& s) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, e] : s.labels) labels[id] = {{"label", to_string(e.label)}, {"updated_at", e.updated_at}};
    return {{"format", "deepxsoz-review-session"}, {"version", kSessionFormatVersion}, {"session_id", s.session_id},
            {"results_ref", s.results_ref},        {"show_all", s.show_all},             {"state_version", s.version},
            {"created_at", s.created_at},          {"updated_at", s.updated_at},         {"labels", labels}};
}

inline ReviewSession session_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "deepxsoz-review-session" || j.at("version") != kSessionFormatVersion)
            throw FormatError("review session: unsupported format");
        ReviewSession s;
        s.session_id = j.at("session_id").get<std::string>();
        s.results_ref = j.at("results_ref").get<std::string>();
        s.show_all = j.at("show_all").get<bool>();
        s.version = j.at("state_version").get<std::uint64_t>();
        s.created_at = j.at("created_at").get<std::string>();
        s.updated_at = j.at("updated_at").get<std::string>();
        for (const auto& [id, e] : j.at("labels").items()) {
            const auto l = parse_label(e.at("label").get<std::string>());
            if (!l) throw FormatError("review session: bad label for " + id);
            s.labels[id] = {*l, e.at("updated_at").get<std::string>()};
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("review session: ") + e.what());
    }
}

struct ServiceOptions {
    std::filesystem::path cohort_dir;
    std::vector<pipeline::FoldResult> folds;  // DeepXSOZ results, one per patient
    std::string results_ref;                  // identifies the run the session belongs to
    std::filesystem::path session_path;
    FeatureParams features;
    std::string cors_origin = "*";
};

class ReviewService {
public:
    explicit ReviewService(ServiceOptions opt) : opt_(std::move(opt)), cohort_(opt_.cohort_dir) {
        for (std::size_t p = 0; p < opt_.folds.size(); ++p) {
            const auto& f = opt_.folds[p];
            if (!patient_index_.emplace(f.patient_id, p).second) throw DataError("duplicate fold for patient " + f.patient_id);
            for (std::size_t i = 0; i < f.records.size(); ++i) {
                if (!cohort_.contains(f.records[i].ic_id)) throw DataError("IC " + f.records[i].ic_id + " is not in the cohort");
                ic_index_[f.records[i].ic_id] = {p, i};
            }
        }
        if (std::filesystem::exists(opt_.session_path)) {
            session_ = session_from_json(nlohmann::json::parse(read_file(opt_.session_path)));
            if (session_.results_ref != opt_.results_ref)
                throw DataError("session " + opt_.session_path.string() + " belongs to a different run (" + session_.results_ref + ")");
        } else {
            session_.results_ref = opt_.results_ref;
            session_.session_id = sha256_hex(opt_.results_ref).substr(0, 16);
            session_.created_at = session_.updated_at = utc_now();
            persist();
        }
    }

    const ReviewSession& session() const { return session_; }

    // --- handlers ---------------------------------------------------------

    ApiResponse list_patients() const {
        std::shared_lock lock(mutex_);
        auto arr = nlohmann::json::array();
        for (const auto& f : opt_.folds) {
            const auto cands = candidate_indices(f, false);
            std::size_t labelled = 0;
            for (auto i : cands) labelled += session_.labels.count(f.records[i].ic_id);
            arr.push_back({{"patient_id", f.patient_id},
                           {"ic_count", f.records.size()},
                           {"mm_soz_count", cands.size()},
                           {"fold_ok", f.ok},
                           {"review_progress", {{"labelled", labelled}, {"candidates", cands.size()}}}});
        }
        return json_response(200, {{"version", session_.version}, {"patients", arr}});
    }

    ApiResponse candidates(const std::string& patient_id) const {
        std::shared_lock lock(mutex_);
        const auto it = patient_index_.find(patient_id);
        if (it == patient_index_.end()) return error_response(404, "unknown patient " + patient_id);
        const auto& f = opt_.folds[it->second];
        auto arr = nlohmann::json::array();
        for (auto i : candidate_indices(f, session_.show_all)) {
            const auto& r = f.records[i];
            const auto ic = cohort_.load(r.ic_id);
            const auto fv = features_of(ic);
            nlohmann::json feats = nlohmann::json::object();
            const auto vals = fv.values();
            for (std::size_t k = 0; k < kFeatureCount; ++k) feats[std::string(kFeatureNames[k])] = vals[k];
            feats["hf_dominant"] = fv.hf_dominant > 0.5;
            auto slices = nlohmann::json::array();
            for (std::size_t k = 0; k < ic.dims.n_slices; ++k)
                slices.push_back(std::string(kApiPrefix) + "/ics/" + r.ic_id + "/slice/" + std::to_string(k) + ".png");
            const auto lab = session_.labels.find(r.ic_id);
            arr.push_back({{"ic_id", r.ic_id},
                           {"p_soz", r.p_soz ? nlohmann::json(*r.p_soz) : nlohmann::json(nullptr)},
                           {"decision_value", r.decision ? nlohmann::json(*r.decision) : nlohmann::json(nullptr)},
                           {"machine_label", to_string(r.fused)},
                           {"features", feats},
                           {"slices", slices},
                           {"bold", ic.bold},
                           {"tr_seconds", ic.tr_seconds},
                           {"label", lab == session_.labels.end() ? nlohmann::json(nullptr) : nlohmann::json(to_string(lab->second.label))}});
        }
        return json_response(200, {{"patient_id", patient_id},
                                   {"mode", session_.show_all ? "all" : "candidates"},
                                   {"version", session_.version},
                                   {"candidates", arr}});
    }

    ApiResponse slice_png(const std::string& ic_id, const std::string& k_text) const {
        if (!ic_index_.count(ic_id)) return error_response(404, "unknown IC " + ic_id);
        std::size_t k = 0;
        try {
            std::size_t pos = 0;
            k = std::stoul(k_text, &pos);
            if (pos != k_text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            return error_response(404, "bad slice index " + k_text);
        }
        const auto ic = cohort_.load(ic_id);
        if (k >= ic.dims.n_slices) return error_response(404, "slice " + k_text + " out of range");
        return {200, render_slice_png(ic, k), "image/png"};
    }

    ApiResponse post_label(const std::string& ic_id, const std::string& body) {
        const auto loc = ic_index_.find(ic_id);
        if (loc == ic_index_.end()) return error_response(404, "unknown IC " + ic_id);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error&) {
            return error_response(422, "body is not valid JSON");
        }
        if (!j.is_object() || !j.contains("label")) return error_response(422, "body must be {\"label\": ...}");
        std::optional<ICLabel> label;
        if (!j["label"].is_null()) {
            if (!j["label"].is_string()) return error_response(422, "label must be a string or null");
            label = parse_label(j["label"].get<std::string>());
            if (!label) return error_response(422, "invalid label '" + j["label"].get<std::string>() + "' (expected Noise, RSN or SOZ)");
        }
        std::unique_lock lock(mutex_);
        const auto& f = opt_.folds[loc->second.first];
        const auto& r = f.records[loc->second.second];
        if (!session_.show_all && r.fused != ICLabel::SOZ)
            return error_response(409, "IC " + ic_id + " is not a machine-marked candidate (enable show_all to label it)");
        const std::uint64_t previous = session_.version;
        ReviewSession next = session_;
        next.updated_at = utc_now();
        if (label) next.labels[ic_id] = {*label, next.updated_at};
        else next.labels.erase(ic_id);
        ++next.version;
        commit(std::move(next));
        nlohmann::json out{{"ic_id", ic_id}, {"label", label ? nlohmann::json(to_string(*label)) : nlohmann::json(nullptr)},
                           {"version", session_.version}, {"previous_version", previous}};
        if (j.contains("expected_version") && j["expected_version"].is_number_unsigned())
            out["conflict"] = j["expected_version"].get<std::uint64_t>() != previous;
        return json_response(200, out);
    }

    ApiResponse get_session() const {
        std::shared_lock lock(mutex_);
        return json_response(200, to_json(session_));
    }

    ApiResponse put_session(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error&) {
            return error_response(422, "body is not valid JSON");
        }
        if (!j.is_object() || !j.contains("show_all") || !j["show_all"].is_boolean())
            return error_response(422, "body must be {\"show_all\": true|false}");
        std::unique_lock lock(mutex_);
        ReviewSession next = session_;
        next.show_all = j["show_all"].get<bool>();
        next.updated_at = utc_now();
        ++next.version;
        commit(std::move(next));
        return json_response(200, to_json(session_));
    }

    // Confirmed SOZ set = reviewer SOZ labels. Agreement is the fraction of
    // labelled ICs whose SOZ/non-SOZ call matches the ground truth.
    ApiResponse decision(const std::string& patient_id) const {
        std::shared_lock lock(mutex_);
        const auto it = patient_index_.find(patient_id);
        if (it == patient_index_.end()) return error_response(404, "unknown patient " + patient_id);
        const auto& f = opt_.folds[it->second];
        const auto cands = candidate_indices(f, false);
        auto confirmed = nlohmann::json::array();
        std::size_t labelled = 0, agree = 0, true_soz = 0, confirmed_true = 0;
        for (const auto& r : f.records) {
            true_soz += r.truth == ICLabel::SOZ ? 1 : 0;
            const auto lab = session_.labels.find(r.ic_id);
            if (lab == session_.labels.end()) continue;
            ++labelled;
            const bool said_soz = lab->second.label == ICLabel::SOZ;
            agree += said_soz == (r.truth == ICLabel::SOZ) ? 1 : 0;
            if (said_soz) {
                confirmed.push_back(r.ic_id);
                confirmed_true += r.truth == ICLabel::SOZ ? 1 : 0;
            }
        }
        const double total = static_cast<double>(f.records.size());
        const auto mm = cands.size();
        return json_response(
            200, {{"patient_id", patient_id},
                  {"version", session_.version},
                  {"confirmed_soz", confirmed},
                  {"truth_available", true},
                  {"agreement", labelled ? nlohmann::json(static_cast<double>(agree) / static_cast<double>(labelled)) : nlohmann::json(nullptr)},
                  {"true_soz_count", true_soz},
                  {"true_soz_confirmed", confirmed_true},
                  {"effort",
                   {{"total_ics", f.records.size()},
                    {"mm_soz", mm},
                    {"labelled", labelled},
                    {"reviewed_fraction", mm / total},
                    {"reduction", total / static_cast<double>(std::max<std::size_t>(mm, 1))}}}});
    }

    // --- HTTP wiring --------------------------------------------------------

    void mount(httplib::Server& server) {
        const std::string api(kApiPrefix);
        auto send = [this](httplib::Response& res, const ApiResponse& r) {
            res.status = r.status;
            res.set_content(r.body, r.content_type);
            cors(res);
        };
        auto guarded = [send](auto fn) {
            return [send, fn](const httplib::Request& req, httplib::Response& res) {
                try {
                    send(res, fn(req));
                } catch (const std::exception& e) {
                    send(res, error_response(500, e.what()));
                }
            };
        };
        server.Get(api + "/patients", guarded([this](const httplib::Request&) { return list_patients(); }));
        server.Get(api + R"(/patients/([^/]+)/candidates)", guarded([this](const httplib::Request& q) { return candidates(q.matches[1]); }));
        server.Get(api + R"(/patients/([^/]+)/decision)", guarded([this](const httplib::Request& q) { return decision(q.matches[1]); }));
        server.Get(api + R"(/ics/([^/]+)/slice/([^/]+)\.png)",
                   guarded([this](const httplib::Request& q) { return slice_png(q.matches[1], q.matches[2]); }));
        server.Post(api + R"(/ics/([^/]+)/label)", guarded([this](const httplib::Request& q) { return post_label(q.matches[1], q.body); }));
        server.Get(api + "/session", guarded([this](const httplib::Request&) { return get_session(); }));
        server.Put(api + "/session", guarded([this](const httplib::Request& q) { return put_session(q.body); }));
        server.Options(R"(.*)", [this](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            cors(res);
        });
        server.set_error_handler([this](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                res.set_content(error_response(res.status, "not found").body, "application/json");
                cors(res);
            }
        });
    }

private:
    void cors(httplib::Response& res) const {
        res.set_header("Access-Control-Allow-Origin", opt_.cors_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }

    // Machine-marked SOZ ICs (or every IC), by p_soz descending then id.
    static std::vector<std::size_t> candidate_indices(const pipeline::FoldResult& f, bool all) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < f.records.size(); ++i)
            if (all || f.records[i].fused == ICLabel::SOZ) idx.push_back(i);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double pa = f.records[a].p_soz.value_or(-1.0), pb = f.records[b].p_soz.value_or(-1.0);
            if (pa != pb) return pa > pb;
            return f.records[a].ic_id < f.records[b].ic_id;
        });
        return idx;
    }

    FeatureVector features_of(const IndependentComponent& ic) const {
        {
            std::lock_guard lock(cache_mutex_);
            if (auto it = feature_cache_.find(ic.ic_id); it != feature_cache_.end()) return it->second;
        }
        const auto fv = extract_features(ic, opt_.features);
        std::lock_guard lock(cache_mutex_);
        feature_cache_[ic.ic_id] = fv;
        return fv;
    }

    // Persist first; only a durable state becomes visible.
    void commit(ReviewSession next) {
        write_file_atomic(opt_.session_path, to_json(next).dump(1) + "\n", true);
        session_ = std::move(next);
    }

    void persist() { write_file_atomic(opt_.session_path, to_json(session_).dump(1) + "\n", true); }

    ServiceOptions opt_;
    CohortIndex cohort_;
    std::map<std::string, std::size_t> patient_index_;
    std::map<std::string, std::pair<std::size_t, std::size_t>> ic_index_;
    ReviewSession session_;
    mutable std::shared_mutex mutex_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::string, FeatureVector> feature_cache_;
};

}  // namespace deepxsoz::review
