#pragma once
// Cohort directory persistence.
//
//   <dir>/manifest.json                 version, generator params, seed, checksums
//   <dir>/patients/<id>/ic_<nnn>.icsl   one binary file per IC
//   <dir>/patients/<id>/labels.csv      ic_id,truth (for human inspection)
//
// ICSL layout (little-endian): "ICSL", u16 version, u32 n_slices, u32 height,
// u32 width, u32 bold_len, f64 tr_seconds, u8 truth code, f32 slices
// (row-major), f32 bold.

#include <filesystem>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "generator.hpp"
#include "icdata.hpp"

namespace deepxsoz {

inline constexpr std::string_view kIcslMagic = "ICSL";
inline constexpr std::uint16_t kIcslVersion = 1;
inline constexpr std::uint32_t kCohortFormatVersion = 1;

inline std::string encode_icsl(const IndependentComponent& ic) {
    ByteWriter w;
    w.put_bytes(kIcslMagic);
    w.put<std::uint16_t>(kIcslVersion);
    w.put<std::uint32_t>(ic.dims.n_slices);
    w.put<std::uint32_t>(ic.dims.height);
    w.put<std::uint32_t>(ic.dims.width);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ic.bold.size()));
    w.put<double>(ic.tr_seconds);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ic.truth));
    w.put_array(std::span<const float>(ic.slices));
    w.put_array(std::span<const float>(ic.bold));
    return w.take();
}

inline IndependentComponent decode_icsl(std::string_view bytes, std::string ic_id, const std::string& context = {}) {
    ByteReader r(bytes, context);
    if (r.get_bytes(4) != kIcslMagic) throw FormatError("bad magic in " + context);
    const auto version = r.get<std::uint16_t>();
    if (version != kIcslVersion) throw FormatError("unsupported ICSL version " + std::to_string(version) + " in " + context);
    IndependentComponent ic;
    ic.ic_id = std::move(ic_id);
    ic.dims.n_slices = r.get<std::uint32_t>();
    ic.dims.height = r.get<std::uint32_t>();
    ic.dims.width = r.get<std::uint32_t>();
    const auto bold_len = r.get<std::uint32_t>();
    ic.tr_seconds = r.get<double>();
    const auto code = label_from_code(r.get<std::uint8_t>());
    if (!code) throw FormatError("invalid truth label code in " + context);
    ic.truth = *code;
    ic.slices = r.get_array<float>(ic.dims.voxel_count());
    ic.bold = r.get_array<float>(bold_len);
    if (r.remaining() != 0) throw FormatError("trailing bytes in " + context);
    return ic;
}

inline nlohmann::json to_json(const GeneratorParams& p) {
    return {{"n_patients", p.n_patients},
            {"ics_per_patient", p.ics_per_patient},
            {"class_mix", {{"noise", p.class_mix.noise}, {"rsn", p.class_mix.rsn}, {"soz", p.class_mix.soz}}},
            {"slice_dims", {p.slice_dims.n_slices, p.slice_dims.height, p.slice_dims.width}},
            {"tr_seconds", p.tr_seconds},
            {"bold_len", p.bold_len},
            {"seed", p.seed}};
}

inline GeneratorParams generator_params_from_json(const nlohmann::json& j) {
    GeneratorParams p;
    p.n_patients = j.at("n_patients").get<std::uint32_t>();
    p.ics_per_patient = j.at("ics_per_patient").get<std::uint32_t>();
    const auto& m = j.at("class_mix");
    p.class_mix = {m.at("noise").get<double>(), m.at("rsn").get<double>(), m.at("soz").get<double>()};
    const auto& d = j.at("slice_dims");
    p.slice_dims = {d.at(0).get<std::uint32_t>(), d.at(1).get<std::uint32_t>(), d.at(2).get<std::uint32_t>()};
    p.tr_seconds = j.at("tr_seconds").get<double>();
    p.bold_len = j.at("bold_len").get<std::uint32_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

inline std::string ic_file_name(std::size_t index) { return "ic_" + detail::zero_pad(index, 3) + ".icsl"; }

// Writes one patient's IC files and labels.csv; returns its manifest entry.
inline nlohmann::json write_patient(const Patient& p, const std::filesystem::path& dir) {
    validate(p);
    const auto pdir = dir / "patients" / p.patient_id;
    std::filesystem::create_directories(pdir);
    nlohmann::json jp{{"id", p.patient_id}, {"age_group", p.meta.age_group}, {"sex", p.meta.sex}};
    jp["ics"] = nlohmann::json::array();
    std::string labels = "ic_id,truth\n";
    for (std::size_t i = 0; i < p.ics.size(); ++i) {
        const auto& ic = p.ics[i];
        const std::string bytes = encode_icsl(ic);
        const std::string file = ic_file_name(i);
        write_file_atomic(pdir / file, bytes);
        jp["ics"].push_back({{"id", ic.ic_id}, {"file", file}, {"sha256", sha256_hex(bytes)}});
        labels += ic.ic_id + "," + std::string(to_string(ic.truth)) + "\n";
    }
    write_file_atomic(pdir / "labels.csv", labels);
    return jp;
}

// The manifest is written last, so a directory without one is incomplete.
inline void write_manifest(const CohortManifest& m, nlohmann::json patients, const std::filesystem::path& dir) {
    nlohmann::json manifest;
    manifest["format"] = "deepxsoz-cohort";
    manifest["version"] = kCohortFormatVersion;
    manifest["rng"] = m.rng;
    if (m.generator) {
        manifest["generator"] = to_json(*m.generator);
        manifest["seed"] = m.generator->seed;
    } else {
        manifest["generator"] = nullptr;
    }
    manifest["patients"] = std::move(patients);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline void save_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
    validate(cohort);
    auto patients = nlohmann::json::array();
    for (const auto& p : cohort.patients) patients.push_back(write_patient(p, dir));
    write_manifest(cohort.manifest, std::move(patients), dir);
}

// Generates and writes one patient at a time.
inline void generate_cohort_to(const GeneratorParams& params, const std::filesystem::path& dir) {
    validate(params);
    auto patients = nlohmann::json::array();
    for (std::size_t i = 0; i < params.n_patients; ++i) patients.push_back(write_patient(generate_patient(params, i), dir));
    write_manifest(CohortManifest{kCohortFormatVersion, params, std::string(kRngName)}, std::move(patients), dir);
}

// Reads and checks manifest.json, then hands each patient to `visit` as soon
// as its ICs are decoded, so callers can stream large cohorts.
inline CohortManifest for_each_patient(const std::filesystem::path& dir, const std::function<void(Patient&&)>& visit) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "manifest.json")) throw DataError("no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
    try {
        if (manifest.at("format") != "deepxsoz-cohort") throw FormatError("manifest.json: not a cohort manifest");
        const auto version = manifest.at("version").get<std::uint32_t>();
        if (version != kCohortFormatVersion)
            throw FormatError("cohort format version " + std::to_string(version) + " is not supported");
        CohortManifest m;
        m.format_version = version;
        m.rng = manifest.value("rng", std::string(kRngName));
        if (!manifest.at("generator").is_null()) m.generator = generator_params_from_json(manifest.at("generator"));
        for (const auto& jp : manifest.at("patients")) {
            Patient p;
            p.patient_id = jp.at("id").get<std::string>();
            p.meta.age_group = jp.value("age_group", "");
            p.meta.sex = jp.value("sex", "");
            for (const auto& ji : jp.at("ics")) {
                const fs::path file = dir / "patients" / p.patient_id / ji.at("file").get<std::string>();
                const std::string bytes = read_file(file);
                if (sha256_hex(bytes) != ji.at("sha256").get<std::string>())
                    throw FormatError("checksum mismatch for " + file.string());
                p.ics.push_back(decode_icsl(bytes, ji.at("id").get<std::string>(), file.string()));
            }
            validate(p);
            visit(std::move(p));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
}

inline Cohort load_cohort(const std::filesystem::path& dir) {
    Cohort c;
    c.manifest = for_each_patient(dir, [&](Patient&& p) { c.patients.push_back(std::move(p)); });
    validate(c);
    return c;
}

}  // namespace deepxsoz
