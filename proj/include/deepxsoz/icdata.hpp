#pragma once
// Core domain types: IC labels, independent components, patients, cohorts.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "common.hpp"

namespace deepxsoz {

enum class ICLabel : std::uint8_t { Noise = 0, RSN = 1, SOZ = 2 };

inline constexpr std::array<ICLabel, 3> kAllLabels{ICLabel::Noise, ICLabel::RSN, ICLabel::SOZ};

inline std::string_view to_string(ICLabel label) {
    switch (label) {
        case ICLabel::Noise: return "Noise";
        case ICLabel::RSN: return "RSN";
        case ICLabel::SOZ: return "SOZ";
    }
    return "?";
}

inline std::optional<ICLabel> parse_label(std::string_view s) {
    if (s == "Noise" || s == "noise" || s == "N") return ICLabel::Noise;
    if (s == "RSN" || s == "rsn" || s == "R") return ICLabel::RSN;
    if (s == "SOZ" || s == "soz" || s == "S") return ICLabel::SOZ;
    return std::nullopt;
}

inline std::optional<ICLabel> label_from_code(std::uint8_t code) {
    if (code > 2) return std::nullopt;
    return static_cast<ICLabel>(code);
}

struct SliceDims {
    std::uint32_t n_slices = 12;
    std::uint32_t height = 64;
    std::uint32_t width = 64;

    std::size_t slice_size() const { return std::size_t{height} * width; }
    std::size_t voxel_count() const { return slice_size() * n_slices; }
    friend bool operator==(const SliceDims&, const SliceDims&) = default;
};

// Row-major 2-D view of one activation slice.
template <typename T>
struct Grid2D {
    std::span<T> data;
    std::size_t height = 0;
    std::size_t width = 0;

    T& at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

struct IndependentComponent {
    std::string ic_id;
    SliceDims dims;
    std::vector<float> slices;  // [n_slices][height][width], activation >= 0
    std::vector<float> bold;    // BOLD time course sampled every tr_seconds
    double tr_seconds = 2.0;
    ICLabel truth = ICLabel::Noise;

    std::span<const float> slice(std::size_t k) const {
        return std::span<const float>(slices).subspan(k * dims.slice_size(), dims.slice_size());
    }
    Grid2D<const float> slice_grid(std::size_t k) const { return {slice(k), dims.height, dims.width}; }
    float max_activation() const {
        float m = 0.0f;
        for (float v : slices) m = std::max(m, v);
        return m;
    }

    friend bool operator==(const IndependentComponent&, const IndependentComponent&) = default;
};

inline void validate(const IndependentComponent& ic, std::size_t min_bold_len = 1) {
    if (ic.dims.n_slices < 1 || ic.dims.height < 1 || ic.dims.width < 1)
        throw DataError("IC " + ic.ic_id + ": empty slice stack");
    if (ic.slices.size() != ic.dims.voxel_count())
        throw DataError("IC " + ic.ic_id + ": slice data does not match dims");
    if (ic.bold.size() < min_bold_len) throw DataError("IC " + ic.ic_id + ": BOLD series too short");
    for (float v : ic.slices)
        if (!std::isfinite(v)) throw DataError("IC " + ic.ic_id + ": non-finite activation");
    if (!(ic.tr_seconds > 0.0)) throw DataError("IC " + ic.ic_id + ": TR must be positive");
}

struct PatientMeta {
    std::string age_group;  // optional stratification tags
    std::string sex;
    friend bool operator==(const PatientMeta&, const PatientMeta&) = default;
};

struct Patient {
    std::string patient_id;
    std::vector<IndependentComponent> ics;
    PatientMeta meta;

    friend bool operator==(const Patient&, const Patient&) = default;
};

inline void validate(const Patient& p) {
    if (p.ics.empty()) throw DataError("patient " + p.patient_id + " has no ICs");
    std::unordered_set<std::string> seen;
    for (const auto& ic : p.ics) {
        if (!seen.insert(ic.ic_id).second)
            throw DataError("patient " + p.patient_id + ": duplicate IC id " + ic.ic_id);
        validate(ic);
    }
}

struct ClassMix {
    double noise = 0.55;
    double rsn = 0.40;
    double soz = 0.05;
    friend bool operator==(const ClassMix&, const ClassMix&) = default;
};

struct GeneratorParams {
    std::uint32_t n_patients = 52;
    std::uint32_t ics_per_patient = 100;
    ClassMix class_mix;
    SliceDims slice_dims;
    double tr_seconds = 2.0;
    std::uint32_t bold_len = 300;
    std::uint64_t seed = 42;

    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

inline constexpr std::string_view kRngName = "mt19937_64";

struct CohortManifest {
    std::uint32_t format_version = 1;
    std::optional<GeneratorParams> generator;  // absent for hand-assembled cohorts
    std::string rng = std::string(kRngName);

    friend bool operator==(const CohortManifest&, const CohortManifest&) = default;
};

struct Cohort {
    std::vector<Patient> patients;
    CohortManifest manifest;

    std::size_t ic_count() const {
        std::size_t n = 0;
        for (const auto& p : patients) n += p.ics.size();
        return n;
    }
    friend bool operator==(const Cohort&, const Cohort&) = default;
};

inline void validate(const Cohort& c) {
    std::unordered_set<std::string> ids;
    for (const auto& p : c.patients) {
        if (!ids.insert(p.patient_id).second) throw DataError("duplicate patient id " + p.patient_id);
        validate(p);
    }
}

// Content hash of an IC (identity + data); used for leakage audits.
inline std::string content_hash(std::string_view patient_id, const IndependentComponent& ic) {
    Sha256 h;
    h.update(patient_id).update("/").update(ic.ic_id).update("\n");
    h.update(std::span<const float>(ic.slices));
    h.update(std::span<const float>(ic.bold));
    return h.hex();
}

}  // namespace deepxsoz
