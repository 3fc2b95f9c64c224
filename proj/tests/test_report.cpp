#include <deepxsoz/report.hpp>

#include <gtest/gtest.h>

using namespace deepxsoz;
using namespace deepxsoz::report;
namespace fs = std::filesystem;

namespace {

pipeline::FoldResult fold(const std::string& id, int tp, int fp, int fn, int tn, bool ok = true) {
    pipeline::FoldResult f;
    f.patient_id = id;
    f.ok = ok;
    if (!ok) f.failure = "step 1: diverged";
    auto add = [&](int n, ICLabel truth, ICLabel fused) {
        for (int i = 0; i < n; ++i) {
            pipeline::ICRecord r;
            r.ic_id = id + "_" + std::to_string(f.records.size());
            r.truth = truth;
            r.fused = fused;
            f.records.push_back(r);
        }
    };
    add(tp, ICLabel::SOZ, ICLabel::SOZ);
    add(fp, ICLabel::RSN, ICLabel::SOZ);
    add(fn, ICLabel::SOZ, ICLabel::RSN);
    add(tn, ICLabel::Noise, ICLabel::Noise);
    return f;
}

ReportInput sample_input() {
    ReportInput in;
    in.run = {{"seed", 42}};
    in.methods.push_back({"deepxsoz", {fold("p1", 2, 1, 0, 20), fold("p2", 1, 3, 1, 30), fold("p3", 1, 0, 0, 10), fold("p4", 0, 0, 0, 0, false)}});
    in.methods.push_back({"lssvm", {fold("p1", 1, 9, 1, 12), fold("p2", 0, 10, 2, 22), fold("p3", 1, 5, 0, 5), fold("p4", 0, 2, 1, 9)}});
    in.ablations.push_back({pipeline::AblationMask::named("full"), in.methods[0].folds});
    in.ablations.push_back({pipeline::AblationMask::named("no-spatial"), in.methods[1].folds});
    in.roc = eval::roc_assemble({eval::roc_point(in.methods[0].folds, "threshold", 0.9, 1.0),
                                 eval::roc_point(in.methods[1].folds, "threshold", 0.5, 1.0)});
    return in;
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("deepxsoz_report_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST(Report, ContentsAndFailedFolds) {
    const auto j = build_report(sample_input());
    EXPECT_EQ(j["schema"], "deepxsoz-report");
    const auto& m = j["methods"][0];
    EXPECT_EQ(m["n_patients"], 4);
    EXPECT_EQ(m["n_evaluated"], 3);
    EXPECT_EQ(m["failed_folds"][0]["patient_id"], "p4");
    EXPECT_EQ(m["plm"]["tp"], 3);
    EXPECT_DOUBLE_EQ(m["ilm"]["mm_soz"]["mean"].get<double>(), (3.0 + 4.0 + 1.0) / 3.0);
    ASSERT_EQ(j["comparisons"].size(), 3u);
    EXPECT_EQ(j["comparisons"][0]["method_b"], "lssvm");
    EXPECT_EQ(j["ablation"][1]["features"].size(), 3u);
    EXPECT_EQ(j["roc"].size(), 2u);
}

TEST(Report, EmittedFilesAreByteIdenticalAcrossRuns) {
    const auto a = scratch("a"), b = scratch("b");
    emit_report(sample_input(), a);
    emit_report(sample_input(), b);
    for (const char* f : {"report.json", "plm.csv", "ilm.csv", "ablation.csv", "roc.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    }
    const auto plm = read_file(a / "plm.csv");
    EXPECT_NE(plm.find("deepxsoz,3,3,0,0,0,1,1,1\n"), std::string::npos) << plm;
}

TEST(Report, UndefinedValuesAreNullAndEmpty) {
    ReportInput in;
    in.methods.push_back({"m", {fold("a", 0, 0, 0, 5), fold("b", 0, 0, 0, 5)}});
    const auto j = build_report(in);
    EXPECT_TRUE(j["methods"][0]["plm"]["precision"].is_null());
    EXPECT_TRUE(j["methods"][0]["ilm"]["sensitivity"]["mean"].is_null());
    const auto d = scratch("null");
    emit_report(in, d);
    EXPECT_NE(read_file(d / "plm.csv").find("m,2,0,0,0,2,1,,\n"), std::string::npos);
}

TEST(Report, NumberFormatting) {
    EXPECT_EQ(num(0.1), "0.1");
    EXPECT_EQ(num(1.0 / 3.0), "0.3333333333");
    EXPECT_EQ(num(std::optional<double>{}), "");
}
