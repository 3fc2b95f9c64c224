#include <deepxsoz/config.hpp>

#include <gtest/gtest.h>

using namespace deepxsoz;

namespace {

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "no error";
}

}  // namespace

TEST(Config, DefaultsValidate) {
    RunConfig c;
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.pipeline.fusion.posterior_threshold, 0.9);
    EXPECT_EQ(c.masks.size(), 8u);
}

TEST(Config, JsonRoundTripPreservesHash) {
    RunConfig c;
    c.cohort = "cohort";
    c.pipeline.seed = 7;
    c.pipeline.features.temporal.per_level_gini = true;
    apply_network_profile(c, "paper");
    const auto back = run_config_from_json(to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(back.pipeline.network, nn::NetworkConfig::paper_profile());
    c.pipeline.seed = 8;
    EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
    EXPECT_NE(message_of([] { run_config_from_json({{"seeed", 1}}); }).find("unknown key 'seeed'"), std::string::npos);
    EXPECT_NE(message_of([] { run_config_from_json({{"fusion", {{"threshold", 0.5}}}}); }).find("config.fusion"), std::string::npos);
    EXPECT_NE(message_of([] { run_config_from_json({{"spatial", {{"epsilon", 2}}}}); }).find("config.spatial"), std::string::npos);
    EXPECT_THROW(run_config_from_json({{"network", {{"filters", 2}}}}), ConfigError);
}

TEST(Config, WrongTypesAndRanges) {
    EXPECT_THROW(run_config_from_json({{"seed", "forty-two"}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"spatial", {{"threshold_mode", "median"}}}}), ConfigError);
    EXPECT_THROW(validate(run_config_from_json({{"fusion", {{"posterior_threshold", 1.5}}}})), ConfigError);
    EXPECT_THROW(validate(run_config_from_json({{"fractions", {0.0, 1.0}}})), ConfigError);
    EXPECT_THROW(validate(run_config_from_json({{"masks", {"no-gini"}}})), ConfigError);
    EXPECT_THROW(validate(run_config_from_json({{"temporal", {{"window_len", 100}}}})), ConfigError);
    EXPECT_THROW(validate(run_config_from_json({{"network", {{"height", 4}}}})), ConfigError);
    RunConfig c;
    EXPECT_THROW(apply_network_profile(c, "laptop"), ConfigError);
}

TEST(Config, ParseErrorsCarryLineAndColumn) {
    const std::string text = "{\n  \"seed\": 1,\n  \"threads\": ,\n}\n";
    const auto msg = message_of([&] { parse_json_text(text, "run.json"); });
    EXPECT_EQ(msg.rfind("run.json:3:", 0), 0u) << msg;
}

TEST(Config, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / ("deepxsoz_cfg_" + std::to_string(::getpid()) + ".json");
    write_file_atomic(path, R"({"cohort": "c", "network": {"profile": "desk", "max_epochs": 9}, "svm": {"C": 2}})");
    const auto c = load_run_config(path);
    EXPECT_EQ(c.pipeline.network.max_epochs, 9);
    EXPECT_EQ(c.pipeline.svm.C, 2.0);
    EXPECT_EQ(c.cohort, "c");
    EXPECT_THROW(load_run_config(path.string() + ".missing"), ConfigError);
}
