#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "stance/config.hpp"

using namespace stance;
using namespace stance::config;

TEST(Config, DefaultsRoundTrip) {
    const GlobalConfig c;
    const auto j = to_json(c);
    const auto back = from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(to_json(back).dump(), j.dump());
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, PartialFileKeepsDefaults) {
    const auto c = from_json(nlohmann::json::parse(R"({"seed": 3, "loss": {"lambda": 0.25}})"));
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.train.loss.lambda, 0.25);
    EXPECT_EQ(c.train.loss.tau_temp, GlobalConfig{}.train.loss.tau_temp);
    EXPECT_EQ(c.train_config().seed, 3u);
    EXPECT_EQ(c.synth_config().seed, 3u);
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"sed": 3})")), ValidationError);
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"loss": {"lamda": 0.5}})")), ValidationError);
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"loss": 0.5})")), ValidationError);
}

TEST(Config, WrongTypesRejected) {
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"loss": {"lambda": "half"}})")), ValidationError);
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"seed": -1})")), ValidationError);
    EXPECT_THROW(from_json(nlohmann::json::parse(R"({"loss": {"variant": "HINGE"}})")), ValidationError);
}

TEST(Config, OverridesParseJsonOrString) {
    GlobalConfig c;
    apply_override(c, "loss.lambda=0.75");
    EXPECT_EQ(c.train.loss.lambda, 0.75);
    apply_override(c, "loss.variant=TRIPLET");
    EXPECT_EQ(c.train.loss.variant, objective::LossVariant::Triplet);
    apply_override(c, "eval.gamma_grid=[0.1,0.2]");
    EXPECT_EQ(c.eval.gamma_grid, (std::vector<double>{0.1, 0.2}));
    apply_override(c, "synth.domain_doc_counts=[50,20]");
    EXPECT_EQ(c.synth.domain_doc_counts, (std::vector<std::size_t>{50, 20}));
    apply_override(c, "counterfactual.enabled=false");
    EXPECT_FALSE(c.train.counterfactual.enabled);
}

TEST(Config, BadOverridesRejected) {
    GlobalConfig c;
    EXPECT_THROW(apply_override(c, "loss.nope=1"), ValidationError);
    EXPECT_THROW(apply_override(c, "loss=1"), ValidationError);
    EXPECT_THROW(apply_override(c, "no_equals"), ValidationError);
    EXPECT_THROW(apply_override(c, "loss.lambda=abc"), ValidationError);
}

TEST(Config, ValidationCatchesRanges) {
    GlobalConfig c;
    c.train.loss.lambda = 1.5;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.eval.seeds = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.split.gamma = -0.1;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.synth.domain_doc_counts = {10, 0};
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Config, LoadsFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "stance_config_test.json";
    {
        std::ofstream out(path);
        out << R"({"train": {"epochs": 4}})";
    }
    EXPECT_EQ(load(path.string()).train.epochs, 4u);
    {
        std::ofstream out(path);
        out << "{not json";
    }
    EXPECT_THROW(load(path.string()), ValidationError);
    std::filesystem::remove(path);
    EXPECT_THROW(load(path.string()), ValidationError);
}
