#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stance/cli.hpp"

using namespace stance;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("stance_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

const std::vector<std::string> kSmall{"--set", "synth.docs_per_domain=120", "--epochs", "2"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

}  // namespace

TEST(Cli, NoArgumentsPrintsHelpAndFails) {
    const auto r = run({});
    EXPECT_EQ(r.code, cli::kExitValidation);
    EXPECT_NE(r.err.find("synth"), std::string::npos);
}

TEST(Cli, UnknownSubcommandFails) {
    EXPECT_EQ(run({"frobnicate"}).code, cli::kExitValidation);
}

TEST(Cli, HelpSucceeds) {
    const auto r = run({"train", "--help"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("--batch-log"), std::string::npos);
}

TEST_F(CliTest, UnknownOverrideKeyFails) {
    const auto r = run({"synth", "--out", path("d.jsonl"), "--set", "synth.nope=1"});
    EXPECT_EQ(r.code, cli::kExitValidation);
    EXPECT_NE(r.err.find("synth.nope"), std::string::npos);
}

TEST_F(CliTest, SynthIsDeterministic) {
    ASSERT_EQ(run(with({"synth", "--out", path("a.jsonl"), "--seed", "7"}, kSmall)).code, 0);
    ASSERT_EQ(run(with({"synth", "--out", path("b.jsonl"), "--seed", "7"}, kSmall)).code, 0);
    ASSERT_EQ(run(with({"synth", "--out", path("c.jsonl"), "--seed", "8"}, kSmall)).code, 0);
    EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
    EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
}

TEST_F(CliTest, IngestRejectsBadRecords) {
    {
        std::ofstream out(path("bad.jsonl"));
        out << R"({"id": "1", "text": "hello", "target": "t", "stance": "MAYBE", "domain": "d"})" << "\n";
    }
    EXPECT_EQ(run({"ingest", "--in", path("bad.jsonl"), "--out", path("o.jsonl")}).code, cli::kExitValidation);
}

TEST_F(CliTest, TrainThenEvaluate) {
    ASSERT_EQ(run(with({"synth", "--out", path("d.jsonl"), "--split-dir", path("split")}, kSmall)).code, 0);
    const auto t = run(with({"train", "--train", path("split/train.jsonl"), "--out", path("m.ckpt"), "--manifest",
                             path("man.json"), "--batch-log", path("log.jsonl")},
                            kSmall));
    ASSERT_EQ(t.code, 0) << t.err;
    const auto manifest = nlohmann::json::parse(slurp(path("man.json")));
    EXPECT_TRUE(manifest.contains("config"));
    EXPECT_TRUE(manifest.contains("timing"));
    EXPECT_GT(manifest.at("counterfactuals").at("generated").get<int>(), 0);

    const auto e = run({"eval", "--checkpoint", path("m.ckpt"), "--test-source", path("split/test_source.jsonl"),
                        "--test-target", path("split/test_target.jsonl"), "--compare", path("m.ckpt")});
    // Comparing a checkpoint with itself has no discordant pairs.
    EXPECT_EQ(e.code, cli::kExitValidation);
    EXPECT_NE(e.err.find("no discordant pairs"), std::string::npos);

    const auto f = run({"eval", "--checkpoint", path("m.ckpt"), "--test-source", path("split/test_source.jsonl"),
                        "--test-target", path("split/test_target.jsonl"), "--out", path("rep.json")});
    ASSERT_EQ(f.code, 0) << f.err;
    const auto report = nlohmann::json::parse(slurp(path("rep.json")));
    const double acc = report.at("target").at("accuracy").get<double>();
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_TRUE(report.contains("degradation"));
}

TEST_F(CliTest, CorruptCheckpointRejected) {
    {
        std::ofstream out(path("m.ckpt"), std::ios::binary);
        out << "STNCCKPT garbage";
    }
    {
        std::ofstream out(path("t.jsonl"));
        out << R"({"id": "1", "text": "hello", "target": "t", "stance": "FAVOR", "domain": "d"})" << "\n";
    }
    EXPECT_EQ(run({"eval", "--checkpoint", path("m.ckpt"), "--test-target", path("t.jsonl")}).code,
              cli::kExitValidation);
}

TEST(Cli, ConfigPrintsResolvedValues) {
    const auto r = run({"config", "--seed", "11", "--lambda", "0.25", "--set", "synth.foreign_marker_rates=[0.1,0.2]"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("seed").get<int>(), 11);
    EXPECT_DOUBLE_EQ(j.at("loss").at("lambda").get<double>(), 0.25);
    EXPECT_DOUBLE_EQ(j.at("synth").at("foreign_marker_rates").at(1).get<double>(), 0.2);
    EXPECT_EQ(run({"config", "--set", "loss.nope=1"}).code, cli::kExitValidation);
}
