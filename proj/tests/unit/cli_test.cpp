#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "patchlab/cli/commands.hpp"

namespace patchlab::cli {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "config accepted";
  return {};
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "patchlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

TEST(Config, EmptyObjectKeepsDefaults) {
  const auto cfg = parse_config("{}");
  const auto def = default_config();
  EXPECT_EQ(cfg.model, def.model);
  EXPECT_EQ(cfg.seeds, def.seeds);
  EXPECT_EQ(config_hash(cfg), config_hash(def));
  EXPECT_EQ(cfg.task.family, Family::kTriop);
}

TEST(Config, ValuesAreRead) {
  const auto cfg = parse_config(R"({
  "model": {"n_layers": 3},
  "task": {"family": "ADDSUB", "copy_lengths": [2, 4]},
  "seeds": {"models": [4, 5], "data": 9},
  "output_dir": "elsewhere"
})");
  EXPECT_EQ(cfg.model.n_layers, 3);
  EXPECT_EQ(cfg.task.family, Family::kAddSub);
  EXPECT_EQ(cfg.task.copy_lengths, (std::vector<int>{2, 4}));
  EXPECT_EQ(cfg.seeds.models, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(cfg.output_dir, "elsewhere");
}

TEST(Config, UnknownKeyNamesItsLine) {
  const auto msg = error_of("{\n  \"model\": {\n    \"n_layers\": 2,\n    \"bogus\": 1\n  }\n}");
  EXPECT_NE(msg.find("cfg.json:4:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("model.bogus"), std::string::npos) << msg;
}

TEST(Config, WrongTypeAndInvalidValue) {
  EXPECT_NE(error_of(R"({"model": {"n_layers": "two"}})").find("model.n_layers"), std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"d_model": 63}})").find("cfg.json:1:"), std::string::npos);
  EXPECT_NE(error_of(R"({"task": {"family": "chess"}})").find("task.family"), std::string::npos);
}

TEST(Config, MalformedJsonReportsLine) {
  const auto msg = error_of("{\n  \"model\": {,\n}");
  EXPECT_NE(msg.find("cfg.json:2"), std::string::npos) << msg;
}

TEST(Config, HashIgnoresPathsButNotSeeds) {
  auto a = default_config();
  auto b = a;
  b.output_dir = "/tmp/other";
  b.checkpoint_dir = "/tmp/models";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seeds.data = 101;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.thresholds.locked.theta_suff = 0.8;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code(ErrorCode::kConfig), 2);
  EXPECT_EQ(exit_code(ErrorCode::kIo), 2);
  EXPECT_EQ(exit_code(ErrorCode::kLockViolation), 3);
  EXPECT_EQ(exit_code(ErrorCode::kState), 3);
  EXPECT_EQ(exit_code(ErrorCode::kTrainingFailure), 4);
  EXPECT_EQ(exit_code(ErrorCode::kNumericDomain), 5);
  EXPECT_EQ(exit_code(ErrorCode::kIncompleteReport), 1);
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("patchlab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::filesystem::path dir_;
};

TEST_F(CliRun, BadConfigIsExitTwo) {
  const auto path = write("bad.json", "{\"model\": {\"bogus\": 1}}");
  EXPECT_EQ(run_args({"train", "--config", path}), 2);
  EXPECT_EQ(run_args({"train", "--config", (dir_ / "missing.json").string()}), 2);
  EXPECT_EQ(run_args({"frobnicate"}), 2);
  EXPECT_EQ(run_args({"train"}), 2);
}

TEST_F(CliRun, EvaluateWithoutManifestIsExitTwoAndOpenIsThree) {
  const std::string out = (dir_ / "out").string();
  const auto path = write("c.json", "{\"output_dir\": \"" + out + "\"}");
  // No manifest on disk: an io error.
  EXPECT_EQ(run_args({"evaluate", "--config", path}), 2);
  // An OPEN manifest on disk: query use before lock.
  LockManifest open;
  std::filesystem::create_directories(std::filesystem::path(out) / "main");
  save_manifest(open, (std::filesystem::path(out) / "main" / "manifest.json").string());
  EXPECT_EQ(run_args({"evaluate", "--config", path}), 3);
}

}  // namespace
}  // namespace patchlab::cli
