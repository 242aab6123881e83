#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "stamp/experiment.hpp"

using namespace stamp;
namespace fs = std::filesystem;

namespace {

std::string error_of(const Json& j) {
  try {
    const auto c = config_from_json(j);
    validate(c);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("stamp_test_" + name);
  fs::remove_all(p);
  return p;
}

// Small enough for a unit test, large enough that pretraining clears the floor.
ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.seed = 3;
  c.data.source_samples = 800;
  c.data.validation_samples = 200;
  c.data.target_samples = 256;
  c.data.severity = 2.0;
  c.model.hidden = {8, 8};
  c.model.pretrain_epochs = 15;
  c.model.min_source_accuracy = 0.9;
  c.method.views = 2;
  c.method.horizon = 4;
  c.output.dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ParseConfig, MinimalConfigTakesDefaults) {
  const auto c = config_from_json(Json::parse(R"({"seed": 5, "data": {"C": 4}})"));
  const ExperimentConfig d;
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.data.classes, 4u);
  EXPECT_EQ(c.data.batch_size, 64u);
  EXPECT_EQ(c.method.capacity, 64u);
  EXPECT_EQ(c.method.beta, 0.1);
  EXPECT_EQ(c.method.rho, 0.05);
  EXPECT_EQ(c.method.views, 16u);
  EXPECT_EQ(c.method.lr, d.method.lr);
  EXPECT_EQ(c.method.horizon, d.method.horizon);
  EXPECT_EQ(c.method.entropy_factor, d.method.entropy_factor);
  EXPECT_EQ(c.method.method, Method::Stamp);
  EXPECT_TRUE(c.method.toggles == Toggles{});
  EXPECT_EQ(c.delta_threshold(), c.entropy_threshold());
}

TEST(ParseConfig, CommittedDefaultsMatchBuiltIns) {
  const auto c = parse_config(STAMP_SOURCE_DIR "/configs/defaults.json");
  EXPECT_EQ(to_json(c).dump(), to_json(ExperimentConfig{}).dump());
}

TEST(ParseConfig, EntropyThresholdFromFactor) {
  const auto c = config_from_json(Json::parse(R"({"data": {"C": 4}, "method": {"h_thr_factor": 0.5}})"));
  EXPECT_NEAR(c.entropy_threshold(), 0.5 * std::log(4.0), 1e-15);
  EXPECT_NEAR(c.entropy_threshold(), 0.693147, 1e-6);
  EXPECT_NEAR(c.adapt().entropy_threshold, c.entropy_threshold(), 0.0);
}

TEST(ParseConfig, RangeErrorNamesKey) {
  EXPECT_EQ(error_of(Json::parse(R"({"method": {"rho": -1}})")), "method.rho: must be non-negative");
  EXPECT_NE(error_of(Json::parse(R"({"data": {"outlier_ratio": 1.0}})")).find("data.outlier_ratio"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"method": {"beta": 0}})")).find("method.beta"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"data": {"target_samples": 129}})")).find("data.target_samples"),
            std::string::npos);
}

TEST(ParseConfig, SchemaErrorsNameKeyPath) {
  EXPECT_EQ(error_of(Json::parse(R"({"method": {"nope": 1}})")), "method.nope: unknown key");
  EXPECT_EQ(error_of(Json::parse(R"({"extra": 1})")), "extra: unknown key");
  EXPECT_EQ(error_of(Json::parse(R"({"data": {"C": "four"}})")), "data.C: wrong type");
  EXPECT_EQ(error_of(Json::parse(R"({"data": {"C": -4}})")), "data.C: wrong type");
  EXPECT_EQ(error_of(Json::parse(R"({"method": {"use_sam": 1}})")), "method.use_sam: wrong type");
  EXPECT_NE(error_of(Json::parse(R"({"method": {"name": "cotta"}})")).find("method.name"), std::string::npos);
  EXPECT_NE(error_of(Json::parse(R"({"data": 3})")).find("data"), std::string::npos);
}

TEST(ParseConfig, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.seed = 77;
  c.method.method = Method::Tent;
  c.method.weighting = WeightStrategy::EataWeighted;
  c.method.toggles.sam = false;
  c.method.delta_threshold = 0.25;
  c.data.outlier_mode = OutlierMode::BackgroundUniform;
  c.model.hidden = {5, 6, 7};
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(ParseConfig, FileAndOverrides) {
  const auto dir = scratch_dir("overrides");
  fs::create_directories(dir);
  const auto path = dir / "cfg.json";
  std::ofstream(path) << R"({"seed": 1, "method": {"rho": 0.1}})";
  const auto c = parse_config(path.string(), {"method.rho=0.2", "method.name=tent", "data.C=6", "seed=9"});
  EXPECT_EQ(c.method.rho, 0.2);
  EXPECT_EQ(c.method.method, Method::Tent);
  EXPECT_EQ(c.data.classes, 6u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(parse_config((dir / "missing.json").string()), ConfigError);
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(parse_config((dir / "bad.json").string()), ConfigError);
  Json j = Json::object();
  EXPECT_THROW(apply_override(j, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ConfigError);
  fs::remove_all(dir);
}

TEST(Commands, RunIsByteDeterministic) {
  const auto dir = scratch_dir("run");
  auto c = tiny(dir / "a");
  cmd_run(c);
  c.output.dir = (dir / "b").string();
  cmd_run(c);
  for (const char* f : {"records.csv", "roc.csv"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  // Summaries differ only in the recorded output directory.
  auto a = Json::parse(slurp(dir / "a" / "summary.json")), b = Json::parse(slurp(dir / "b" / "summary.json"));
  a["config"]["output"].erase("dir");
  b["config"]["output"].erase("dir");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_TRUE(a["metrics"]["auc"].is_number());
  fs::remove_all(dir);
}

TEST(Commands, PretrainThenRunFromCheckpoint) {
  const auto dir = scratch_dir("ckpt");
  auto c = tiny(dir);
  const SourceModel trained = cmd_pretrain(c);
  ASSERT_TRUE(fs::exists(dir / "model.ckpt"));
  c.model.checkpoint = (dir / "model.ckpt").string();
  const SourceModel loaded = obtain_source_model(c);
  EXPECT_TRUE(loaded.model == trained.model);
  EXPECT_EQ(loaded.validation_accuracy, trained.validation_accuracy);
  c.model.checkpoint = (dir / "absent.ckpt").string();
  EXPECT_THROW(cmd_run(c), ConfigError);
  c.model.checkpoint = (dir / "model.ckpt").string();
  c.model.hidden = {8};
  EXPECT_THROW(cmd_run(c), ConfigError);
  fs::remove_all(dir);
}

TEST(Commands, SourceFloorEnforced) {
  const auto dir = scratch_dir("floor");
  auto c = tiny(dir);
  c.model.pretrain_epochs = 0;
  c.model.min_source_accuracy = 0.99;
  EXPECT_THROW(cmd_pretrain(c), NumericalError);
  fs::remove_all(dir);
}

TEST(Commands, AblateEmitsEveryArm) {
  const auto dir = scratch_dir("ablate");
  std::vector<ArmResult> results;
  std::stringstream err;
  const auto failed = cmd_ablate(tiny(dir), results, err);
  EXPECT_TRUE(failed.empty()) << err.str();
  ASSERT_EQ(results.size(), 12u);
  for (const auto& r : results) EXPECT_TRUE(fs::exists(dir / r.name / "summary.json")) << r.name;
  const auto table = slurp(dir / "comparison.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 13);
  fs::remove_all(dir);
}

TEST(Commands, FailingArmIsReportedAndOthersFinish) {
  const auto dir = scratch_dir("arms");
  std::vector<Arm> arms = ablation_arms();
  arms.resize(2);
  arms.push_back({"broken", [](ExperimentConfig& c) { c.method.rho = -1.0; }});
  std::vector<ArmResult> results;
  std::stringstream err;
  const auto failed = run_arms(tiny(dir), arms, results, err);
  EXPECT_EQ(failed, std::vector<std::string>{"broken"});
  EXPECT_EQ(results.size(), 2u);
  EXPECT_NE(err.str().find("arm broken failed: method.rho"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Commands, SweepRatioRows) {
  const auto dir = scratch_dir("sweep");
  std::vector<ArmResult> results;
  std::stringstream err;
  EXPECT_TRUE(cmd_sweep_ratio(tiny(dir), results, err).empty()) << err.str();
  ASSERT_EQ(results.size(), 5u);
  const std::vector<double> expected{0.05, 0.10, 0.20, 0.33, 0.50};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(results[i].config.data.outlier_ratio, expected[i]);
  const auto table = slurp(dir / "comparison.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "ratio,acc,auc,h_score");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);
  fs::remove_all(dir);
}
