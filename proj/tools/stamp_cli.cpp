// Command-line driver: pretrain, run, ablate, sweep-ratio.
//
//   stamp pretrain --config configs/defaults.json --out out/pre
//   stamp run --config cfg.json --seed 3 --method.name=tent
//
// Any `--section.key=value` flag overrides the config file.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stamp/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config (built-in defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "experiment seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->allow_extras();
}

// Extras arrive as "--a.b=v" or as the pair "--a.b", "v".
std::vector<std::string> overrides_from(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos)
      throw stamp::ConfigError("unrecognized argument '" + arg + "'");
    std::string body = arg.substr(2);
    if (body.find('=') == std::string::npos) {
      if (i + 1 >= extras.size()) throw stamp::ConfigError("override '" + arg + "' has no value");
      body += "=" + extras[++i];
    }
    out.push_back(std::move(body));
  }
  return out;
}

stamp::ExperimentConfig load(const Common& c, const CLI::App* cmd) {
  stamp::Json j = c.config.empty() ? stamp::Json::object() : stamp::read_json_file(c.config);
  for (const auto& o : overrides_from(cmd->remaining())) stamp::apply_override(j, o);
  if (c.seed) j["seed"] = *c.seed;
  if (!c.out.empty()) j["output"]["dir"] = c.out;
  auto cfg = stamp::config_from_json(j);
  stamp::validate(cfg);
  return cfg;
}

void print_metrics(const std::string& label, const stamp::MetricsSummary& m) {
  std::cout << label << " acc=" << m.acc;
  if (m.auc) std::cout << " auc=" << *m.auc << " h=" << *m.h_score;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-aware test-time adaptation with stable memory replay"};
  app.require_subcommand(1);
  Common common;
  auto* pretrain = app.add_subcommand("pretrain", "train the source model and write model.ckpt");
  auto* run = app.add_subcommand("run", "adapt over one target stream");
  auto* ablate = app.add_subcommand("ablate", "component grid, weighting strategies, augmentation on/off");
  auto* sweep = app.add_subcommand("sweep-ratio", "outlier ratios 5%..50%");
  for (auto* cmd : {pretrain, run, ablate, sweep}) add_common(cmd, common);
  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      const auto s = stamp::cmd_pretrain(load(common, pretrain));
      std::cout << "source validation accuracy " << s.validation_accuracy << '\n';
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = load(common, run);
      print_metrics(std::string(stamp::to_string(cfg.method.method)), stamp::cmd_run(cfg).metrics);
      return 0;
    }
    const bool is_ablate = ablate->parsed();
    const auto cfg = load(common, is_ablate ? ablate : sweep);
    std::vector<stamp::ArmResult> results;
    const auto failed = is_ablate ? stamp::cmd_ablate(cfg, results) : stamp::cmd_sweep_ratio(cfg, results);
    for (const auto& r : results) print_metrics(r.name, r.metrics);
    if (!failed.empty()) {
      std::cerr << failed.size() << " arm(s) failed:";
      for (const auto& f : failed) std::cerr << ' ' << f;
      std::cerr << '\n';
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
