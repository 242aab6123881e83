// Validation sweep for the synthetic benchmark's free hyperparameters: the
// initial step size, decay horizon and entropy-threshold factor of the
// memory-replay method, and Tent's step size. Seeds are disjoint from the
// acceptance seeds. Writes the selected values as a full config file.

#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "stamp/experiment.hpp"

namespace {

struct Score {
  double acc = 0.0, auc = 0.0, h = 0.0;
};

Score mean_over_seeds(stamp::ExperimentConfig c, const std::vector<stamp::Model>& sources,
                      std::uint64_t first_seed) {
  Score s;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    c.seed = first_seed + i;
    const auto m = stamp::run_experiment(c, sources[i]).metrics;
    s.acc += m.acc;
    s.auc += m.auc.value_or(0.0);
    s.h += m.h_score.value_or(0.0);
  }
  const double n = static_cast<double>(sources.size());
  return {s.acc / n, s.auc / n, s.h / n};
}

void print(const std::string& label, const Score& s) {
  std::cout << std::left << std::setw(34) << label << std::fixed << std::setprecision(4) << " acc=" << s.acc
            << " auc=" << s.auc << " h=" << s.h << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperparameter validation sweep"};
  std::string out = "configs/defaults.json";
  std::uint64_t first_seed = 1000;
  std::size_t seeds = 3;
  app.add_option("--out", out, "where to write the selected config");
  app.add_option("--first-seed", first_seed, "first validation seed");
  app.add_option("--seeds", seeds, "number of validation seeds")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  stamp::ExperimentConfig base;
  base.output.records = false;
  base.output.roc = false;
  std::vector<stamp::Model> sources;
  for (std::size_t i = 0; i < seeds; ++i) {
    base.seed = first_seed + i;
    sources.push_back(stamp::train_source_model(base).model);
  }

  stamp::ExperimentConfig best = base;
  Score best_score{-1, -1, -1};
  for (double lr : {0.01, 0.05, 0.1, 0.2})
    for (std::size_t horizon : {50u, 157u, 300u})
      for (double factor : {0.25, 0.4, 0.6, 0.8}) {
        stamp::ExperimentConfig c = base;
        c.method.method = stamp::Method::Stamp;
        c.method.lr = lr;
        c.method.horizon = horizon;
        c.method.entropy_factor = factor;
        const Score s = mean_over_seeds(c, sources, first_seed);
        std::ostringstream label;
        label << "stamp lr=" << lr << " T=" << horizon << " factor=" << factor;
        print(label.str(), s);
        if (s.h > best_score.h) best_score = s, best = c;
      }
  print("selected stamp", best_score);

  double best_tent_lr = base.method.tent_lr;
  Score best_tent{-1, -1, -1};
  for (double lr : {0.001, 0.005, 0.01, 0.05, 0.1}) {
    stamp::ExperimentConfig c = best;
    c.method.method = stamp::Method::Tent;
    c.method.tent_lr = lr;
    const Score s = mean_over_seeds(c, sources, first_seed);
    print("tent lr=" + std::to_string(lr), s);
    if (s.h > best_tent.h) best_tent = s, best_tent_lr = lr;
  }
  best.method.tent_lr = best_tent_lr;
  best.method.method = stamp::Method::Stamp;
  best.seed = 0;
  best.output = stamp::OutputSection{};
  stamp::detail::write_text(out, stamp::to_json(best).dump(2) + "\n");
  std::cout << "wrote " << out << '\n';
  return 0;
}
