#pragma once

// Online adaptation over a stream of unlabeled batches: the memory-replay
// method with its ablation toggles, and the Source / BN-Stats / Tent
// baselines. Every method emits per-sample predictions and entropy OOD scores
// from the model as it stands before that batch's update.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stamp/common.hpp"
#include "stamp/datagen.hpp"
#include "stamp/diffnet.hpp"
#include "stamp/losses.hpp"
#include "stamp/membank.hpp"
#include "stamp/metrics.hpp"
#include "stamp/optim.hpp"

namespace stamp {

enum class Method { Source, BnStats, Tent, Stamp };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Source: return "source";
    case Method::BnStats: return "bn-stats";
    case Method::Tent: return "tent";
    case Method::Stamp: return "stamp";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "source") return Method::Source;
  if (s == "bn-stats") return Method::BnStats;
  if (s == "tent") return Method::Tent;
  if (s == "stamp") return Method::Stamp;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

struct Toggles {
  bool memory = true;
  bool self_weight = true;
  bool sam = true;
  bool decay = true;
  bool augmentation = true;
  bool filtering = true;

  bool operator==(const Toggles&) const = default;
};

struct AdaptConfig {
  Method method = Method::Stamp;
  Toggles toggles;
  WeightStrategy weighting = WeightStrategy::SelfWeighted;  // used while toggles.self_weight
  double lr = 0.1;                                          // initial step size
  double tent_lr = 0.01;
  std::size_t horizon = 150;
  SamConfig sam;
  std::size_t views = 16;
  double aug_strength = 1.0;
  double entropy_threshold = 0.0;  // absolute, in nats
  double beta = 0.1;
  std::size_t capacity = 64;
  std::uint64_t seed = 0;
  ForwardMode prediction_stats = ForwardMode::SourceStats;

  void validate() const {
    if (!(lr >= 0.0) || !(tent_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (horizon == 0) throw ConfigError("decay horizon must be at least 1");
    if (sam.rho < 0.0) throw ConfigError("SAM radius must be non-negative");
    if (views == 0) throw ConfigError("need at least one augmented view");
    if (aug_strength < 0.0) throw ConfigError("augmentation strength must be non-negative");
    if (!(entropy_threshold > 0.0)) throw ConfigError("entropy threshold must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
    if (capacity == 0) throw ConfigError("memory capacity must be positive");
  }
};

struct Prediction {
  int pred = 0;
  double score = 0.0;
};

/// Mean of softmax outputs over K augmented views of each row, with BN in
/// running-statistics mode. Row i uses augmentation stream (seed, first_index + i).
inline Matrix averaged_prediction(const Model& model, const Matrix& x, std::size_t views, double strength,
                                  std::uint64_t seed, std::size_t first_index = 0,
                                  ForwardMode mode = ForwardMode::SourceStats) {
  if (views == 0) throw ConfigError("need at least one augmented view");
  if (strength == 0.0) return forward(model, x, mode);
  const Eigen::Index n = x.rows();
  const auto k = static_cast<Eigen::Index>(views);
  Matrix stacked(n * k, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = augment_views(x.row(i).transpose(), views, strength, seed, first_index + static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < k; ++j) stacked.row(i * k + j) = v[static_cast<std::size_t>(j)].transpose();
  }
  Matrix avg = Matrix::Zero(n, static_cast<Eigen::Index>(model.classes()));
  if (mode == ForwardMode::SourceStats) {
    const Matrix probs = forward(model, stacked, mode);
    for (Eigen::Index i = 0; i < n; ++i) avg.row(i) = probs.middleRows(i * k, k).colwise().mean();
    return avg;
  }
  // Batch statistics are taken over the j-th view of every row.
  Matrix view(n, x.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) view.row(i) = stacked.row(i * k + j);
    avg += forward(model, view, mode);
  }
  return avg / static_cast<double>(k);
}

/// Entropy of the prediction.
inline double ood_score(const Vector& p_hat) { return entropy(p_hat); }

/// 1 (reject as outlier) iff score >= threshold.
inline int detect(double score, double threshold) { return score >= threshold ? 1 : 0; }

class Adapter {
 public:
  Adapter(const Model& pretrained, AdaptConfig cfg)
      : cfg_(std::move(cfg)),
        model_(pretrained),
        source_(snapshot_source(pretrained)),
        memory_(cfg_.capacity, pretrained.classes()),
        schedule_{cfg_.lr, cfg_.horizon, 0},
        adaptable_(adaptable_params(pretrained)) {
    cfg_.validate();
  }

  const AdaptConfig& config() const { return cfg_; }
  const Model& model() const { return model_; }
  const SourceSnapshot& source() const { return source_; }
  const MemoryBank& memory() const { return memory_; }
  const ScheduleState& schedule() const { return schedule_; }

  /// Processes one batch. `first_index` is the stream position of row 0 and
  /// only seeds the augmentation.
  std::vector<Prediction> step(const Matrix& batch, std::size_t first_index = 0) {
    switch (cfg_.method) {
      case Method::Source: return predict_single(batch, ForwardMode::SourceStats);
      case Method::BnStats: return predict_single(batch, ForwardMode::BatchStats);
      case Method::Tent: return tent_step(batch);
      case Method::Stamp: return stamp_step(batch, first_index);
    }
    throw std::logic_error("unknown method");
  }

 private:
  std::vector<Prediction> predict_single(const Matrix& batch, ForwardMode mode) const {
    return to_predictions(forward(model_, batch, mode));
  }

  static std::vector<Prediction> to_predictions(const Matrix& probs) {
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      out.push_back({static_cast<int>(argmax(probs.row(i))), ood_score(probs.row(i).transpose())});
    return out;
  }

  std::vector<Prediction> tent_step(const Matrix& batch) {
    auto out = predict_single(batch, ForwardMode::BatchStats);
    ParamSubset params(model_, adaptable_);
    sgd_update(params, network_objective(batch, ForwardMode::BatchStats, plain_loss()), cfg_.tent_lr);
    return out;
  }

  std::vector<Prediction> stamp_step(const Matrix& batch, std::size_t first_index) {
    const auto& t = cfg_.toggles;
    const std::size_t views = t.augmentation ? cfg_.views : 1;
    const double strength = t.augmentation ? cfg_.aug_strength : 0.0;
    const Matrix p_hat = averaged_prediction(model_, batch, views, strength, cfg_.seed, first_index,
                                               cfg_.prediction_stats);
    auto out = to_predictions(p_hat);

    const Matrix source_probs = source_.forward(batch);
    std::vector<Eigen::Index> admitted;
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      FilterVerdict v;
      if (t.filtering) {
        v = filter_masks(p_hat.row(i).transpose(), source_probs.row(i).transpose(), cfg_.entropy_threshold);
      } else {
        v = {true, true, out[static_cast<std::size_t>(i)].score};
      }
      if (!v.admitted()) continue;
      admitted.push_back(i);
      if (t.memory) memory_.insert(v, batch.row(i).transpose(), out[static_cast<std::size_t>(i)].pred);
    }

    Matrix replay;
    if (t.memory) {
      replay = memory_.contents().features;
    } else {
      replay.resize(static_cast<Eigen::Index>(admitted.size()), batch.cols());
      for (std::size_t k = 0; k < admitted.size(); ++k) replay.row(static_cast<Eigen::Index>(k)) = batch.row(admitted[k]);
    }

    // Batch statistics over the replay set need at least two rows.
    if (replay.rows() >= 2) {
      const double lr = t.decay ? cosine_lr(schedule_) : cfg_.lr;
      if (lr > 0.0) {
        const WeightStrategy strategy = t.self_weight ? cfg_.weighting : WeightStrategy::Plain;
        const double threshold = cfg_.entropy_threshold;
        LossFn loss = [strategy, threshold](const Matrix& logits) {
          return weighted_variant_loss(logits, strategy, threshold);
        };
        ParamSubset params(model_, adaptable_);
        auto objective = network_objective(std::move(replay), ForwardMode::BatchStats, std::move(loss));
        if (t.sam)
          sam_update(params, objective, cfg_.sam, lr);
        else
          sgd_update(params, objective, lr);
        ++schedule_.step;
      }
    }
    memory_.update_class_frequency(cfg_.beta);
    return out;
  }

  static LossFn plain_loss() {
    return [](const Matrix& logits) { return weighted_variant_loss(logits, WeightStrategy::Plain); };
  }

  AdaptConfig cfg_;
  Model model_;
  SourceSnapshot source_;
  MemoryBank memory_;
  ScheduleState schedule_;
  std::vector<ParamId> adaptable_;
};

/// Streams every batch through a fresh adapter and joins predictions with the
/// evaluation-only truth.
inline std::vector<EvalRecord> run_stream(const Model& pretrained, const AdaptConfig& cfg,
                                          std::span<const Batch> batches) {
  Adapter adapter(pretrained, cfg);
  std::vector<EvalRecord> records;
  for (const auto& b : batches) {
    const auto preds = adapter.step(b.features, b.first_index);
    for (std::size_t i = 0; i < preds.size(); ++i)
      records.push_back({b.first_index + i, preds[i].pred, preds[i].score, b.truth[i]});
  }
  return records;
}

/// Dataset CSV extended with `pred,ood_score`.
inline void write_records(std::ostream& os, std::span<const Batch> batches, std::span<const EvalRecord> records) {
  if (batches.empty()) {
    os << "label,outlier,pred,ood_score\n";
    return;
  }
  const auto dim = static_cast<std::size_t>(batches.front().features.cols());
  os << dataset_header(dim) << ",pred,ood_score\n";
  std::string line;
  std::size_t r = 0;
  for (const auto& b : batches) {
    for (Eigen::Index i = 0; i < b.features.rows(); ++i, ++r) {
      const auto& rec = records[r];
      line.clear();
      for (Eigen::Index k = 0; k < b.features.cols(); ++k) {
        detail::append_double(line, b.features(i, k));
        line += ',';
      }
      line += std::to_string(rec.truth.label);
      line += rec.truth.outlier ? ",1," : ",0,";
      line += std::to_string(rec.pred);
      line += ',';
      detail::append_double(line, rec.score);
      os << line << '\n';
    }
  }
}

}  // namespace stamp
