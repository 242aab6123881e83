#pragma once

// Small batch-normalized MLP classifier with hand-written reverse-mode
// gradients. Hidden blocks are Dense -> BatchNorm -> ReLU; the head is a plain
// Dense layer producing C logits.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stamp/common.hpp"
#include "stamp/losses.hpp"

namespace stamp {

enum class ForwardMode {
  SourceStats,  // normalize with running statistics
  BatchStats,   // normalize with the statistics of the batch being evaluated
};

inline std::string_view to_string(ForwardMode m) { return m == ForwardMode::SourceStats ? "source" : "batch"; }

inline ForwardMode forward_mode_from_string(std::string_view s) {
  if (s == "source") return ForwardMode::SourceStats;
  if (s == "batch") return ForwardMode::BatchStats;
  throw ConfigError("unknown BN statistics mode '" + std::string(s) + "'");
}

enum class ParamKind { Weight, Bias, Gamma, Beta };

struct ParamId {
  std::size_t layer = 0;  // hidden blocks first, the head is last
  ParamKind kind = ParamKind::Weight;

  auto operator<=>(const ParamId&) const = default;
};

struct BatchNorm {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  std::optional<BatchNorm> bn;
};

struct ArchSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{32, 32};
  std::size_t classes = 4;
  bool batch_norm = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  bool operator==(const ArchSpec&) const = default;
};

class Model {
 public:
  Model() = default;

  /// Deterministic He-normal initialization; BN starts at identity with
  /// running mean 0 and variance 1.
  static Model init(const ArchSpec& arch, std::uint64_t seed) {
    if (arch.hidden.empty()) throw ConfigError("model needs at least one hidden layer");
    if (arch.classes < 2) throw ConfigError("model needs at least two classes");
    if (arch.input_dim == 0) throw ConfigError("zero-width input layer");
    for (auto w : arch.hidden)
      if (w == 0) throw ConfigError("zero-width hidden layer");

    Model m;
    m.arch_ = arch;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto dense = [&](std::size_t in, std::size_t out, double gain) {
      DenseLayer l;
      l.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      const double scale = std::sqrt(gain / static_cast<double>(in));
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = scale * normal(rng);
      l.bias = Vector::Zero(static_cast<Eigen::Index>(out));
      return l;
    };

    std::size_t in = arch.input_dim;
    for (auto width : arch.hidden) {
      DenseLayer l = dense(in, width, 2.0);
      if (arch.batch_norm) {
        const auto n = static_cast<Eigen::Index>(width);
        l.bn = BatchNorm{Vector::Ones(n), Vector::Zero(n), Vector::Zero(n), Vector::Ones(n), arch.bn_momentum,
                         arch.bn_eps};
      }
      m.layers_.push_back(std::move(l));
      in = width;
    }
    m.layers_.push_back(dense(in, arch.classes, 1.0));
    return m;
  }

  const ArchSpec& arch() const { return arch_; }
  std::size_t input_dim() const { return arch_.input_dim; }
  std::size_t classes() const { return arch_.classes; }
  std::size_t depth() const { return layers_.size(); }
  std::size_t head_index() const { return layers_.size() - 1; }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Contiguous storage of one parameter array.
  std::span<double> param(const ParamId& id) {
    auto& l = layer_for(id);
    switch (id.kind) {
      case ParamKind::Weight: return {l.weight.data(), static_cast<std::size_t>(l.weight.size())};
      case ParamKind::Bias: return {l.bias.data(), static_cast<std::size_t>(l.bias.size())};
      case ParamKind::Gamma: return {bn_for(l, id).gamma.data(), static_cast<std::size_t>(l.bn->gamma.size())};
      case ParamKind::Beta: return {bn_for(l, id).beta.data(), static_cast<std::size_t>(l.bn->beta.size())};
    }
    throw std::logic_error("bad parameter kind");
  }

  std::span<const double> param(const ParamId& id) const { return const_cast<Model&>(*this).param(id); }

  bool operator==(const Model& other) const {
    if (!(arch_ == other.arch_) || layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = other.layers_[i];
      if (a.weight != b.weight || a.bias != b.bias || a.bn.has_value() != b.bn.has_value()) return false;
      if (a.bn && (a.bn->gamma != b.bn->gamma || a.bn->beta != b.bn->beta ||
                   a.bn->running_mean != b.bn->running_mean || a.bn->running_var != b.bn->running_var))
        return false;
    }
    return true;
  }

 private:
  DenseLayer& layer_for(const ParamId& id) {
    if (id.layer >= layers_.size()) throw std::out_of_range("parameter layer out of range");
    return layers_[id.layer];
  }
  static BatchNorm& bn_for(DenseLayer& l, const ParamId&) {
    if (!l.bn) throw std::out_of_range("layer has no batch norm");
    return *l.bn;
  }

  ArchSpec arch_;
  std::vector<DenseLayer> layers_;
};

inline std::string param_name(const Model& model, const ParamId& id) {
  std::string s = id.layer == model.head_index() ? "head" : "hidden" + std::to_string(id.layer);
  switch (id.kind) {
    case ParamKind::Weight: return s + ".weight";
    case ParamKind::Bias: return s + ".bias";
    case ParamKind::Gamma: return s + ".gamma";
    case ParamKind::Beta: return s + ".beta";
  }
  return s;
}

/// Every parameter in declaration order.
inline std::vector<ParamId> all_params(const Model& model) {
  std::vector<ParamId> ids;
  for (std::size_t i = 0; i < model.depth(); ++i) {
    ids.push_back({i, ParamKind::Weight});
    ids.push_back({i, ParamKind::Bias});
    if (model.layers()[i].bn) {
      ids.push_back({i, ParamKind::Gamma});
      ids.push_back({i, ParamKind::Beta});
    }
  }
  return ids;
}

/// BN scale/shift of every block below the head. The head stays frozen.
inline std::vector<ParamId> adaptable_params(const Model& model) {
  std::vector<ParamId> ids;
  for (std::size_t i = 0; i < model.head_index(); ++i) {
    if (!model.layers()[i].bn) continue;
    ids.push_back({i, ParamKind::Gamma});
    ids.push_back({i, ParamKind::Beta});
  }
  if (ids.empty()) throw ConfigError("model has no batch-norm layers to adapt");
  return ids;
}

inline std::vector<double> read_params(const Model& model, std::span<const ParamId> ids) {
  std::vector<double> flat;
  for (const auto& id : ids) {
    auto p = model.param(id);
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return flat;
}

inline void write_params(Model& model, std::span<const ParamId> ids, std::span<const double> flat) {
  std::size_t offset = 0;
  for (const auto& id : ids) {
    auto p = model.param(id);
    if (offset + p.size() > flat.size()) throw std::invalid_argument("write_params: flat vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.size(), p.begin());
    offset += p.size();
  }
  if (offset != flat.size()) throw std::invalid_argument("write_params: flat vector too long");
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerTrace {
  Matrix input;       // activations entering the dense layer
  Matrix normalized;  // x-hat (BN layers only)
  Vector inv_std;
  Matrix output;      // post-activation (post-ReLU for hidden blocks)
};

struct ForwardTrace {
  ForwardMode mode = ForwardMode::SourceStats;
  std::vector<LayerTrace> layers;
  Matrix logits;
  Matrix probs;
};

namespace detail {

inline void check_input(const Model& model, const Matrix& x, ForwardMode mode) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim())
    throw std::invalid_argument("forward: expected " + std::to_string(model.input_dim()) + " columns, got " +
                                std::to_string(x.cols()));
  if (x.rows() == 0) throw std::invalid_argument("forward: empty batch");
  if (mode == ForwardMode::BatchStats && x.rows() < 2)
    throw std::invalid_argument("forward: batch statistics need at least two rows");
}

inline ForwardTrace run_forward(const Model& model, const Matrix& x, ForwardMode mode,
                                std::vector<std::pair<Vector, Vector>>* batch_stats) {
  check_input(model, x, mode);
  ForwardTrace trace;
  trace.mode = mode;
  trace.layers.resize(model.depth());
  Matrix act = x;
  for (std::size_t li = 0; li < model.depth(); ++li) {
    const auto& layer = model.layers()[li];
    auto& lt = trace.layers[li];
    lt.input = std::move(act);
    Matrix z = lt.input * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (li == model.head_index()) {
      trace.logits = z;
      lt.output = std::move(z);
      break;
    }
    if (layer.bn) {
      const auto& bn = *layer.bn;
      Vector mean, var;
      if (mode == ForwardMode::BatchStats) {
        mean = z.colwise().mean().transpose();
        var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
        if (batch_stats) batch_stats->emplace_back(mean, var);
      } else {
        mean = bn.running_mean;
        var = bn.running_var;
      }
      lt.inv_std = (var.array() + bn.eps).rsqrt().matrix();
      lt.normalized = (z.rowwise() - mean.transpose()).array().rowwise() * lt.inv_std.transpose().array();
      z = (lt.normalized.array().rowwise() * bn.gamma.transpose().array()).matrix();
      z.rowwise() += bn.beta.transpose();
    }
    act = z.cwiseMax(0.0);
    lt.output = act;
  }
  trace.probs = softmax_rows(trace.logits);
  return trace;
}

}  // namespace detail

/// Forward pass that keeps intermediates for backward(). Never mutates the model.
inline ForwardTrace forward_trace(const Model& model, const Matrix& x, ForwardMode mode) {
  return detail::run_forward(model, x, mode, nullptr);
}

/// Class probabilities, one row per input row.
inline Matrix forward(const Model& model, const Matrix& x, ForwardMode mode) {
  return forward_trace(model, x, mode).probs;
}

/// BatchStats forward that also folds the batch statistics into the running
/// statistics (unbiased variance, BN momentum).
inline ForwardTrace forward_train(Model& model, const Matrix& x) {
  std::vector<std::pair<Vector, Vector>> stats;
  ForwardTrace trace = detail::run_forward(model, x, ForwardMode::BatchStats, &stats);
  const double n = static_cast<double>(x.rows());
  std::size_t k = 0;
  for (std::size_t li = 0; li < model.head_index(); ++li) {
    auto& bn = model.layers()[li].bn;
    if (!bn) continue;
    const auto& [mean, var] = stats[k++];
    bn->running_mean = (1.0 - bn->momentum) * bn->running_mean + bn->momentum * mean;
    bn->running_var = (1.0 - bn->momentum) * bn->running_var + bn->momentum * var * (n / (n - 1.0));
  }
  return trace;
}

class GradientSet {
 public:
  GradientSet() = default;
  GradientSet(std::vector<ParamId> ids, std::vector<std::vector<double>> values)
      : ids_(std::move(ids)), values_(std::move(values)) {}

  const std::vector<ParamId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

  std::span<const double> operator[](const ParamId& id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == id) return values_[i];
    throw std::out_of_range("gradient set has no such parameter");
  }
  std::span<const double> at(std::size_t i) const { return values_.at(i); }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    for (const auto& v : values_) flat.insert(flat.end(), v.begin(), v.end());
    return flat;
  }

 private:
  std::vector<ParamId> ids_;
  std::vector<std::vector<double>> values_;
};

/// Reverse pass from dL/dlogits to the requested parameters.
inline GradientSet backward(const Model& model, const ForwardTrace& trace, const Matrix& dlogits,
                            std::span<const ParamId> ids) {
  std::vector<Matrix> d_weight(model.depth()), d_bias(model.depth());
  std::vector<Vector> d_gamma(model.depth()), d_beta(model.depth());

  std::size_t lowest = model.depth();
  for (const auto& id : ids) lowest = std::min(lowest, id.layer);

  Matrix delta = dlogits;  // gradient w.r.t. the current layer's dense output
  for (std::size_t li = model.depth(); li-- > 0;) {
    const auto& layer = model.layers()[li];
    const auto& lt = trace.layers[li];
    if (li != model.head_index()) {
      // delta currently holds dL/d(post-ReLU); go through ReLU and BN.
      delta = (lt.output.array() > 0.0).select(delta, 0.0);
      if (layer.bn) {
        const auto& bn = *layer.bn;
        d_gamma[li] = (delta.array() * lt.normalized.array()).colwise().sum().transpose();
        d_beta[li] = delta.colwise().sum().transpose();
        Matrix dxhat = delta.array().rowwise() * bn.gamma.transpose().array();
        if (trace.mode == ForwardMode::BatchStats) {
          const double n = static_cast<double>(dxhat.rows());
          RowVector sum_dxhat = dxhat.colwise().sum();
          RowVector sum_dxhat_xhat = (dxhat.array() * lt.normalized.array()).colwise().sum();
          Matrix t = (n * dxhat).rowwise() - sum_dxhat;
          t -= (lt.normalized.array().rowwise() * sum_dxhat_xhat.array()).matrix();
          delta = (t.array().rowwise() * (lt.inv_std.transpose().array() / n)).matrix();
        } else {
          delta = dxhat.array().rowwise() * lt.inv_std.transpose().array();
        }
      }
    }
    d_weight[li] = delta.transpose() * lt.input;
    d_bias[li] = delta.colwise().sum().transpose();
    if (li == lowest) break;
    delta = delta * layer.weight;
  }

  std::vector<std::vector<double>> values;
  values.reserve(ids.size());
  for (const auto& id : ids) {
    auto copy = [](const auto& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
    switch (id.kind) {
      case ParamKind::Weight: values.push_back(copy(d_weight[id.layer])); break;
      case ParamKind::Bias: values.push_back(copy(d_bias[id.layer])); break;
      case ParamKind::Gamma: values.push_back(copy(d_gamma[id.layer])); break;
      case ParamKind::Beta: values.push_back(copy(d_beta[id.layer])); break;
    }
  }
  return {std::vector<ParamId>(ids.begin(), ids.end()), std::move(values)};
}

using LossFn = std::function<LossValue(const Matrix& logits)>;

struct GradResult {
  double loss = 0.0;
  GradientSet grads;
};

/// Loss of `loss(forward(model, inputs))` and its gradient over `ids`.
inline GradResult grad(const Model& model, const Matrix& inputs, ForwardMode mode, const LossFn& loss,
                       std::span<const ParamId> ids) {
  const ForwardTrace trace = forward_trace(model, inputs, mode);
  LossValue lv = loss(trace.logits);
  GradientSet g = backward(model, trace, lv.dlogits, ids);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto v = g.at(i);
    if (!std::isfinite(lv.value) || !std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
      throw NumericalError("non-finite loss gradient at parameter " + param_name(model, g.ids()[i]));
  }
  if (!std::isfinite(lv.value)) throw NumericalError("non-finite loss");
  return {lv.value, std::move(g)};
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainConfig {
  std::size_t epochs = 30;
  double lr = 0.1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Mini-batch SGD on cross-entropy over all parameters, BN in training mode.
/// A trailing batch with fewer than two rows is dropped.
inline Model pretrain(Model model, const Matrix& features, std::span<const int> labels, const PretrainConfig& cfg) {
  if (features.rows() == 0) throw std::invalid_argument("pretrain: empty dataset");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw std::invalid_argument("pretrain: label count mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= model.classes())
      throw std::out_of_range("pretrain: label " + std::to_string(y) + " out of range");
  if (cfg.batch_size < 2) throw ConfigError("pretrain: batch size must be at least 2");

  const auto ids = all_params(model);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0, b = 0; start + 2 <= order.size(); start += cfg.batch_size, ++b) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      if (n < 2) break;
      Matrix xb(static_cast<Eigen::Index>(n), features.cols());
      std::vector<int> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = features.row(order[start + i]);
        yb[i] = labels[static_cast<std::size_t>(order[start + i])];
      }
      const auto where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
      ForwardTrace trace;
      try {
        trace = forward_train(model, xb);
      } catch (const NumericalError& e) {
        throw NumericalError("pretrain: " + std::string(e.what()) + " at " + where);
      }
      const LossValue lv = cross_entropy_loss(trace.logits, yb);
      if (!std::isfinite(lv.value))
        throw NumericalError("pretrain: non-finite loss at " + where);
      const GradientSet g = backward(model, trace, lv.dlogits, ids);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto p = model.param(ids[i]);
        auto d = g.at(i);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg.lr * d[k];
      }
    }
  }
  return model;
}

inline double accuracy_of(const Model& model, const Matrix& features, std::span<const int> labels) {
  const Matrix p = forward(model, features, ForwardMode::SourceStats);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    if (argmax(p.row(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(p.rows());
}

/// Frozen deep copy of a pretrained model.
class SourceSnapshot {
 public:
  explicit SourceSnapshot(const Model& model) : model_(model) {}

  const Model& model() const { return model_; }
  Matrix forward(const Matrix& x) const { return stamp::forward(model_, x, ForwardMode::SourceStats); }

 private:
  Model model_;
};

inline SourceSnapshot snapshot_source(const Model& model) { return SourceSnapshot(model); }
inline SourceSnapshot snapshot_source(const SourceSnapshot& snap) { return snap; }

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text, shortest round-trip decimal per value.

namespace detail {

inline void write_doubles(std::ostream& os, std::span<const double> v) {
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto res = std::to_chars(buf, buf + sizeof buf, v[i]);
    if (i) os << ' ';
    os.write(buf, res.ptr - buf);
  }
  os << '\n';
}

inline std::vector<double> parse_doubles(const std::string& line, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  out.reserve(expected);
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    double v;
    auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw ParseError("checkpoint: bad number in " + what);
    out.push_back(v);
    p = res.ptr;
  }
  if (out.size() != expected)
    throw ParseError("checkpoint: " + what + " expected " + std::to_string(expected) + " values, got " +
                     std::to_string(out.size()));
  return out;
}

}  // namespace detail

inline void save_checkpoint(const Model& model, std::ostream& os) {
  const auto& a = model.arch();
  os << "stamp-checkpoint 1\n";
  os << "input_dim " << a.input_dim << "\nclasses " << a.classes << "\nhidden";
  for (auto h : a.hidden) os << ' ' << h;
  os << "\nbatch_norm " << (a.batch_norm ? 1 : 0) << '\n';
  os << "bn_momentum ";
  detail::write_doubles(os, std::array{a.bn_momentum});
  os << "bn_eps ";
  detail::write_doubles(os, std::array{a.bn_eps});
  for (const auto& id : all_params(model)) {
    const auto p = model.param(id);
    os << "param " << param_name(model, id) << ' ' << p.size() << '\n';
    detail::write_doubles(os, p);
  }
  for (std::size_t i = 0; i < model.head_index(); ++i) {
    const auto& bn = model.layers()[i].bn;
    if (!bn) continue;
    os << "running_mean hidden" << i << ' ' << bn->running_mean.size() << '\n';
    detail::write_doubles(os, {bn->running_mean.data(), static_cast<std::size_t>(bn->running_mean.size())});
    os << "running_var hidden" << i << ' ' << bn->running_var.size() << '\n';
    detail::write_doubles(os, {bn->running_var.data(), static_cast<std::size_t>(bn->running_var.size())});
  }
}

inline Model load_checkpoint(std::istream& is) {
  std::string line;
  auto next = [&](const std::string& what) {
    if (!std::getline(is, line)) throw ParseError("checkpoint: unexpected end of file before " + what);
    return line;
  };
  auto keyed = [&](const std::string& key) {
    std::istringstream ss(next(key));
    std::string k;
    ss >> k;
    if (k != key) throw ParseError("checkpoint: expected '" + key + "', got '" + k + "'");
    std::string rest;
    std::getline(ss, rest);
    return rest;
  };

  if (next("header") != "stamp-checkpoint 1") throw ParseError("checkpoint: bad header");
  ArchSpec arch;
  arch.input_dim = std::stoul(keyed("input_dim"));
  arch.classes = std::stoul(keyed("classes"));
  {
    std::istringstream ss(keyed("hidden"));
    arch.hidden.clear();
    for (std::size_t h; ss >> h;) arch.hidden.push_back(h);
  }
  arch.batch_norm = std::stoi(keyed("batch_norm")) != 0;
  arch.bn_momentum = detail::parse_doubles(keyed("bn_momentum"), 1, "bn_momentum")[0];
  arch.bn_eps = detail::parse_doubles(keyed("bn_eps"), 1, "bn_eps")[0];

  Model model = Model::init(arch, 0);
  for (const auto& id : all_params(model)) {
    const std::string name = param_name(model, id);
    std::istringstream ss(keyed("param"));
    std::string got;
    std::size_t n = 0;
    ss >> got >> n;
    auto p = model.param(id);
    if (got != name || n != p.size()) throw ParseError("checkpoint: expected parameter " + name);
    const auto v = detail::parse_doubles(next(name), p.size(), name);
    std::copy(v.begin(), v.end(), p.begin());
  }
  for (std::size_t i = 0; i < model.head_index(); ++i) {
    auto& bn = model.layers()[i].bn;
    if (!bn) continue;
    for (auto [key, target] : {std::pair{"running_mean", &bn->running_mean}, std::pair{"running_var", &bn->running_var}}) {
      std::istringstream ss(keyed(key));
      std::string layer;
      std::size_t n = 0;
      ss >> layer >> n;
      if (layer != "hidden" + std::to_string(i) || n != static_cast<std::size_t>(target->size()))
        throw ParseError(std::string("checkpoint: bad ") + key + " record for hidden" + std::to_string(i));
      const auto v = detail::parse_doubles(next(key), n, key);
      std::copy(v.begin(), v.end(), target->data());
      if (key == std::string("running_var") && (target->array() <= 0.0).any())
        throw ParseError("checkpoint: non-positive running variance");
    }
  }
  return model;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(model, os);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace stamp
