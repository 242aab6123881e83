#pragma once

// Test-only reference implementations. These deliberately avoid the library's
// matrix code so they can serve as independent checks.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "stamp/diffnet.hpp"
#include "stamp/losses.hpp"

namespace oracle {

using stamp::Matrix;
using stamp::Model;

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  for (double& v : e) v /= s;
  return e;
}

/// Scalar-loop forward pass returning logits.
inline std::vector<std::vector<double>> logits(const Model& model, const Matrix& x, bool batch_stats) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<double>> act(n);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k) act[i].push_back(x(static_cast<Eigen::Index>(i), k));

  for (std::size_t li = 0; li < model.depth(); ++li) {
    const auto& layer = model.layers()[li];
    const std::size_t out = static_cast<std::size_t>(layer.weight.rows());
    std::vector<std::vector<double>> z(n, std::vector<double>(out));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < out; ++o) {
        double s = layer.bias(static_cast<Eigen::Index>(o));
        for (std::size_t k = 0; k < act[i].size(); ++k)
          s += layer.weight(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k)) * act[i][k];
        z[i][o] = s;
      }
    if (li + 1 == model.depth()) return z;
    if (layer.bn) {
      const auto& bn = *layer.bn;
      for (std::size_t o = 0; o < out; ++o) {
        double mean = bn.running_mean(static_cast<Eigen::Index>(o));
        double var = bn.running_var(static_cast<Eigen::Index>(o));
        if (batch_stats) {
          mean = 0.0;
          for (std::size_t i = 0; i < n; ++i) mean += z[i][o];
          mean /= static_cast<double>(n);
          var = 0.0;
          for (std::size_t i = 0; i < n; ++i) var += (z[i][o] - mean) * (z[i][o] - mean);
          var /= static_cast<double>(n);
        }
        const double g = bn.gamma(static_cast<Eigen::Index>(o)), b = bn.beta(static_cast<Eigen::Index>(o));
        for (std::size_t i = 0; i < n; ++i) z[i][o] = g * (z[i][o] - mean) / std::sqrt(var + bn.eps) + b;
      }
    }
    for (auto& row : z)
      for (double& v : row) v = std::max(v, 0.0);
    act = std::move(z);
  }
  return act;
}

enum class Weighting { Plain, Self, Eata, CrossEntropy };

/// Scalar value of the entropy-family losses on the given logits.
inline double loss_value(const std::vector<std::vector<double>>& z, Weighting w, double threshold = 0.0,
                         const std::vector<int>& labels = {}) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto p = softmax(z[i]);
    const double h = entropy(p);
    switch (w) {
      case Weighting::Plain: num += h, den += 1.0; break;
      case Weighting::Self: num += std::exp(-h) * h, den += std::exp(-h); break;
      case Weighting::Eata: num += std::exp(threshold - h) * h, den += std::exp(threshold - h); break;
      case Weighting::CrossEntropy: num -= std::log(p[static_cast<std::size_t>(labels[i])]), den += 1.0; break;
    }
  }
  return num / den;
}

inline std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.emplace_back();
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows.back().push_back(m(i, j));
  }
  return rows;
}

/// Per-row weights exp(-H) (Self) or exp(threshold - H) (Eata).
inline std::vector<double> row_weights(const std::vector<std::vector<double>>& z, Weighting w, double threshold = 0.0) {
  std::vector<double> out;
  for (const auto& row : z) {
    const double h = entropy(softmax(row));
    out.push_back(w == Weighting::Eata ? std::exp(threshold - h) : std::exp(-h));
  }
  return out;
}

/// Weighted mean entropy with the weights held fixed.
inline double weighted_entropy(const std::vector<std::vector<double>>& z, const std::vector<double>& weights) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    num += weights[i] * entropy(softmax(z[i]));
    den += weights[i];
  }
  return num / den;
}

/// Central finite differences of `f` over every entry of the given parameters.
template <typename F>
std::vector<double> finite_difference(Model& model, const std::vector<stamp::ParamId>& ids, F&& f,
                                      double step = 1e-5) {
  std::vector<double> g;
  for (const auto& id : ids) {
    auto p = model.param(id);
    for (double& v : p) {
      const double orig = v;
      v = orig + step;
      const double up = f(model);
      v = orig - step;
      const double down = f(model);
      v = orig;
      g.push_back((up - down) / (2.0 * step));
    }
  }
  return g;
}

/// Pairwise AUROC with ties counted as one half.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Straightforward memory bank used to cross-check eviction decisions.
struct ReferenceBank {
  struct Item {
    int label;
    std::uint64_t tick;
  };
  std::size_t capacity;
  std::vector<double> xi;
  std::vector<Item> items;
  std::uint64_t tick = 0;

  ReferenceBank(std::size_t cap, std::size_t classes) : capacity(cap), xi(classes, 0.0) {}

  /// Returns the tick of the evicted item, or -1.
  long long insert(int label) {
    long long evicted = -1;
    if (items.size() == capacity) {
      int best = -1;
      for (std::size_t c = 0; c < xi.size(); ++c) {
        bool present = false;
        for (const auto& it : items) present |= it.label == static_cast<int>(c);
        if (present && (best < 0 || xi[c] > xi[static_cast<std::size_t>(best)])) best = static_cast<int>(c);
      }
      std::size_t victim = items.size();
      for (std::size_t k = 0; k < items.size(); ++k)
        if (items[k].label == best && (victim == items.size() || items[k].tick < items[victim].tick)) victim = k;
      evicted = static_cast<long long>(items[victim].tick);
      items.erase(items.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    items.push_back({label, tick++});
    return evicted;
  }

  void update(double beta) {
    for (std::size_t c = 0; c < xi.size(); ++c) {
      double count = 0.0;
      for (const auto& it : items) count += it.label == static_cast<int>(c) ? 1.0 : 0.0;
      xi[c] = (1.0 - beta) * xi[c] + beta * count;
    }
  }
};

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    norm += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-6);
}

}  // namespace oracle
