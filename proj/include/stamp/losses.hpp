#pragma once

// Probability and entropy primitives plus the entropy-minimization loss family.
// Every loss acts on a logit matrix (one row per sample) and returns both its
// value and its exact gradient with respect to the logits, which the network
// back-propagates into parameter gradients.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stamp/common.hpp"

namespace stamp {

/// Entries below this are clamped before taking the log.
inline constexpr double kProbFloor = 1e-300;

inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  if (!logits.allFinite()) throw NumericalError("softmax: non-finite logit");
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Row-wise softmax.
inline Matrix softmax_rows(const Matrix& logits) {
  if (!logits.allFinite()) throw NumericalError("softmax: non-finite logit");
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    RowVector e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

namespace detail {

template <typename Row>
double entropy_unchecked(const Row& p) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c)
    if (p(c) > 0.0) h -= p(c) * std::log(std::max(p(c), kProbFloor));
  return h;
}

}  // namespace detail

/// Shannon entropy in nats, with 0 log 0 = 0.
inline double entropy(const Eigen::Ref<const Vector>& p) {
  if ((p.array() < 0.0).any()) throw std::invalid_argument("entropy: negative probability");
  if (std::abs(p.sum() - 1.0) > 1e-6) throw std::invalid_argument("entropy: probabilities do not sum to 1");
  return detail::entropy_unchecked(p);
}

inline Vector row_entropies(const Matrix& probs) {
  Vector h(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) h(i) = detail::entropy_unchecked(probs.row(i));
  return h;
}

enum class WeightStrategy { Plain, SelfWeighted, StaticWeighted, EataWeighted };

inline std::string_view to_string(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::Plain: return "plain";
    case WeightStrategy::SelfWeighted: return "self";
    case WeightStrategy::StaticWeighted: return "static";
    case WeightStrategy::EataWeighted: return "eata";
  }
  return "?";
}

inline WeightStrategy weight_strategy_from_string(std::string_view s) {
  if (s == "plain") return WeightStrategy::Plain;
  if (s == "self") return WeightStrategy::SelfWeighted;
  if (s == "static") return WeightStrategy::StaticWeighted;
  if (s == "eata") return WeightStrategy::EataWeighted;
  throw ConfigError("unknown weight strategy '" + std::string(s) + "'");
}

struct LossValue {
  double value = 0.0;
  Matrix dlogits;  // same shape as the logits
};

namespace detail {

// dH/dz_k = -p_k (log p_k + H) for H the entropy of softmax(z).
inline Matrix entropy_logit_grad(const Matrix& probs, const Vector& h, const Vector& dl_dh) {
  Matrix g(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(i, c);
      g(i, c) = -dl_dh(i) * p * (std::log(std::max(p, kProbFloor)) + h(i));
    }
  return g;
}

inline void check_rows(const Matrix& logits) {
  if (logits.rows() == 0) throw std::invalid_argument("entropy loss: empty logit matrix");
}

}  // namespace detail

/// Normalized entropy-weighted entropy: sum_i w_i H_i / sum_j w_j with
/// w_i = exp(-H_i). The weights take part in differentiation.
inline LossValue self_weighted_entropy_loss(const Matrix& logits) {
  detail::check_rows(logits);
  const Matrix p = softmax_rows(logits);
  const Vector h = row_entropies(p);
  if (!h.allFinite()) throw NumericalError("self-weighted loss: non-finite entropy");
  const Vector w = (-h.array()).exp();
  const double norm = w.sum();
  const double loss = w.dot(h) / norm;
  // d/dH_i [sum w H / sum w] with dw_i/dH_i = -w_i
  const Vector dl_dh = (w.array() * (1.0 - h.array() + loss) / norm).matrix();
  return {loss, detail::entropy_logit_grad(p, h, dl_dh)};
}

/// Plain (mean), static-weighted or EATA-weighted entropy. Only SelfWeighted
/// differentiates through its weights; it is forwarded to the function above.
inline LossValue weighted_variant_loss(const Matrix& logits, WeightStrategy strategy, double entropy_threshold = 0.0) {
  if (strategy == WeightStrategy::SelfWeighted) return self_weighted_entropy_loss(logits);
  detail::check_rows(logits);
  const Matrix p = softmax_rows(logits);
  const Vector h = row_entropies(p);
  if (!h.allFinite()) throw NumericalError("entropy loss: non-finite entropy");
  Vector w;
  switch (strategy) {
    case WeightStrategy::Plain: w = Vector::Ones(h.size()); break;
    case WeightStrategy::StaticWeighted: w = (-h.array()).exp(); break;
    case WeightStrategy::EataWeighted: w = (entropy_threshold - h.array()).exp(); break;
    case WeightStrategy::SelfWeighted: break;
  }
  const Vector coeff = w / w.sum();
  return {coeff.dot(h), detail::entropy_logit_grad(p, h, coeff)};
}

/// Mean cross-entropy against integer labels in [0, C).
inline LossValue cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw std::invalid_argument("cross entropy: label count mismatch");
  const Matrix p = softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  LossValue out{0.0, p / n};
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw std::out_of_range("cross entropy: label out of range");
    out.value -= std::log(std::max(p(i, y), kProbFloor)) / n;
    out.dlogits(i, y) -= 1.0 / n;
  }
  return out;
}

}  // namespace stamp
