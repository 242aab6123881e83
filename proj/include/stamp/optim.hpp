#pragma once

// Step-size schedule, plain SGD and sharpness-aware minimization over an
// abstract parameter vector.

#include <cmath>
#include <concepts>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "stamp/common.hpp"
#include "stamp/diffnet.hpp"

namespace stamp {

struct ScheduleState {
  double initial_lr = 0.1;
  std::size_t horizon = 150;  // T
  std::size_t step = 0;       // t, optimization steps taken
};

/// Cosine decay from initial_lr to zero at t = T; clamped to zero afterwards.
inline double cosine_lr(const ScheduleState& s) {
  if (s.horizon == 0) throw ConfigError("schedule horizon must be at least 1");
  if (s.step >= s.horizon) return 0.0;
  const double progress = static_cast<double>(s.step) / static_cast<double>(s.horizon);
  return 0.5 * s.initial_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

struct SamConfig {
  double rho = 0.05;
  double norm_floor = 1e-12;
};

struct Evaluation {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Anything whose trainable parameters can be read and written as one flat vector.
template <typename T>
concept FlatParameters = requires(T& t, const T& ct, std::span<const double> v) {
  { ct.read() } -> std::convertible_to<std::vector<double>>;
  t.write(v);
};

template <typename T>
using Objective = std::function<Evaluation(const T&)>;

namespace detail {

inline void require_finite(const std::vector<double>& g, const char* what) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) throw NumericalError(std::string(what) + ": non-finite gradient entry " + std::to_string(i));
}

inline void step(std::vector<double>& theta, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
}

}  // namespace detail

/// theta <- theta - lr * grad. Returns the loss before the step.
template <FlatParameters T>
double sgd_update(T& target, const Objective<T>& objective, double lr) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  const Evaluation e = objective(target);
  detail::require_finite(e.gradient, "sgd");
  std::vector<double> theta = target.read();
  detail::step(theta, e.gradient, lr);
  target.write(theta);
  return e.loss;
}

/// Two-pass SAM: ascend to theta + rho*g/|g|, re-evaluate the full objective
/// there, then descend from theta with that gradient. Below the norm floor
/// the ascent is skipped and a plain gradient step is taken.
template <FlatParameters T>
double sam_update(T& target, const Objective<T>& objective, const SamConfig& sam, double lr) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (sam.rho < 0.0) throw ConfigError("SAM radius must be non-negative");
  const Evaluation first = objective(target);
  detail::require_finite(first.gradient, "sam first pass");
  std::vector<double> theta = target.read();
  double norm = 0.0;
  for (double g : first.gradient) norm += g * g;
  norm = std::sqrt(norm);
  if (norm <= sam.norm_floor) {
    detail::step(theta, first.gradient, lr);
    target.write(theta);
    return first.loss;
  }
  std::vector<double> perturbed = theta;
  const double scale = sam.rho / norm;
  for (std::size_t i = 0; i < theta.size(); ++i) perturbed[i] += scale * first.gradient[i];
  target.write(perturbed);
  const Evaluation second = objective(target);
  target.write(theta);
  detail::require_finite(second.gradient, "sam second pass");
  detail::step(theta, second.gradient, lr);
  target.write(theta);
  return first.loss;
}

/// A model restricted to a subset of its parameters.
class ParamSubset {
 public:
  ParamSubset(Model& model, std::vector<ParamId> ids) : model_(&model), ids_(std::move(ids)) {}

  std::vector<double> read() const { return read_params(*model_, ids_); }
  void write(std::span<const double> v) { write_params(*model_, ids_, v); }

  const Model& model() const { return *model_; }
  const std::vector<ParamId>& ids() const { return ids_; }

 private:
  Model* model_;
  std::vector<ParamId> ids_;
};

/// Objective that forwards `inputs` through the model and applies `loss`.
inline Objective<ParamSubset> network_objective(Matrix inputs, ForwardMode mode, LossFn loss) {
  return [inputs = std::move(inputs), mode, loss = std::move(loss)](const ParamSubset& p) {
    GradResult r = grad(p.model(), inputs, mode, loss, p.ids());
    return Evaluation{r.loss, r.grads.flatten()};
  };
}

}  // namespace stamp
