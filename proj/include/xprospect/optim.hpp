#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xprospect/params.hpp"

namespace xprospect {

enum class OptimizerKind { Adam, Nadam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// First and second moments per parameter plus the global step count.
struct OptimizerState {
  ParamStore m;
  ParamStore v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const ParamStore& params);
};

/// Bias-corrected Adam:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Throws NonFiniteError naming the parameter before touching anything if a
/// gradient is NaN or infinite.
void adam_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg);

/// Nadam without a momentum schedule. Moments as in Adam, then
///   m_hat = m / (1 - b1^(t+1)),  g_hat = g / (1 - b1^t)
///   theta -= lr * (b1 m_hat + (1 - b1) g_hat) / (sqrt(v / (1 - b2^t)) + eps)
void nadam_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg);

/// Dispatches on cfg.kind.
void optimizer_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg);

struct EmaConfig {
  double decay = 0.999;
  std::uint64_t reset_interval = 1000;
};

/// Exponential moving average of the parameters, accumulated in double.
/// `shadow()` is its float image.
class EmaState {
 public:
  EmaState() = default;
  EmaState(const ParamStore& initial, EmaConfig cfg);

  const ParamStore& shadow() const { return shadow_; }
  const EmaConfig& config() const { return cfg_; }

  /// shadow = decay * shadow + (1 - decay) * params.
  void update(const ParamStore& params);

 private:
  EmaConfig cfg_;
  ParamStore shadow_;
  std::vector<std::vector<double>> accum_;
};

void ema_update(EmaState& ema, const ParamStore& params);

/// Overwrites params with the shadow weights. Optimizer moments and the
/// step counter are left alone.
void ema_reset(ParamStore& params, const EmaState& ema);

}  // namespace xprospect
