#include "xprospect/optim.hpp"

#include <cmath>

#include "xprospect/error.hpp"

namespace xprospect {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

OptimizerState OptimizerState::zeros_like(const ParamStore& params) {
  OptimizerState s;
  for (const auto& [name, t] : params) {
    s.m.add(name, Tensor(t.shape()));
    s.v.add(name, Tensor(t.shape()));
  }
  return s;
}

namespace {

void check_inputs(const ParamStore& params, const ParamStore& grads, const OptimizerState& state,
                  const OptimizerConfig& cfg) {
  cfg.validate();
  if (!params.same_layout(grads)) throw InvalidInput("gradient layout does not match parameters");
  if (!params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw InvalidInput("optimizer moments do not match parameters");
  }
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NonFiniteError("non-finite gradient", name);
  }
}

// Shared moment update; `direction` maps (m, g, t) to the numerator.
template <typename Direction>
void apply(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg,
           Direction direction) {
  check_inputs(params, grads, state, cfg);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double v_corr = 1.0 - std::pow(cfg.beta2, t);
  auto m_it = state.m.begin();
  auto v_it = state.v.begin();
  auto g_it = grads.begin();
  for (auto& [name, theta] : params) {
    float* m = m_it++->second.data();
    float* v = v_it++->second.data();
    const float* g = g_it++->second.data();
    float* p = theta.data();
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double v_hat = vi / v_corr;
      p[i] = static_cast<float>(p[i] - cfg.learning_rate * direction(mi, gi, t) / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace

void adam_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg) {
  apply(params, grads, state, cfg, [&](double m, double, double t) { return m / (1.0 - std::pow(cfg.beta1, t)); });
}

void nadam_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg) {
  apply(params, grads, state, cfg, [&](double m, double g, double t) {
    const double m_hat = m / (1.0 - std::pow(cfg.beta1, t + 1.0));
    const double g_hat = g / (1.0 - std::pow(cfg.beta1, t));
    return cfg.beta1 * m_hat + (1.0 - cfg.beta1) * g_hat;
  });
}

void optimizer_step(ParamStore& params, const ParamStore& grads, OptimizerState& state, const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::Nadam) {
    nadam_step(params, grads, state, cfg);
  } else {
    adam_step(params, grads, state, cfg);
  }
}

EmaState::EmaState(const ParamStore& initial, EmaConfig cfg) : cfg_(cfg), shadow_(initial) {
  if (!(cfg.decay >= 0.0 && cfg.decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  for (const auto& [name, t] : initial) accum_.emplace_back(t.values().begin(), t.values().end());
}

void EmaState::update(const ParamStore& params) {
  if (!params.same_layout(shadow_)) throw InvalidInput("EMA shadow does not match parameter layout");
  const double d = cfg_.decay;
  std::size_t k = 0;
  auto s_it = shadow_.begin();
  for (const auto& [name, p] : params) {
    auto& acc = accum_[k++];
    float* s = s_it++->second.data();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      acc[i] = d * acc[i] + (1.0 - d) * static_cast<double>(p[i]);
      s[i] = static_cast<float>(acc[i]);
    }
  }
}

void ema_update(EmaState& ema, const ParamStore& params) { ema.update(params); }

void ema_reset(ParamStore& params, const EmaState& ema) {
  if (!params.same_layout(ema.shadow())) throw InvalidInput("EMA shadow does not match parameter layout");
  params = ema.shadow();
}

}  // namespace xprospect
