#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "xprospect/error.hpp"
#include "xprospect/optim.hpp"

namespace xprospect {
namespace {

ParamStore scalar(float v) {
  ParamStore p;
  p.add("theta", Tensor({1}, v));
  return p;
}

OptimizerConfig with_lr(OptimizerKind kind, double lr) {
  OptimizerConfig cfg;
  cfg.kind = kind;
  cfg.learning_rate = lr;
  return cfg;
}

float one_step(OptimizerKind kind, float g, double lr) {
  ParamStore p = scalar(0.0f);
  auto st = OptimizerState::zeros_like(p);
  optimizer_step(p, scalar(g), st, with_lr(kind, lr));
  return p.at("theta")[0];
}

TEST(Adam, FirstStepHandValue) {
  // m = 0.2, v = 0.004; m_hat = 2, v_hat = 4 -> -0.1 * 2 / (2 + 1e-8)
  EXPECT_NEAR(one_step(OptimizerKind::Adam, 2.0f, 0.1), -0.0999999995, 1e-7);
}

TEST(Nadam, FirstStepHandValue) {
  // m_hat = 0.1 / 0.19, g_hat = 10 -> -(0.9 * 0.5263158 + 1) * 0.1
  EXPECT_NEAR(one_step(OptimizerKind::Nadam, 1.0f, 0.1), -0.14736842, 1e-7);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  for (float g : {1e-3f, 0.5f, -3.0f, 250.0f}) {
    const float d = one_step(OptimizerKind::Adam, g, 0.01);
    EXPECT_LE(std::abs(d), 0.01 * (1 + 1e-6));
    EXPECT_GE(std::abs(d), 0.0099);
    EXPECT_EQ(std::signbit(d), !std::signbit(g));
  }
}

TEST(Optimizers, ZeroGradientLeavesParams) {
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::Nadam}) {
    ParamStore p = scalar(0.75f);
    auto st = OptimizerState::zeros_like(p);
    for (int i = 0; i < 5; ++i) optimizer_step(p, scalar(0.0f), st, with_lr(kind, 0.1));
    EXPECT_EQ(p.at("theta")[0], 0.75f);
    EXPECT_EQ(st.step, 5u);
  }
}

TEST(Optimizers, NadamWithoutMomentumIsAdam) {
  std::mt19937_64 rng(17);
  std::normal_distribution<float> n(0.0f, 1.0f);
  ParamStore a, b;
  a.add("w", Tensor({4, 3}, 0.3f));
  a.add("b", Tensor({3}, -0.2f));
  b = a;
  auto sa = OptimizerState::zeros_like(a), sb = OptimizerState::zeros_like(b);
  auto ca = with_lr(OptimizerKind::Adam, 0.01), cb = with_lr(OptimizerKind::Nadam, 0.01);
  ca.beta1 = cb.beta1 = 0.0;
  for (int step = 0; step < 100; ++step) {
    ParamStore g;
    for (const auto& [name, t] : a) {
      Tensor gt(t.shape());
      for (auto& f : gt.values()) f = n(rng);
      g.add(name, std::move(gt));
    }
    adam_step(a, g, sa, ca);
    nadam_step(b, g, sb, cb);
    ASSERT_EQ(a, b) << "step " << step;
  }
}

TEST(Optimizers, NonFiniteGradientNamesParameter) {
  ParamStore p;
  p.add("ok", Tensor({2}, 1.0f));
  p.add("bad", Tensor({2}, 1.0f));
  ParamStore g;
  g.add("ok", Tensor({2}, 0.5f));
  g.add("bad", Tensor({2}, std::numeric_limits<float>::quiet_NaN()));
  auto st = OptimizerState::zeros_like(p);
  const ParamStore before = p;
  try {
    adam_step(p, g, st, {});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.where(), "bad");
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 0u);
}

TEST(Optimizers, ConfigValidation) {
  OptimizerConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epsilon = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Ema, SingleUpdate) {
  EmaState ema(scalar(0.0f), {0.9, 10});
  ema.update(scalar(1.0f));
  EXPECT_NEAR(ema.shadow().at("theta")[0], 0.1, 1e-7);

  EmaState copy(scalar(0.0f), {0.0, 10});
  copy.update(scalar(0.625f));
  EXPECT_EQ(copy.shadow().at("theta")[0], 0.625f);
}

TEST(Ema, ConvergesToConstantParams) {
  EmaState ema(scalar(0.0f), {0.999, 1000});
  const ParamStore target = scalar(0.37f);
  double prev = 1.0;
  for (int i = 0; i < 20000; ++i) {
    ema.update(target);
    const double gap = std::abs(ema.shadow().at("theta")[0] - 0.37f);
    ASSERT_LE(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Ema, StaysInsideParameterRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-0.5f, 2.0f);
  EmaState ema(scalar(u(rng)), {0.95, 100});
  for (int i = 0; i < 2000; ++i) {
    ema.update(scalar(u(rng)));
    const float s = ema.shadow().at("theta")[0];
    ASSERT_GE(s, -0.5f);
    ASSERT_LE(s, 2.0f);
  }
}

TEST(Ema, ResetCopiesShadowAndKeepsMoments) {
  ParamStore p;
  p.add("w", Tensor({3}, std::vector<float>{0.1f, -0.7f, 2.5f}));
  EmaState ema(p, {0.99, 10});
  auto st = OptimizerState::zeros_like(p);
  for (int i = 0; i < 7; ++i) {
    optimizer_step(p, p, st, with_lr(OptimizerKind::Nadam, 0.05));
    ema.update(p);
  }
  const auto moments = st.m;
  ema_reset(p, ema);
  EXPECT_EQ(p, ema.shadow());
  ema_reset(p, ema);
  EXPECT_EQ(p, ema.shadow());
  EXPECT_EQ(st.step, 7u);
  EXPECT_EQ(st.m, moments);
}

TEST(Ema, LayoutMismatch) {
  EmaState ema(scalar(0.0f), {});
  ParamStore other;
  other.add("w", Tensor({1}));
  EXPECT_THROW(ema.update(other), InvalidInput);
  EXPECT_THROW(ema_reset(other, ema), InvalidInput);
  EXPECT_THROW(EmaState(scalar(0.0f), {1.0, 1}), ConfigError);
}

}  // namespace
}  // namespace xprospect
