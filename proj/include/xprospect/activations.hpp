#pragma once

#include <cmath>

namespace xprospect {

/// Canonical self-normalizing constants.
struct SeluConstants {
  static constexpr double lambda = 1.0507009873554805;
  static constexpr double alpha = 1.6732632423543772;
};

inline double selu(double x) {
  return x > 0.0 ? SeluConstants::lambda * x
                 : SeluConstants::lambda * SeluConstants::alpha * std::expm1(x);
}

inline float selu(float x) { return static_cast<float>(selu(static_cast<double>(x))); }

/// d selu / dx; x == 0 takes the left branch, matching the forward split.
inline double selu_grad(double x) {
  return x > 0.0 ? SeluConstants::lambda
                 : SeluConstants::lambda * SeluConstants::alpha * std::exp(x);
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace xprospect
