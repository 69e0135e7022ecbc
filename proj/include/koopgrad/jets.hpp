// SPDX-License-Identifier: Apache-2.0
//
// Truncated second-order jet over two seeds: value, d/dx, a directional
// derivative d/dp, and the second-order slots d2/dx2 and d2/dxdp. Enough to
// push a scalar MLP through and read off the weight w = mu + x mu_x and its
// directional tangent in a single evaluation.
#pragma once

#include <cmath>

namespace koopgrad {

struct Jet2 {
  double v = 0.0;    // value
  double dx = 0.0;   // d/dx
  double dp = 0.0;   // directional d/dp
  double dxx = 0.0;  // d2/dx2
  double dxp = 0.0;  // d2/(dx dp)

  static Jet2 constant(double c) { return Jet2{c, 0, 0, 0, 0}; }
  static Jet2 variable_x(double x) { return Jet2{x, 1, 0, 0, 0}; }
  static Jet2 param(double value, double direction) { return Jet2{value, 0, direction, 0, 0}; }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  return Jet2{a.v + b.v, a.dx + b.dx, a.dp + b.dp, a.dxx + b.dxx, a.dxp + b.dxp};
}

inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  return Jet2{a.v - b.v, a.dx - b.dx, a.dp - b.dp, a.dxx - b.dxx, a.dxp - b.dxp};
}

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  return Jet2{a.v * b.v,
              a.dx * b.v + a.v * b.dx,
              a.dp * b.v + a.v * b.dp,
              a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx,
              a.dxp * b.v + a.dx * b.dp + a.dp * b.dx + a.v * b.dxp};
}

inline Jet2 operator*(double c, const Jet2& a) {
  return Jet2{c * a.v, c * a.dx, c * a.dp, c * a.dxx, c * a.dxp};
}

/// Chain rule through a scalar function given f(v), f'(v), f''(v).
inline Jet2 apply_unary(const Jet2& a, double f, double f1, double f2) {
  return Jet2{f,
              f1 * a.dx,
              f1 * a.dp,
              f2 * a.dx * a.dx + f1 * a.dxx,
              f2 * a.dx * a.dp + f1 * a.dxp};
}

inline Jet2 leaky_relu(const Jet2& a, double slope) {
  const double s = a.v > 0.0 ? 1.0 : slope;
  return apply_unary(a, s * a.v, s, 0.0);
}

inline Jet2 logistic(const Jet2& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.v));
  return apply_unary(a, s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s));
}

}  // namespace koopgrad
