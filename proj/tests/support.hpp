#pragma once

#include <cmath>
#include <complex>
#include <functional>

#include <Eigen/Dense>

#include "cvnp/ccore.hpp"
#include "cvnp/rng.hpp"

namespace cvnp::test {

inline ModelParams random_params(Rng& rng, int hidden, int classes, double scale = 1.0) {
  ModelParams p = ModelParams::zeros(hidden, classes);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal(0.0, scale);
  };
  fill(p.w1_re);
  fill(p.w1_im);
  fill(p.w2_re);
  fill(p.w2_im);
  for (Eigen::Index k = 0; k < p.b1.size(); ++k) p.b1[k] = rng.normal(0.0, 0.5 * scale);
  return p;
}

inline CVec4 random_point(Rng& rng, double scale = 1.0) {
  return {rng.normal(0.0, scale), rng.normal(0.0, scale), rng.normal(0.0, scale),
          rng.normal(0.0, scale)};
}

/// Central differences of a scalar function of a real vector.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Componentwise relative agreement; entries far below the vector scale are
/// compared against that scale instead.
inline double gradient_mismatch(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double floor = 1e-3 * std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

/// True when no first-layer unit sits within `gap` of its modReLU kink at x.
inline bool away_from_kinks(const ModelParams& p, const CVec4& x, double gap) {
  return forward(p, x).hidden_margins.cwiseAbs().minCoeff() > gap;
}

}  // namespace cvnp::test

#include <numbers>

#include "cvnp/sparse_poly.hpp"

namespace cvnp::test {

/// Product of two or three random factors of the forms
///   y - c1 x - c2 x^2,  y^2 - c x^k (k odd),  y^3 - c x^k (3 does not divide k),  (y - c x)^2.
inline SparsePoly2 planted_branch_product(Rng& rng) {
  const auto coeff = [&] { return std::polar(rng.uniform(0.5, 2.0), rng.uniform(0.0, 2.0 * std::numbers::pi)); };
  SparsePoly2 f;
  f.add(Rational(0), 0, 1.0);
  const int n_factors = 2 + static_cast<int>(rng.index(2));
  for (int k = 0; k < n_factors; ++k) {
    SparsePoly2 g;
    switch (rng.index(4)) {
      case 0:
        g.add(Rational(0), 1, 1.0);
        g.add(Rational(1), 0, -coeff());
        g.add(Rational(2), 0, -coeff());
        break;
      case 1:
        g.add(Rational(0), 2, 1.0);
        g.add(Rational(rng.index(2) == 0 ? 1 : 3), 0, -coeff());
        break;
      case 2: {
        static const int powers[] = {1, 2, 4};
        g.add(Rational(0), 3, 1.0);
        g.add(Rational(powers[rng.index(3)]), 0, -coeff());
        break;
      }
      default: {
        SparsePoly2 h;
        h.add(Rational(0), 1, 1.0);
        h.add(Rational(1), 0, -coeff());
        g = h * h;
      }
    }
    f = f * g;
  }
  return f;
}

}  // namespace cvnp::test
