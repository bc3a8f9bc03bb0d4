#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "cvnp/error.hpp"

namespace cvnp {

struct Root {
  std::complex<double> value;
  int multiplicity = 1;
};

struct RootSet {
  std::vector<Root> roots;     // nonzero roots, sorted by (real, imag)
  int zero_multiplicity = 0;   // power of u dividing the polynomial
  int iterations = 0;

  int total_multiplicity() const;
};

struct RootOptions {
  double residual_tol = 1e-12;  // |g(r)| <= tol * sum_k |a_k| |r|^k
  double cluster_tol = 1e-8;    // relative to max(1, |r|)
  int max_iterations = 5000;
};

class RootFindingError : public Error {
 public:
  RootFindingError(const std::string& what, RootSet partial)
      : Error(what), partial_(std::move(partial)) {}
  const RootSet& partial() const { return partial_; }

 private:
  RootSet partial_;
};

/// Horner evaluation; coefficients in ascending order of degree.
std::complex<double> poly_eval(const Eigen::VectorXcd& coeffs, std::complex<double> u);
Eigen::VectorXcd poly_derivative(const Eigen::VectorXcd& coeffs);

/// All roots of sum_k coeffs[k] u^k.
///
/// The u = 0 factor is split off exactly. The rest is solved by Aberth-Ehrlich
/// simultaneous iteration; approximations that cluster are merged and the
/// cluster centre is polished by Newton on the (m-1)-th derivative, which has
/// a simple root there, so multiple roots come back to full precision.
RootSet poly_roots(const Eigen::VectorXcd& coeffs, const RootOptions& opts = {});

}  // namespace cvnp
