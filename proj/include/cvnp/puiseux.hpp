#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "cvnp/roots.hpp"
#include "cvnp/sparse_poly.hpp"

namespace cvnp {

/// Compact edge of the Newton polygon. `from` has the larger x exponent.
/// Every support point on the edge satisfies p*i + q*j == level.
struct PolygonEdge {
  Exponent from;
  Exponent to;
  std::int64_t p = 1;
  std::int64_t q = 1;
  Rational level;
  Rational coslope;  // q/p

  int y_span() const { return to.y - from.y; }
};

/// Lower-left hull edges of supp(f) + R_+^2 with negative slope, ordered by
/// increasing coslope.
std::vector<PolygonEdge> newton_polygon(const SparsePoly2& f);

/// sum a_ij u^j over the support points lying on the edge line, indexed by j.
Eigen::VectorXcd edge_polynomial(const SparsePoly2& f, const PolygonEdge& e);

/// f(x, y + a x^theta), merged and pruned at 1e-14 relative.
SparsePoly2 shift_substitute(const SparsePoly2& f, std::complex<double> a, const Rational& theta);

struct PuiseuxTerm {
  Rational exponent;
  std::complex<double> coeff;
};

struct PuiseuxBranch {
  std::vector<PuiseuxTerm> terms;  // strictly increasing exponents; empty for y = 0
  int multiplicity = 1;
  double orientation = 0.0;        // arg of the leading coefficient

  Rational last_exponent() const { return terms.empty() ? Rational(0) : terms.back().exponent; }
  /// Truncated series at x, principal branch of the fractional powers.
  std::complex<double> operator()(std::complex<double> x) const;
};

struct PuiseuxOptions {
  Rational threshold{4};
  int max_depth = 16;
  bool swap_xy = false;  // expand x(y) instead of y(x)
  RootOptions roots;
};

class PuiseuxError : public Error {
 public:
  PuiseuxError(const std::string& what, std::vector<PuiseuxTerm> prefix)
      : Error(what), prefix_(std::move(prefix)) {}
  const std::vector<PuiseuxTerm>& prefix() const { return prefix_; }

 private:
  std::vector<PuiseuxTerm> prefix_;
};

/// Newton-Puiseux expansion of the branches of f(x, y) = 0 through the origin,
/// each truncated once the next exponent would exceed the threshold.
std::vector<PuiseuxBranch> puiseux_expand(const SparsePoly2& f, const PuiseuxOptions& opts = {});

struct BranchSummary {
  int num_branches = 0;
  int m = 0;
  std::vector<double> orientations;
  std::vector<Rational> leading_exponents;
  bool degenerate = false;
};

BranchSummary branch_summary(const std::vector<PuiseuxBranch>& branches);

}  // namespace cvnp
