#pragma once

#include <complex>
#include <istream>
#include <map>
#include <string>

#include "cvnp/rational.hpp"

namespace cvnp {

/// Monomial x^i y^j with rational i >= 0 and integer j >= 0.
struct Exponent {
  Rational x;
  int y = 0;

  friend bool operator==(const Exponent&, const Exponent&) = default;
  friend auto operator<=>(const Exponent& a, const Exponent& b) {
    if (auto c = a.x <=> b.x; c != 0) return c;
    return a.y <=> b.y;
  }
};

/// Sparse bivariate polynomial over C with exact exponents. No stored
/// coefficient is exactly zero.
class SparsePoly2 {
 public:
  using Terms = std::map<Exponent, std::complex<double>>;

  SparsePoly2() = default;
  explicit SparsePoly2(Terms terms);

  /// Adds c to the coefficient of x^i y^j, erasing it if the sum is 0.
  void add(const Rational& xexp, int yexp, std::complex<double> c);

  const Terms& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }
  std::complex<double> coeff(const Rational& xexp, int yexp) const;

  double max_abs_coeff() const;
  double sum_abs_coeff() const;
  int min_y() const;
  int max_y() const;

  /// Drops coefficients with |c| < rel_tol * max|c|.
  void prune(double rel_tol);
  template <class Pred>
  void remove_if(Pred pred) {
    std::erase_if(terms_, [&](const auto& kv) { return pred(kv.first); });
  }

  /// Evaluates with principal branches of the fractional x powers.
  std::complex<double> operator()(std::complex<double> x, std::complex<double> y) const;

  /// Swaps the roles of x and y. Requires integer x exponents.
  SparsePoly2 transposed() const;

  friend SparsePoly2 operator*(const SparsePoly2& a, const SparsePoly2& b);
  friend SparsePoly2 operator+(const SparsePoly2& a, const SparsePoly2& b);

 private:
  Terms terms_;
};

/// Text format: one term per line, "coeff_re coeff_im xnum/xden yexp".
/// Blank lines and lines starting with '#' are ignored.
SparsePoly2 parse_poly_text(std::istream& in);
std::string format_poly_text(const SparsePoly2& f);

}  // namespace cvnp
