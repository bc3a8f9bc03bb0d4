#include "cvnp/sparse_poly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cvnp/io.hpp"

namespace cvnp {

Rational parse_rational(const std::string& text) {
  try {
    const auto slash = text.find('/');
    if (slash == std::string::npos) return Rational(std::stoll(text));
    return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
  } catch (const std::logic_error&) {
    throw ContractError("cannot parse rational '" + text + "'");
  }
}

SparsePoly2::SparsePoly2(Terms terms) {
  for (const auto& [e, c] : terms) add(e.x, e.y, c);
}

void SparsePoly2::add(const Rational& xexp, int yexp, std::complex<double> c) {
  if (xexp < Rational(0) || yexp < 0) throw ContractError("SparsePoly2: negative exponent");
  const Exponent key{xexp, yexp};
  auto it = terms_.find(key);
  if (it == terms_.end()) {
    if (c != 0.0) terms_.emplace(key, c);
    return;
  }
  it->second += c;
  if (it->second == 0.0) terms_.erase(it);
}

std::complex<double> SparsePoly2::coeff(const Rational& xexp, int yexp) const {
  const auto it = terms_.find(Exponent{xexp, yexp});
  return it == terms_.end() ? std::complex<double>{} : it->second;
}

double SparsePoly2::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& [e, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

double SparsePoly2::sum_abs_coeff() const {
  double s = 0.0;
  for (const auto& [e, c] : terms_) s += std::abs(c);
  return s;
}

int SparsePoly2::min_y() const {
  int m = terms_.empty() ? 0 : terms_.begin()->first.y;
  for (const auto& [e, c] : terms_) m = std::min(m, e.y);
  return m;
}

int SparsePoly2::max_y() const {
  int m = 0;
  for (const auto& [e, c] : terms_) m = std::max(m, e.y);
  return m;
}

void SparsePoly2::prune(double rel_tol) {
  const double cut = rel_tol * max_abs_coeff();
  std::erase_if(terms_, [cut](const auto& kv) { return std::abs(kv.second) < cut; });
}

std::complex<double> SparsePoly2::operator()(std::complex<double> x,
                                             std::complex<double> y) const {
  std::complex<double> sum{};
  for (const auto& [e, c] : terms_) {
    const std::complex<double> xp =
        e.x == Rational(0) ? std::complex<double>(1.0)
        : e.x.is_integer() ? std::pow(x, static_cast<int>(e.x.num()))
                           : std::pow(x, e.x.to_double());
    sum += c * xp * std::pow(y, e.y);
  }
  return sum;
}

SparsePoly2 SparsePoly2::transposed() const {
  SparsePoly2 out;
  for (const auto& [e, c] : terms_) {
    if (!e.x.is_integer()) throw ContractError("transposed: fractional x exponent");
    out.add(Rational(e.y), static_cast<int>(e.x.num()), c);
  }
  return out;
}

SparsePoly2 operator*(const SparsePoly2& a, const SparsePoly2& b) {
  SparsePoly2 out;
  for (const auto& [ea, ca] : a.terms_)
    for (const auto& [eb, cb] : b.terms_) out.add(ea.x + eb.x, ea.y + eb.y, ca * cb);
  return out;
}

SparsePoly2 operator+(const SparsePoly2& a, const SparsePoly2& b) {
  SparsePoly2 out = a;
  for (const auto& [e, c] : b.terms_) out.add(e.x, e.y, c);
  return out;
}

SparsePoly2 parse_poly_text(std::istream& in) {
  SparsePoly2 f;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double re = 0.0, im = 0.0;
    std::string xexp;
    int yexp = 0;
    if (!(ls >> re >> im >> xexp >> yexp)) {
      throw ContractError("polynomial text: malformed line " + std::to_string(lineno));
    }
    f.add(parse_rational(xexp), yexp, {re, im});
  }
  return f;
}

std::string format_poly_text(const SparsePoly2& f) {
  std::string out;
  for (const auto& [e, c] : f.terms()) {
    out += format_double(c.real()) + " " + format_double(c.imag()) + " " +
           std::to_string(e.x.num()) + "/" + std::to_string(e.x.den()) + " " +
           std::to_string(e.y) + "\n";
  }
  return out;
}

}  // namespace cvnp
