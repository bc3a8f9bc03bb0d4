#include "cvnp/puiseux.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cvnp {

namespace {

// Lower-left hull vertices, walked from the min-y end to the min-x end.
std::vector<Exponent> hull_vertices(const SparsePoly2& f) {
  std::map<int, Rational> min_x;
  for (const auto& [e, c] : f.terms()) {
    auto it = min_x.find(e.y);
    if (it == min_x.end() || e.x < it->second) min_x[e.y] = e.x;
  }
  Rational lowest = min_x.begin()->second;
  for (const auto& [y, x] : min_x) lowest = std::min(lowest, x);

  std::vector<Exponent> chain;
  for (const auto& [y, x] : min_x) {
    const Exponent pt{x, y};
    while (chain.size() >= 2) {
      const Exponent& o = chain[chain.size() - 2];
      const Exponent& a = chain.back();
      const Rational cross = Rational(a.y - o.y) * (pt.x - o.x) - (a.x - o.x) * Rational(pt.y - o.y);
      if (cross > Rational(0)) break;
      chain.pop_back();
    }
    chain.push_back(pt);
    if (x == lowest) break;
  }
  return chain;
}

std::complex<double> xpow(std::complex<double> x, const Rational& e) {
  if (e == Rational(0)) return 1.0;
  if (e.is_integer()) return std::pow(x, static_cast<int>(e.num()));
  return std::pow(x, e.to_double());
}

struct Expander {
  const PuiseuxOptions& opts;
  std::vector<PuiseuxBranch> out;

  void record(const std::vector<PuiseuxTerm>& prefix, int mult) {
    PuiseuxBranch b;
    b.terms = prefix;
    b.multiplicity = mult;
    b.orientation = prefix.empty() ? 0.0 : std::arg(prefix.front().coeff);
    out.push_back(std::move(b));
  }

  RootSet roots_of(const Eigen::VectorXcd& g, const std::vector<PuiseuxTerm>& prefix) {
    try {
      return poly_roots(g, opts.roots);
    } catch (const RootFindingError& err) {
      throw PuiseuxError(err.what(), prefix);
    }
  }

  // f was obtained by substituting the last term of `prefix` (a simple or
  // multiple root `mult` of the edge polynomial of `edge`).
  void refine(SparsePoly2 f, const PolygonEdge& edge, int mult, std::vector<PuiseuxTerm>& prefix,
              int depth) {
    f.remove_if([&](const Exponent& e) {
      return e.y < mult && Rational(edge.p) * e.x + Rational(edge.q * e.y) == edge.level;
    });
    if (depth >= opts.max_depth || f.empty()) {
      record(prefix, mult);
      return;
    }
    int covered = 0;
    for (const auto& e : newton_polygon(f)) {
      if (e.coslope <= edge.coslope || e.coslope > opts.threshold) continue;
      if (e.to.y > mult) continue;
      covered += e.y_span();
      expand_edge(f, e, prefix, depth + 1);
    }
    if (mult > covered) record(prefix, mult - covered);
  }

  void expand_edge(const SparsePoly2& f, const PolygonEdge& e, std::vector<PuiseuxTerm>& prefix,
                   int depth) {
    const RootSet rs = roots_of(edge_polynomial(f, e), prefix);
    for (const auto& r : rs.roots) {
      prefix.push_back({e.coslope, r.value});
      refine(shift_substitute(f, r.value, e.coslope), e, r.multiplicity, prefix, depth);
      prefix.pop_back();
    }
  }

  void top_level(const SparsePoly2& f) {
    if (const int my = f.min_y(); my > 0) record({}, my);
    std::vector<PuiseuxTerm> prefix;
    for (const auto& e : newton_polygon(f)) {
      if (e.coslope > opts.threshold) {
        const RootSet rs = roots_of(edge_polynomial(f, e), prefix);
        for (const auto& r : rs.roots) record({{e.coslope, r.value}}, r.multiplicity);
        continue;
      }
      expand_edge(f, e, prefix, 0);
    }
  }
};

}  // namespace

std::vector<PolygonEdge> newton_polygon(const SparsePoly2& f) {
  if (f.empty()) throw ContractError("newton_polygon: empty polynomial");
  const auto chain = hull_vertices(f);
  std::vector<PolygonEdge> edges;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    PolygonEdge e;
    e.from = chain[k];
    e.to = chain[k + 1];
    e.coslope = (e.from.x - e.to.x) / Rational(e.to.y - e.from.y);
    e.p = e.coslope.den();
    e.q = e.coslope.num();
    e.level = Rational(e.p) * e.from.x + Rational(e.q * e.from.y);
    edges.push_back(e);
  }
  std::reverse(edges.begin(), edges.end());
  return edges;
}

Eigen::VectorXcd edge_polynomial(const SparsePoly2& f, const PolygonEdge& e) {
  Eigen::VectorXcd g = Eigen::VectorXcd::Zero(e.to.y + 1);
  for (const auto& [ex, c] : f.terms()) {
    if (ex.y <= e.to.y && Rational(e.p) * ex.x + Rational(e.q * ex.y) == e.level) g[ex.y] += c;
  }
  return g;
}

SparsePoly2 shift_substitute(const SparsePoly2& f, std::complex<double> a, const Rational& theta) {
  if (theta <= Rational(0)) throw ContractError("shift_substitute: theta must be positive");
  if (a == 0.0) return f;
  SparsePoly2 out;
  for (const auto& [e, c] : f.terms()) {
    // c x^i (y + a x^theta)^j = sum_k C(j,k) c a^(j-k) x^(i + theta (j-k)) y^k
    double binom = 1.0;
    for (int k = e.y; k >= 0; --k) {
      const int shift = e.y - k;
      out.add(e.x + theta * Rational(shift), k, binom * c * std::pow(a, shift));
      binom = binom * k / (shift + 1);
    }
  }
  out.prune(1e-14);
  return out;
}

std::complex<double> PuiseuxBranch::operator()(std::complex<double> x) const {
  std::complex<double> y{};
  for (const auto& t : terms) y += t.coeff * xpow(x, t.exponent);
  return y;
}

std::vector<PuiseuxBranch> puiseux_expand(const SparsePoly2& f, const PuiseuxOptions& opts) {
  if (f.empty()) throw ContractError("puiseux_expand: zero polynomial");
  if (opts.threshold <= Rational(0)) throw ContractError("puiseux_expand: threshold must be > 0");
  Expander ex{opts, {}};
  ex.top_level(opts.swap_xy ? f.transposed() : f);
  return std::move(ex.out);
}

BranchSummary branch_summary(const std::vector<PuiseuxBranch>& branches) {
  BranchSummary s;
  s.num_branches = static_cast<int>(branches.size());
  s.degenerate = branches.empty();
  for (const auto& b : branches) {
    s.m += b.multiplicity;
    s.orientations.push_back(b.orientation);
    s.leading_exponents.push_back(b.terms.empty() ? Rational(0) : b.terms.front().exponent);
  }
  return s;
}

}  // namespace cvnp
