#include "cvnp/roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cvnp {

int RootSet::total_multiplicity() const {
  int m = zero_multiplicity;
  for (const auto& r : roots) m += r.multiplicity;
  return m;
}

std::complex<double> poly_eval(const Eigen::VectorXcd& coeffs, std::complex<double> u) {
  std::complex<double> acc{};
  for (Eigen::Index k = coeffs.size() - 1; k >= 0; --k) acc = acc * u + coeffs[k];
  return acc;
}

Eigen::VectorXcd poly_derivative(const Eigen::VectorXcd& coeffs) {
  if (coeffs.size() <= 1) return Eigen::VectorXcd::Zero(1);
  Eigen::VectorXcd d(coeffs.size() - 1);
  for (Eigen::Index k = 1; k < coeffs.size(); ++k) d[k - 1] = coeffs[k] * static_cast<double>(k);
  return d;
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// sum_k |a_k| |u|^k: the scale against which |g(u)| is judged.
double eval_scale(const Eigen::VectorXcd& coeffs, std::complex<double> u) {
  const double r = std::abs(u);
  double acc = 0.0;
  for (Eigen::Index k = coeffs.size() - 1; k >= 0; --k) acc = acc * r + std::abs(coeffs[k]);
  return acc;
}

std::vector<std::complex<double>> aberth(const Eigen::VectorXcd& monic, int max_iter,
                                         int& iterations) {
  const auto n = static_cast<int>(monic.size() - 1);
  const Eigen::VectorXcd deriv = poly_derivative(monic);
  const double radius = std::pow(std::abs(monic[0]), 1.0 / n);
  std::vector<std::complex<double>> z(n);
  for (int k = 0; k < n; ++k) {
    z[k] = std::polar(radius, 2.0 * std::numbers::pi * k / n + 0.7 / n);
  }
  std::vector<bool> done(n, false);
  iterations = 0;
  for (int it = 0; it < max_iter; ++it) {
    iterations = it + 1;
    bool all_done = true;
    for (int i = 0; i < n; ++i) {
      if (done[i]) continue;
      const std::complex<double> p = poly_eval(monic, z[i]);
      if (std::abs(p) <= 4.0 * kEps * eval_scale(monic, z[i])) {
        done[i] = true;
        continue;
      }
      all_done = false;
      const std::complex<double> dp = poly_eval(deriv, z[i]);
      std::complex<double> repulsion{};
      for (int j = 0; j < n; ++j) {
        if (j != i) {
          const auto diff = z[i] - z[j];
          if (diff != 0.0) repulsion += 1.0 / diff;
        }
      }
      std::complex<double> step;
      if (dp == 0.0) {
        step = std::polar(1e-8 * std::max(1.0, std::abs(z[i])), 1.0 + i);
      } else {
        const std::complex<double> ratio = p / dp;
        const std::complex<double> denom = 1.0 - ratio * repulsion;
        step = denom == 0.0 ? ratio : ratio / denom;
      }
      z[i] -= step;
      if (std::abs(step) <= 2.0 * kEps * std::max(1.0, std::abs(z[i]))) done[i] = true;
    }
    if (all_done) break;
  }
  return z;
}

// Newton on `g`, keeping the best iterate by residual.
std::complex<double> newton_polish(const Eigen::VectorXcd& g, std::complex<double> z, int steps) {
  const Eigen::VectorXcd dg = poly_derivative(g);
  std::complex<double> best = z;
  double best_res = std::abs(poly_eval(g, z));
  for (int s = 0; s < steps && best_res > 0.0; ++s) {
    const auto d = poly_eval(dg, z);
    if (d == 0.0) break;
    z -= poly_eval(g, z) / d;
    const double res = std::abs(poly_eval(g, z));
    if (res < best_res) {
      best_res = res;
      best = z;
    } else {
      break;
    }
  }
  return best;
}

std::vector<std::vector<int>> single_linkage(const std::vector<std::complex<double>>& z,
                                             const std::vector<int>& members, double rel_tol) {
  std::vector<int> group(members.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < members.size(); ++s) {
    if (group[s] >= 0) continue;
    group[s] = next;
    std::vector<std::size_t> stack{s};
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (group[b] >= 0) continue;
        const auto za = z[members[a]], zb = z[members[b]];
        const double tol = rel_tol * std::max({1.0, std::abs(za), std::abs(zb)});
        if (std::abs(za - zb) <= tol) {
          group[b] = next;
          stack.push_back(b);
        }
      }
    }
    ++next;
  }
  std::vector<std::vector<int>> out(next);
  for (std::size_t s = 0; s < members.size(); ++s) out[group[s]].push_back(members[s]);
  return out;
}

// True when g, g', ..., g^(m-1) all vanish at c to working accuracy.
bool is_multiple_root(const Eigen::VectorXcd& g, std::complex<double> c, int m) {
  Eigen::VectorXcd d = g;
  for (int j = 0; j < m; ++j) {
    if (std::abs(poly_eval(d, c)) > 1e-7 * eval_scale(d, c)) return false;
    d = poly_derivative(d);
  }
  return true;
}

std::complex<double> polish_cluster(const Eigen::VectorXcd& g, std::complex<double> c, int m) {
  Eigen::VectorXcd d = g;
  for (int j = 0; j + 1 < m; ++j) d = poly_derivative(d);
  return newton_polish(d, c, 30);
}

std::complex<double> mean_of(const std::vector<std::complex<double>>& z,
                             const std::vector<int>& idx) {
  std::complex<double> s{};
  for (const int i : idx) s += z[i];
  return s / static_cast<double>(idx.size());
}

}  // namespace

RootSet poly_roots(const Eigen::VectorXcd& coeffs, const RootOptions& opts) {
  Eigen::Index hi = coeffs.size() - 1;
  while (hi >= 0 && coeffs[hi] == 0.0) --hi;
  if (hi < 0) throw ContractError("poly_roots: zero polynomial");
  Eigen::Index lo = 0;
  while (coeffs[lo] == 0.0) ++lo;

  RootSet out;
  out.zero_multiplicity = static_cast<int>(lo);
  const auto n = static_cast<int>(hi - lo);
  if (n == 0) return out;

  const Eigen::VectorXcd g = coeffs.segment(lo, n + 1);
  if (n == 1) {
    out.roots.push_back({-g[0] / g[1], 1});
    return out;
  }

  const Eigen::VectorXcd monic = g / g[n];
  std::vector<std::complex<double>> z = aberth(monic, opts.max_iterations, out.iterations);

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  for (const auto& group : single_linkage(z, all, 1e-3)) {
    const int m = static_cast<int>(group.size());
    if (m == 1) {
      out.roots.push_back({newton_polish(monic, z[group[0]], 3), 1});
      continue;
    }
    const auto centre = polish_cluster(monic, mean_of(z, group), m);
    if (is_multiple_root(monic, centre, m)) {
      out.roots.push_back({centre, m});
      continue;
    }
    for (const auto& sub : single_linkage(z, group, opts.cluster_tol)) {
      const int ms = static_cast<int>(sub.size());
      const auto c = ms == 1 ? newton_polish(monic, z[sub[0]], 3)
                             : polish_cluster(monic, mean_of(z, sub), ms);
      out.roots.push_back({c, ms});
    }
  }

  std::sort(out.roots.begin(), out.roots.end(), [](const Root& a, const Root& b) {
    if (a.value.real() != b.value.real()) return a.value.real() < b.value.real();
    return a.value.imag() < b.value.imag();
  });

  for (const auto& r : out.roots) {
    if (std::abs(poly_eval(monic, r.value)) > opts.residual_tol * eval_scale(monic, r.value)) {
      throw RootFindingError("poly_roots: residual above tolerance (no convergence)", out);
    }
  }
  return out;
}

}  // namespace cvnp
