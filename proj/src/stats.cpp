#include "cvnp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cvnp/error.hpp"

namespace cvnp {

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(lbeta + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0) || !(nu > 0.0)) throw ContractError("t_quantile: bad arguments");
  if (p == 0.5) return 0.0;
  const double tail = 2.0 * std::min(p, 1.0 - p);
  // P(|T| > t) = I_{nu/(nu+t^2)}(nu/2, 1/2); solve for x by bisection.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (incomplete_beta(nu / 2.0, 0.5, mid) < tail) lo = mid;
    else hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  const double t = std::sqrt(nu * (1.0 - x) / x);
  return p > 0.5 ? t : -t;
}

ConfidenceInterval t_confidence_interval(std::span<const double> values, double level) {
  const auto n = values.size();
  if (n < 2) throw ContractError("t_confidence_interval: need at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("t_confidence_interval: bad level");
  ConfidenceInterval ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (const double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  ci.half_width = t_quantile(0.5 + level / 2.0, static_cast<double>(n - 1)) * sd /
                  std::sqrt(static_cast<double>(n));
  return ci;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alt) {
  if (a.size() != b.size()) throw ContractError("wilcoxon_signed_rank: unaligned samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  WilcoxonResult r;
  r.n = static_cast<int>(d.size());
  r.reportable = r.n >= 5;
  if (d.empty()) {
    r.degenerate = true;
    r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  // Doubled mid-ranks are integers.
  std::vector<int> rank2(d.size());
  double tie_term = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e < order.size() && std::abs(d[order[e]]) == std::abs(d[order[k]])) ++e;
    const int r2 = static_cast<int>(k + 1 + e);  // 2 * mean of ranks k+1..e
    for (std::size_t t = k; t < e; ++t) rank2[order[t]] = r2;
    const double t = static_cast<double>(e - k);
    tie_term += t * t * t - t;
    k = e;
  }
  int w2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) w2 += rank2[i];
  }
  r.w_plus = w2 / 2.0;

  if (r.n <= 16) {
    r.exact = true;
    const int total2 = std::accumulate(rank2.begin(), rank2.end(), 0);
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    for (const int rk : rank2) {
      for (int s = total2; s >= rk; --s) count[s] += count[s - rk];
    }
    double tail = 0.0;
    for (int s = 0; s <= total2; ++s) {
      if ((alt == Alternative::less && s <= w2) || (alt == Alternative::greater && s >= w2)) {
        tail += count[s];
      }
    }
    r.p = tail / std::ldexp(1.0, r.n);
    return r;
  }
  const double n = r.n;
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  const double z = alt == Alternative::less ? (r.w_plus - mean + 0.5) / std::sqrt(var)
                                            : (r.w_plus - mean - 0.5) / std::sqrt(var);
  r.p = alt == Alternative::less ? 0.5 * std::erfc(-z / std::sqrt(2.0))
                                  : 0.5 * std::erfc(z / std::sqrt(2.0));
  r.p = std::clamp(r.p, std::numeric_limits<double>::min(), 1.0);
  return r;
}

WinRate win_rate(std::span<const double> a, std::span<const double> b, bool lower_is_better) {
  if (a.size() != b.size()) throw ContractError("win_rate: unaligned samples");
  WinRate w;
  w.n = static_cast<int>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w.wins += lower_is_better ? a[i] < b[i] : a[i] > b[i];
  return w;
}

}  // namespace cvnp
