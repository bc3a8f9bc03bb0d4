#include <doctest.h>

#include <cmath>
#include <map>

#include "cvnp/calib.hpp"
#include "cvnp/ccore.hpp"
#include "cvnp/rng.hpp"

using namespace cvnp;

namespace {

// Each tie group goes to the bin that holds its first sorted position.
double brute_force_ece(const std::vector<double>& conf, const std::vector<int>& correct, int n_bins) {
  const std::size_t n = conf.size();
  std::map<double, std::pair<std::size_t, std::size_t>> groups;  // value -> (first position, count)
  std::vector<double> sorted = conf;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < n; ++k) {
    auto [it, fresh] = groups.try_emplace(sorted[k], k, 0);
    ++it->second.second;
  }
  std::vector<double> sum_conf(n_bins), sum_acc(n_bins), count(n_bins);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t first = groups[conf[i]].first;
    int b = 0;
    while (b + 1 < n_bins && (static_cast<std::size_t>(b + 1) * n) / n_bins <= first) ++b;
    sum_conf[b] += conf[i];
    sum_acc[b] += correct[i];
    count[b] += 1;
  }
  double e = 0.0;
  for (int b = 0; b < n_bins; ++b)
    if (count[b] > 0) e += count[b] / n * std::abs(sum_acc[b] / count[b] - sum_conf[b] / count[b]);
  return e;
}

double sse(const IsotonicFit& f, const std::vector<double>& s, const std::vector<double>& y) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) e += std::pow(f(s[i]) - y[i], 2);
  return e;
}

// Best nondecreasing fit by enumerating every contiguous partition of the score groups.
double brute_force_isotonic_sse(const std::vector<double>& s, const std::vector<double>& y) {
  std::map<double, std::vector<double>> by_score;
  for (std::size_t i = 0; i < s.size(); ++i) by_score[s[i]].push_back(y[i]);
  std::vector<std::vector<double>> groups;
  for (auto& [k, v] : by_score) groups.push_back(v);
  const std::size_t g = groups.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t cuts = 0; cuts < (1u << (g - 1)); ++cuts) {
    std::vector<double> means;
    std::vector<std::vector<double>> blocks(1);
    for (std::size_t k = 0; k < g; ++k) {
      if (k > 0 && (cuts >> (k - 1) & 1u)) blocks.emplace_back();
      blocks.back().insert(blocks.back().end(), groups[k].begin(), groups[k].end());
    }
    double err = 0.0, prev = -1.0;
    bool monotone = true;
    for (const auto& b : blocks) {
      double m = 0.0;
      for (double v : b) m += v / static_cast<double>(b.size());
      monotone = monotone && m >= prev;
      prev = m;
      for (double v : b) err += (v - m) * (v - m);
    }
    if (monotone) best = std::min(best, err);
  }
  return best;
}

struct LogitSample {
  Eigen::MatrixXd logits;
  std::vector<int> labels;
};

// Labels drawn from softmax(logits), so T = 1 is the truth.
LogitSample calibrated_logits(std::uint64_t seed, int n) {
  Rng rng(seed);
  LogitSample s{Eigen::MatrixXd(n, 2), std::vector<int>(n)};
  for (int i = 0; i < n; ++i) {
    s.logits(i, 0) = rng.normal(0.0, 2.0);
    s.logits(i, 1) = rng.normal(0.0, 2.0);
    const double p0 = 1.0 / (1.0 + std::exp(s.logits(i, 1) - s.logits(i, 0)));
    s.labels[i] = rng.uniform() < p0 ? 0 : 1;
  }
  return s;
}

}  // namespace

TEST_CASE("ece examples") {
  const std::vector<double> ones(10, 1.0);
  const std::vector<int> right(10, 1);
  CHECK(ece(ones, right, 15) == 0.0);
  const std::vector<double> c{0.6, 0.6, 0.8, 0.8};
  const std::vector<int> y{1, 0, 1, 1};
  CHECK(ece(c, y, 2) == doctest::Approx(0.15));
  CHECK_THROWS(ece(std::vector<double>{}, std::vector<int>{}, 15));
}

TEST_CASE("ties at a bin boundary move to the lower bin") {
  const std::vector<double> sorted{0.1, 0.2, 0.2, 0.2, 0.3, 0.4};
  const auto bins = equal_frequency_bins(sorted, 2);
  REQUIRE(bins.size() == 2);
  CHECK(bins[0] == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(bins[1] == std::pair<std::size_t, std::size_t>{4, 6});
  const auto all_same = equal_frequency_bins(std::vector<double>(5, 0.7), 3);
  CHECK(all_same[0].second == 5);
  CHECK(all_same[1].first == all_same[1].second);
}

TEST_CASE("ece matches a brute-force binning") {
  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> c(500);
    std::vector<int> y(500);
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] = std::round(rng.uniform(0.5, 1.0) * 50.0) / 50.0;
      y[i] = rng.uniform() < c[i] ? 1 : 0;
    }
    for (const int bins : {1, 10, 15, 40}) {
      const double e = ece(c, y, bins);
      CHECK(e == doctest::Approx(brute_force_ece(c, y, bins)).epsilon(1e-12));
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
      std::size_t total = 0;
      for (const auto& rb : reliability_curve(c, y, bins)) total += rb.count;
      CHECK(total == c.size());
    }
  }
}

TEST_CASE("an oracle-calibrated stream has small ece") {
  Rng rng(99);
  std::vector<double> c(100000);
  std::vector<int> y(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = rng.uniform(0.5, 1.0);
    y[i] = rng.uniform() < c[i] ? 1 : 0;
  }
  CHECK(ece(c, y, 15) <= 0.02);
}

TEST_CASE("proper scores") {
  Eigen::MatrixXd onehot(3, 2);
  onehot << 1, 0, 0, 1, 1, 0;
  const std::vector<int> labels{0, 1, 0};
  const ProperScores perfect = proper_scores(onehot, labels);
  CHECK(perfect.nll == doctest::Approx(0.0));
  CHECK(perfect.brier == 0.0);
  const ProperScores uniform = proper_scores(Eigen::MatrixXd::Constant(3, 2, 0.5), labels);
  CHECK(uniform.nll == doctest::Approx(std::log(2.0)));
  CHECK(uniform.brier == doctest::Approx(0.5));

  Rng rng(1);
  Eigen::MatrixXd p(50, 3);
  std::vector<int> y(50);
  double nll = 0.0, brier = 0.0;
  for (int i = 0; i < 50; ++i) {
    for (int k = 0; k < 3; ++k) p(i, k) = rng.uniform(0.01, 1.0);
    p.row(i) /= p.row(i).sum();
    y[i] = static_cast<int>(rng.index(3));
    nll -= std::log(std::max(p(i, y[i]), 1e-12)) / 50.0;
    for (int k = 0; k < 3; ++k) brier += std::pow(p(i, k) - (k == y[i] ? 1.0 : 0.0), 2) / 50.0;
  }
  const ProperScores s = proper_scores(p, y);
  CHECK(std::abs(s.nll - nll) <= 1e-12);
  CHECK(std::abs(s.brier - brier) <= 1e-12);
}

TEST_CASE("temperature recovery") {
  const LogitSample s = calibrated_logits(3, 20000);
  const TemperatureFit one = fit_temperature(s.logits, s.labels);
  CHECK(std::abs(one.T - 1.0) <= 0.05);
  CHECK_FALSE(one.degenerate);
  const TemperatureFit two = fit_temperature(2.0 * s.logits, s.labels);
  CHECK(std::abs(two.T / 2.0 - 1.0) <= 0.02);

  // grid scan: the fitted T is no worse than any grid point
  double best_grid = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 1000; ++k) {
    const double T = 0.05 + (10.0 - 0.05) * k / 1000.0;
    best_grid = std::min(best_grid, temperature_nll(2.0 * s.logits, s.labels, T));
  }
  CHECK(temperature_nll(2.0 * s.logits, s.labels, two.T) <= best_grid + 1e-9);
  CHECK_FALSE(two.at_boundary);

  // a confidently wrong model is pushed to the top of the bracket
  Eigen::MatrixXd wrong(4, 2);
  wrong << 5, 0, 0, 5, 5, 0, 0, 5;
  const TemperatureFit hot = fit_temperature(wrong, std::vector<int>{1, 0, 1, 0});
  CHECK(hot.at_boundary);
  CHECK(hot.T == doctest::Approx(10.0).epsilon(1e-3));

  const TemperatureFit deg = fit_temperature(s.logits.topRows(5), std::vector<int>(5, 1));
  CHECK(deg.degenerate);
  CHECK(deg.T == 1.0);
}

TEST_CASE("temperature scaling never changes the predicted class") {
  const LogitSample s = calibrated_logits(8, 300);
  for (const double T : {0.05, 0.5, 3.0, 10.0}) {
    for (Eigen::Index i = 0; i < s.logits.rows(); ++i) {
      const Eigen::VectorXd l = s.logits.row(i).transpose();
      CHECK(argmax(softmax_temp(l, T)) == argmax(l));
    }
  }
}

TEST_CASE("platt scaling") {
  Rng rng(4);
  std::vector<double> s(5000);
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.normal();
    y[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  const double rate = std::count(y.begin(), y.end(), 1) / static_cast<double>(y.size());
  const double base_b = std::log(rate / (1.0 - rate));
  PlattFit f = fit_platt(s, y);
  CHECK(f.converged);
  CHECK(std::abs(f.a) < 0.1);
  CHECK(std::abs(f.b - base_b) < 0.1);
  CHECK(platt_nll(s, y, f.a, f.b) <= platt_nll(s, y, 0.0, base_b) + 1e-9);

  for (std::size_t i = 0; i < s.size(); ++i) y[i] = rng.uniform() < sigmoid(2.0 * s[i] - 1.0) ? 1 : 0;
  f = fit_platt(s, y);
  CHECK(std::abs(f.a - 2.0) <= 0.2);
  CHECK(std::abs(f.b + 1.0) <= 0.1);
  CHECK(f.a >= 0.0);
  for (int k = 1; k < 20; ++k) CHECK(sigmoid(f.a * k / 5.0 + f.b) >= sigmoid(f.a * (k - 1) / 5.0 + f.b));

  // perfectly separated data stays finite
  const std::vector<double> sep{-2, -1, 1, 2};
  const PlattFit p = fit_platt(sep, std::vector<int>{0, 0, 1, 1});
  CHECK(std::isfinite(p.a));
  CHECK(p.a > 0.0);
  const PlattFit one_class = fit_platt(sep, std::vector<int>{1, 1, 1, 1});
  CHECK(std::isfinite(one_class.b));
  CHECK(one_class.b > 0.0);
}

TEST_CASE("isotonic regression") {
  const std::vector<double> s{0.0, 1.0};
  const IsotonicFit half = fit_isotonic(s, std::vector<double>{1.0, 0.0});
  CHECK(half(0.0) == 0.5);
  CHECK(half(1.0) == 0.5);
  CHECK(half(-5.0) == 0.5);

  const std::vector<double> s4{1, 2, 3, 4}, y4{0.1, 0.4, 0.4, 0.9};
  const IsotonicFit id = fit_isotonic(s4, y4);
  for (std::size_t i = 0; i < s4.size(); ++i) CHECK(id(s4[i]) == doctest::Approx(y4[i]));
  CHECK(id(100.0) == doctest::Approx(0.9));
  CHECK(id(0.0) == doctest::Approx(0.1));

  Rng rng(6);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.index(6));
      y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    const IsotonicFit f = fit_isotonic(x, y);
    CHECK(sse(f, x, y) == doctest::Approx(brute_force_isotonic_sse(x, y)).epsilon(1e-12));
    for (std::size_t k = 1; k < f.value.size(); ++k) CHECK(f.value[k] >= f.value[k - 1]);
    for (double u = -1.0; u < 7.0; u += 0.25) CHECK(f(u + 0.25) >= f(u));
    double identity = 0.0;
    for (std::size_t i = 0; i < n; ++i) identity += std::pow(x[i] / 5.0 - y[i], 2);
    CHECK(sse(f, x, y) <= identity + 1e-12);
  }
}

TEST_CASE("phase-aware temperature") {
  CHECK(phase_aware_T(1.7, 1, 0.5) == 1.7);
  CHECK(phase_aware_T(1.7, 4, 0.5) == doctest::Approx(0.85));
  for (int m = 1; m < 10; ++m) CHECK(phase_aware_T(1.7, m, 0.0) == 1.7);
  for (int m = 1; m < 10; ++m) CHECK(phase_aware_T(1.7, m + 1, 0.5) < phase_aware_T(1.7, m, 0.5));
  CHECK_THROWS(phase_aware_T(1.7, 0, 0.5));
  CHECK_THROWS(phase_aware_T(0.0, 2, 0.5));
}

TEST_CASE("misestimation sweep") {
  CHECK(temperature_multiplier(0.0, 0.5) == 1.0);
  CHECK(temperature_multiplier(0.5, 0.5) == doctest::Approx(0.81650).epsilon(1e-5));
  CHECK(temperature_multiplier(-0.5, 0.5) == doctest::Approx(1.41421).epsilon(1e-5));
  CHECK_THROWS(temperature_multiplier(-1.0, 0.5));
  const auto grid = default_eps_grid();
  REQUIRE(grid.size() == 9);
  CHECK(grid.front() == -0.5);
  CHECK(grid.back() == 0.5);
  const auto sweep = misestimation_sweep(grid, 0.5);
  REQUIRE(sweep.size() == 9);
  for (std::size_t k = 1; k < sweep.size(); ++k) CHECK(sweep[k].second < sweep[k - 1].second);
  CHECK(all_calib_methods().size() == 5);
}
