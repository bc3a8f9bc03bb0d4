#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cvnp/mine.hpp"
#include "cvnp/rng.hpp"

using namespace cvnp;

namespace {

Scored scored(std::int64_t id, double p0, int label, CVec4 x = CVec4::Zero()) {
  return {id, x, label, Eigen::Vector2d(p0, 1.0 - p0)};
}

std::vector<Scored> random_instance(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Scored> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double p0 = rng.uniform();
    const int label = rng.uniform() < p0 ? 0 : 1;
    CVec4 x(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    out.push_back(scored(static_cast<std::int64_t>(i), p0, label, x));
  }
  return out;
}

}  // namespace

TEST_CASE("union rule examples") {
  const std::vector<Scored> s{scored(0, 0.52, 0), scored(1, 0.99, 0)};
  const auto flagged = flag_uncertain(s, 0.5, 0.1);
  REQUIRE(flagged.size() == 1);
  CHECK(flagged[0].id == 0);
  CHECK(flagged[0].flag_reason == FlagReason::small_margin);
  CHECK(flagged[0].margin == doctest::Approx(0.04));
  CHECK(flagged[0].p_max == doctest::Approx(0.52));
}

TEST_CASE("flag reasons and exact ties") {
  const std::vector<Scored> s{scored(0, 0.5, 0), scored(1, 0.3, 1), scored(2, 0.6, 0)};
  const auto f = flag_uncertain(s, 0.75, 0.1);
  REQUIRE(f.size() == 3);
  CHECK(f[0].flag_reason == FlagReason::both);
  CHECK(f[1].flag_reason == FlagReason::low_confidence);
  CHECK(f[2].flag_reason == FlagReason::low_confidence);
  // margin exactly zero is flagged by any positive delta
  CHECK(flag_uncertain(std::vector<Scored>{scored(0, 0.5, 0)}, 0.0, 1e-300).size() == 1);
  CHECK_THROWS_AS(flag_uncertain(s, 1.5, 0.1), ContractError);
}

TEST_CASE("sensitivity grid matches a brute-force recount") {
  const auto s = random_instance(7, 200);
  const auto taus = default_tau_grid();
  const auto deltas = default_delta_grid();
  CHECK(taus.size() == 10);
  CHECK(deltas.size() == 13);
  const auto cells = sensitivity_grid(s, taus, deltas);
  REQUIRE(cells.size() == taus.size() * deltas.size());
  for (const auto& c : cells) {
    int flagged = 0, wrong = 0, flagged_wrong = 0, accepted_wrong = 0;
    for (const auto& x : s) {
      const double p_max = std::max(x.probs[0], x.probs[1]);
      const bool f = p_max < c.tau || std::abs(x.probs[0] - x.probs[1]) < c.delta;
      const bool w = (x.probs[0] >= x.probs[1] ? 0 : 1) != x.label;
      flagged += f;
      wrong += w;
      flagged_wrong += f && w;
      accepted_wrong += !f && w;
    }
    const int n = static_cast<int>(s.size());
    CHECK(c.n_flagged == static_cast<std::size_t>(flagged));
    CHECK(c.abstain == doctest::Approx(static_cast<double>(flagged) / n));
    CHECK(c.capture == doctest::Approx(wrong ? static_cast<double>(flagged_wrong) / wrong : 0.0));
    CHECK(c.precision == doctest::Approx(flagged ? static_cast<double>(flagged_wrong) / flagged : 0.0));
    CHECK(c.risk_accept ==
          doctest::Approx(n > flagged ? static_cast<double>(accepted_wrong) / (n - flagged) : 0.0));
    CHECK(c.abstain * n == doctest::Approx(flagged));
    CHECK(c.precision * flagged + c.risk_accept * (n - flagged) == doctest::Approx(wrong));
    CHECK(c.kink_benefit >= -1.0);
    CHECK(c.kink_benefit <= 1.0);
  }
}

TEST_CASE("grid conventions") {
  std::vector<Scored> s;
  for (int i = 0; i < 10; ++i) s.push_back(scored(i, 0.55 + 0.04 * i, 0));
  const std::vector<double> one{1.0};
  for (const auto& c : sensitivity_grid(s, default_tau_grid(), default_delta_grid())) {
    CHECK(c.capture == 0.0);
    CHECK(c.risk_accept == 0.0);
  }
  const auto all = sensitivity_grid(s, one, one);
  CHECK(all[0].abstain == 1.0);
  CHECK(all[0].risk_accept == 0.0);
}

TEST_CASE("flagged set grows with both thresholds") {
  const auto s = random_instance(9, 150);
  for (const double tau : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    for (const double delta : {0.0, 0.1, 0.2, 0.3}) {
      const auto base = flag_uncertain(s, tau, delta);
      for (const auto& bigger : {flag_uncertain(s, tau + 0.05, delta), flag_uncertain(s, tau, delta + 0.05)}) {
        for (const auto& a : base) {
          CHECK(std::any_of(bigger.begin(), bigger.end(), [&](const AnchorRecord& b) { return b.id == a.id; }));
        }
      }
    }
  }
}

TEST_CASE("dispersion") {
  const auto s = random_instance(4, 30);
  std::vector<bool> none(s.size(), false), one(s.size(), false), all(s.size(), true);
  one[3] = true;
  CHECK(flagged_dispersion(s, none) == 0.0);
  CHECK(flagged_dispersion(s, one) == 0.0);
  CVec4 lo = s[0].x, hi = s[0].x, centroid = CVec4::Zero();
  for (const auto& x : s) {
    lo = lo.cwiseMin(x.x);
    hi = hi.cwiseMax(x.x);
    centroid += x.x / static_cast<double>(s.size());
  }
  double mean = 0.0;
  for (const auto& x : s) mean += (x.x - centroid).norm() / static_cast<double>(s.size());
  CHECK(flagged_dispersion(s, all) == doctest::Approx(mean / (hi - lo).norm()));
}

TEST_CASE("budget selection") {
  std::vector<Scored> s;
  Rng rng(12);
  for (int i = 0; i < 10; ++i) s.push_back(scored(i, 0.5 + 0.45 * rng.uniform(), 0));
  const auto zero = select_budget(s, 0);
  CHECK(zero.tau == 0.0);
  CHECK(zero.delta == 0.0);
  CHECK(flag_uncertain(s, zero.tau, zero.delta).empty());

  const auto b3 = select_budget(s, 3);
  std::vector<double> margins;
  for (const auto& x : s) margins.push_back(top2_margin(x.probs));
  std::sort(margins.begin(), margins.end());
  CHECK(b3.delta == std::nextafter(margins[2], 1.0));
  CHECK(flag_uncertain(s, b3.tau, b3.delta).size() == 3);

  const auto all = select_budget(s, 50);
  CHECK(flag_uncertain(s, all.tau, all.delta).size() == s.size());
}

TEST_CASE("budget never exceeded with tied candidates") {
  std::vector<Scored> s;
  for (int i = 0; i < 6; ++i) s.push_back(scored(i, i < 4 ? 0.6 : 0.8, 0));
  for (std::size_t b = 0; b <= 6; ++b) {
    const auto t = select_budget(s, b);
    CHECK(flag_uncertain(s, t.tau, t.delta).size() <= b);
  }
}
