#include "cvnp/mine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvnp {

std::string_view to_string(FlagReason r) {
  switch (r) {
    case FlagReason::low_confidence: return "low_confidence";
    case FlagReason::small_margin: return "small_margin";
    case FlagReason::both: return "both";
  }
  return "both";
}

FlagReason flag_reason_from_string(std::string_view s) {
  if (s == "low_confidence") return FlagReason::low_confidence;
  if (s == "small_margin") return FlagReason::small_margin;
  if (s == "both") return FlagReason::both;
  throw ContractError("unknown flag reason");
}

double top2_margin(const Eigen::VectorXd& probs) {
  if (probs.size() < 2) throw ContractError("top2_margin: need at least two classes");
  double first = -std::numeric_limits<double>::infinity();
  double second = first;
  for (const double p : probs) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return first - second;
}

std::vector<Scored> score_dataset(const ModelParams& params, std::span<const Sample> data,
                                  double temperature) {
  std::vector<Scored> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    out.push_back({s.id, s.x, s.label, softmax_temp(forward(params, s.x).logits, temperature)});
  }
  return out;
}

std::vector<AnchorRecord> flag_uncertain(std::span<const Scored> samples, double tau,
                                         double delta) {
  if (tau < 0.0 || tau > 1.0 || delta < 0.0 || delta > 1.0) {
    throw ContractError("flag_uncertain: thresholds must lie in [0, 1]");
  }
  std::vector<AnchorRecord> out;
  for (const auto& s : samples) {
    const double p_max = s.probs.maxCoeff();
    const double margin = top2_margin(s.probs);
    const bool low = p_max < tau;
    const bool small = margin < delta;
    if (!low && !small) continue;
    const FlagReason reason = low && small ? FlagReason::both
                              : low        ? FlagReason::low_confidence
                                           : FlagReason::small_margin;
    out.push_back({s.id, s.x, s.label, s.probs, p_max, margin, reason});
  }
  return out;
}

double flagged_dispersion(std::span<const Scored> samples, const std::vector<bool>& flagged) {
  std::size_t count = 0;
  CVec4 centroid = CVec4::Zero();
  CVec4 lo = CVec4::Constant(std::numeric_limits<double>::infinity());
  CVec4 hi = -lo;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    lo = lo.cwiseMin(samples[i].x);
    hi = hi.cwiseMax(samples[i].x);
    if (flagged[i]) {
      centroid += samples[i].x;
      ++count;
    }
  }
  if (count <= 1) return 0.0;
  centroid /= static_cast<double>(count);
  const double spread = (hi - lo).norm();
  if (!(spread > 0.0)) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (flagged[i]) total += (samples[i].x - centroid).norm();
  }
  return total / static_cast<double>(count) / spread;
}

std::vector<SensCell> sensitivity_grid(std::span<const Scored> samples,
                                       std::span<const double> tau_grid,
                                       std::span<const double> delta_grid) {
  if (tau_grid.empty() || delta_grid.empty()) {
    throw ContractError("sensitivity_grid: grids must be non-empty");
  }
  const std::size_t n = samples.size();
  std::vector<double> p_max(n), margin(n);
  std::vector<bool> wrong(n);
  std::size_t n_wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p_max[i] = samples[i].probs.maxCoeff();
    margin[i] = top2_margin(samples[i].probs);
    wrong[i] = argmax(samples[i].probs) != samples[i].label;
    n_wrong += wrong[i] ? 1 : 0;
  }

  std::vector<SensCell> cells;
  std::vector<bool> flagged(n);
  for (const double tau : tau_grid) {
    for (const double delta : delta_grid) {
      std::size_t n_flag = 0, flag_wrong = 0, accept_wrong = 0;
      for (std::size_t i = 0; i < n; ++i) {
        flagged[i] = p_max[i] < tau || margin[i] < delta;
        if (flagged[i]) {
          ++n_flag;
          flag_wrong += wrong[i] ? 1 : 0;
        } else {
          accept_wrong += wrong[i] ? 1 : 0;
        }
      }
      SensCell c;
      c.tau = tau;
      c.delta = delta;
      c.n_flagged = n_flag;
      c.abstain = n ? static_cast<double>(n_flag) / static_cast<double>(n) : 0.0;
      c.capture = n_wrong ? static_cast<double>(flag_wrong) / static_cast<double>(n_wrong) : 0.0;
      c.precision = n_flag ? static_cast<double>(flag_wrong) / static_cast<double>(n_flag) : 0.0;
      c.risk_accept =
          n > n_flag ? static_cast<double>(accept_wrong) / static_cast<double>(n - n_flag) : 0.0;
      c.dispersion = flagged_dispersion(samples, flagged);
      cells.push_back(c);
    }
  }

  const auto normaliser = [&cells](double SensCell::*field) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : cells) {
      lo = std::min(lo, c.*field);
      hi = std::max(hi, c.*field);
    }
    return [lo, hi](double v) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
  };
  const auto norm_capture = normaliser(&SensCell::capture);
  const auto norm_abstain = normaliser(&SensCell::abstain);
  for (auto& c : cells) c.kink_benefit = norm_capture(c.capture) - norm_abstain(c.abstain);
  return cells;
}

namespace {

std::vector<double> grid(double lo, double step, int count) {
  std::vector<double> g;
  for (int i = 0; i < count; ++i) g.push_back(std::round((lo + i * step) * 100.0) / 100.0);
  return g;
}

}  // namespace

std::vector<double> default_tau_grid() { return grid(0.50, 0.05, 10); }
std::vector<double> default_delta_grid() { return grid(0.00, 0.05, 13); }

namespace {

// Smallest strict-threshold admitting sorted[0..last] without exceeding last + 1 points.
double admit_through(const std::vector<double>& sorted, std::size_t last) {
  const double v = sorted[last];
  if (last + 1 < sorted.size() && sorted[last + 1] == v) return v;
  return std::min(std::nextafter(v, std::numeric_limits<double>::infinity()), 1.0);
}

}  // namespace

BudgetThresholds select_budget(std::span<const Scored> candidates, std::size_t budget) {
  if (budget == 0 || candidates.empty()) return {};
  std::vector<double> p_max, margin;
  for (const auto& c : candidates) {
    p_max.push_back(c.probs.maxCoeff());
    margin.push_back(top2_margin(c.probs));
  }
  std::sort(p_max.begin(), p_max.end());
  std::sort(margin.begin(), margin.end());
  const std::size_t last = std::min(budget, candidates.size()) - 1;
  return {admit_through(p_max, last), admit_through(margin, last)};
}

}  // namespace cvnp
