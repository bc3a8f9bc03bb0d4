#include "cvnp/calib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvnp/ccore.hpp"

namespace cvnp {

std::string_view to_string(CalibMethod m) {
  switch (m) {
    case CalibMethod::none: return "none";
    case CalibMethod::temperature: return "temperature";
    case CalibMethod::platt: return "platt";
    case CalibMethod::isotonic: return "isotonic";
    case CalibMethod::phase_aware: return "phase_aware";
  }
  return "unknown";
}

const std::vector<CalibMethod>& all_calib_methods() {
  static const std::vector<CalibMethod> methods{CalibMethod::none, CalibMethod::temperature,
                                                CalibMethod::platt, CalibMethod::isotonic,
                                                CalibMethod::phase_aware};
  return methods;
}

std::vector<std::pair<std::size_t, std::size_t>> equal_frequency_bins(
    std::span<const double> sorted_conf, int n_bins) {
  if (n_bins < 1) throw ContractError("equal_frequency_bins: n_bins must be >= 1");
  const std::size_t n = sorted_conf.size();
  std::vector<std::size_t> start(n_bins + 1);
  for (int b = 0; b <= n_bins; ++b) start[b] = static_cast<std::size_t>(b) * n / n_bins;
  for (int b = 1; b < n_bins; ++b) {
    start[b] = std::max(start[b], start[b - 1]);
    while (start[b] > 0 && start[b] < n && sorted_conf[start[b]] == sorted_conf[start[b] - 1]) {
      ++start[b];
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> bins;
  for (int b = 0; b < n_bins; ++b) bins.emplace_back(start[b], std::max(start[b], start[b + 1]));
  return bins;
}

namespace {

std::vector<std::size_t> sort_by_conf(std::span<const double> conf) {
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
  return order;
}

}  // namespace

std::vector<ReliabilityBin> reliability_curve(std::span<const double> confidences,
                                              std::span<const int> correct, int n_bins) {
  if (confidences.empty()) throw ContractError("calibration metrics: empty input");
  if (confidences.size() != correct.size()) throw ContractError("calibration metrics: size mismatch");
  const auto order = sort_by_conf(confidences);
  std::vector<double> sorted(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = confidences[order[k]];
  std::vector<ReliabilityBin> out;
  for (const auto& [first, last] : equal_frequency_bins(sorted, n_bins)) {
    ReliabilityBin rb;
    rb.count = last - first;
    if (rb.count > 0) {
      rb.bin_low = sorted[first];
      rb.bin_high = sorted[last - 1];
      double sc = 0.0, sa = 0.0;
      for (std::size_t k = first; k < last; ++k) {
        sc += sorted[k];
        sa += correct[order[k]];
      }
      rb.mean_conf = sc / static_cast<double>(rb.count);
      rb.accuracy = sa / static_cast<double>(rb.count);
    }
    out.push_back(rb);
  }
  return out;
}

double ece(std::span<const double> confidences, std::span<const int> correct, int n_bins) {
  const auto bins = reliability_curve(confidences, correct, n_bins);
  const auto n = static_cast<double>(confidences.size());
  double e = 0.0;
  for (const auto& b : bins) {
    if (b.count > 0) e += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.mean_conf);
  }
  return e;
}

ProperScores proper_scores(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  if (probs.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty()) {
    throw ContractError("proper_scores: size mismatch");
  }
  ProperScores s;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    s.nll -= std::log(std::max(probs(i, y), 1e-12));
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double t = (k == y ? 1.0 : 0.0) - probs(i, k);
      s.brier += t * t;
    }
  }
  s.nll /= static_cast<double>(probs.rows());
  s.brier /= static_cast<double>(probs.rows());
  return s;
}

double temperature_nll(const Eigen::MatrixXd& logits, std::span<const int> labels, double T) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::VectorXd p = softmax_temp(logits.row(i).transpose(), T);
    nll -= std::log(std::max(p[labels[static_cast<std::size_t>(i)]], 1e-12));
  }
  return nll / static_cast<double>(logits.rows());
}

TemperatureFit fit_temperature(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ContractError("fit_temperature: size mismatch");
  }
  TemperatureFit fit;
  const bool one_class = labels.size() < 2 ||
                         std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; });
  if (one_class) {
    fit.degenerate = true;
    return fit;
  }
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.05, hi = 10.0;
  double c = hi - invphi * (hi - lo), d = lo + invphi * (hi - lo);
  double fc = temperature_nll(logits, labels, c), fd = temperature_nll(logits, labels, d);
  while (hi - lo > 1e-4) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = temperature_nll(logits, labels, c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = temperature_nll(logits, labels, d);
    }
  }
  fit.T = 0.5 * (lo + hi);
  fit.at_boundary = fit.T - 0.05 < 2e-4 || 10.0 - fit.T < 2e-4;
  return fit;
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double platt_nll(std::span<const double> scores, std::span<const int> targets, double a, double b) {
  double nll = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double t = a * scores[i] + b;
    // -log sigmoid(t) = log(1 + e^{-t}), -log(1 - sigmoid(t)) = log(1 + e^{t})
    nll += targets[i] ? std::log1p(std::exp(-std::abs(t))) + std::max(-t, 0.0)
                      : std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0);
  }
  return nll / static_cast<double>(scores.size());
}

PlattFit fit_platt(std::span<const double> scores, std::span<const int> targets) {
  if (scores.size() != targets.size() || scores.empty()) {
    throw ContractError("fit_platt: need equal, non-empty inputs");
  }
  const auto n = static_cast<double>(scores.size());
  auto objective = [&](double a, double b) {
    return n * platt_nll(scores, targets, a, b) + 0.5 * kPlattPenalty * (a * a + b * b);
  };
  PlattFit fit;
  for (fit.iterations = 0; fit.iterations < 200; ++fit.iterations) {
    Eigen::Vector2d g(kPlattPenalty * fit.a, kPlattPenalty * fit.b);
    Eigen::Matrix2d h = kPlattPenalty * Eigen::Matrix2d::Identity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = sigmoid(fit.a * scores[i] + fit.b);
      const double r = p - targets[i];
      const Eigen::Vector2d x(scores[i], 1.0);
      g += r * x;
      h += p * (1.0 - p) * x * x.transpose();
    }
    if (g.norm() / n <= 1e-8) {
      fit.converged = true;
      break;
    }
    const Eigen::Vector2d step = h.ldlt().solve(g);
    const double f0 = objective(fit.a, fit.b);
    double t = 1.0;
    while (t > 1e-12 && objective(fit.a - t * step[0], fit.b - t * step[1]) > f0) t *= 0.5;
    fit.a -= t * step[0];
    fit.b -= t * step[1];
  }
  return fit;
}

double IsotonicFit::operator()(double s) const {
  if (value.empty()) return 0.5;
  const auto it = std::upper_bound(lo.begin(), lo.end(), s);
  const std::size_t k = it == lo.begin() ? 0 : static_cast<std::size_t>(it - lo.begin()) - 1;
  return std::clamp(value[k], 0.0, 1.0);
}

IsotonicFit fit_isotonic(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size() || scores.empty()) {
    throw ContractError("fit_isotonic: need equal, non-empty inputs");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  IsotonicFit f;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    double sum = 0.0, w = 0.0;
    while (k < order.size() && scores[order[k]] == s) {
      sum += targets[order[k]];
      w += 1.0;
      ++k;
    }
    f.lo.push_back(s);
    f.hi.push_back(s);
    f.value.push_back(sum / w);
    f.weight.push_back(w);
    while (f.value.size() >= 2 && f.value[f.value.size() - 2] >= f.value.back()) {
      const std::size_t last = f.value.size() - 1;
      const double wt = f.weight[last - 1] + f.weight[last];
      f.value[last - 1] = (f.value[last - 1] * f.weight[last - 1] + f.value[last] * f.weight[last]) / wt;
      f.weight[last - 1] = wt;
      f.hi[last - 1] = f.hi[last];
      f.lo.pop_back();
      f.hi.pop_back();
      f.value.pop_back();
      f.weight.pop_back();
    }
  }
  return f;
}

double phase_aware_T(double T_base, int m, double gamma) {
  if (!(T_base > 0.0)) throw InvalidTemperature("phase_aware_T: T_base must be > 0");
  if (m < 1) throw ContractError("phase_aware_T: multiplicity must be >= 1");
  if (gamma < 0.0 || gamma > 1.0) throw ContractError("phase_aware_T: gamma must be in [0, 1]");
  return T_base * std::pow(static_cast<double>(m), -gamma);
}

double temperature_multiplier(double eps, double gamma) {
  if (!(eps > -1.0)) throw ContractError("temperature_multiplier: eps must be > -1");
  return std::pow(1.0 + eps, -gamma);
}

std::vector<std::pair<double, double>> misestimation_sweep(std::span<const double> eps_list,
                                                           double gamma) {
  std::vector<std::pair<double, double>> out;
  for (const double e : eps_list) out.emplace_back(e, temperature_multiplier(e, gamma));
  return out;
}

std::vector<double> default_eps_grid() {
  return {-0.50, -0.25, -0.10, -0.05, 0.0, 0.05, 0.10, 0.25, 0.50};
}

}  // namespace cvnp
