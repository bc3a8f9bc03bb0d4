#include "cvnp/probe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "cvnp/rng.hpp"

namespace cvnp {

std::string_view to_string(DirectionSource s) {
  switch (s) {
    case DirectionSource::branch_phase: return "branch_phase";
    case DirectionSource::random_phase: return "random_phase";
    case DirectionSource::gradient: return "gradient";
  }
  return "unknown";
}

DirectionSource direction_source_from_string(std::string_view s) {
  if (s == "branch_phase") return DirectionSource::branch_phase;
  if (s == "random_phase") return DirectionSource::random_phase;
  if (s == "gradient") return DirectionSource::gradient;
  throw ContractError("unknown direction source '" + std::string(s) + "'");
}

std::optional<double> ray_flip_radius(const Classifier& classify, const CVec4& anchor,
                                      const CVec4& direction, double max_radius, int n_steps) {
  if (!(max_radius > 0.0)) throw ContractError("ray_flip_radius: max_radius must be > 0");
  if (n_steps < 2) throw ContractError("ray_flip_radius: n_steps must be >= 2");
  const int base = classify(anchor);
  for (int k = 1; k <= n_steps; ++k) {
    const double r = k * max_radius / n_steps;
    if (classify(anchor + r * direction) != base) return r;
  }
  return std::nullopt;
}

std::optional<double> ray_flip_radius(const ModelParams& params, const CVec4& anchor,
                                      const CVec4& direction, double max_radius, int n_steps) {
  return ray_flip_radius([&params](const CVec4& x) { return predict(params, x); }, anchor,
                         direction, max_radius, n_steps);
}

std::vector<RayProbe> generate_directions(const std::vector<PuiseuxBranch>& branches,
                                          int n_random, std::uint64_t seed, int phase_steps) {
  std::vector<RayProbe> out;
  for (const auto& b : branches) {
    std::complex<double> unit{};
    double theta = 0.0;
    if (!b.terms.empty()) {
      const auto a = b.terms.front().coeff;
      unit = a / std::abs(a);
      theta = b.terms.front().exponent.to_double();
    }
    for (int k = 0; k < phase_steps; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / phase_steps;
      const Eigen::Vector2cd z(std::polar(1.0, phi), unit * std::polar(1.0, theta * phi));
      RayProbe p;
      p.direction = to_real(z).normalized();
      p.source = DirectionSource::branch_phase;
      out.push_back(p);
    }
  }
  Rng rng(seed);
  for (int k = 0; k < n_random; ++k) {
    const double alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double beta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    RayProbe p;
    p.direction = to_real(Eigen::Vector2cd(std::polar(1.0, alpha), std::polar(1.0, beta))).normalized();
    p.source = DirectionSource::random_phase;
    out.push_back(p);
  }
  return out;
}

namespace {

double max_abs_of_degree(const SurrogateFit& fit, int total) {
  double m = 0.0;
  for (std::size_t k = 0; k < fit.basis.size(); ++k) {
    if (fit.basis[k].i + fit.basis[k].j == total) {
      m = std::max(m, std::abs(fit.coeffs[static_cast<Eigen::Index>(k)]));
    }
  }
  return m;
}

}  // namespace

double max_quartic(const SurrogateFit& fit) { return max_abs_of_degree(fit, 4); }

DominantRatio dominant_ratio(const SurrogateFit& fit) {
  DominantRatio d;
  const double quad = max_abs_of_degree(fit, 2);
  const double quart = max_abs_of_degree(fit, 4);
  if (quart == 0.0) {
    d.dr = d.r_dom = std::numeric_limits<double>::infinity();
    d.degenerate = true;
    return d;
  }
  d.dr = quad / quart;
  d.r_dom = std::sqrt(d.dr);
  return d;
}

Saliency gradient_saliency(const ModelParams& params, const CVec4& anchor) {
  const auto t0 = std::chrono::steady_clock::now();
  const ForwardTrace tr = forward_trace(params, anchor);
  Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(tr.logits.size());
  dlogits[0] = 1.0;
  dlogits[1] = -1.0;
  const Backprop bp = backward(params, tr, dlogits);
  Saliency s;
  s.grad = bp.input_grad;
  s.grad_norm = s.grad.norm();
  s.value = tr.logits[0] - tr.logits[1];
  s.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

RayProbe gradient_direction(const Saliency& s) {
  RayProbe p;
  p.source = DirectionSource::gradient;
  if (s.grad_norm > 0.0) p.direction = (s.value >= 0.0 ? -1.0 : 1.0) * s.grad / s.grad_norm;
  return p;
}

std::string_view to_string(TriageScore s) {
  switch (s) {
    case TriageScore::abs_c4: return "abs_c4";
    case TriageScore::grad_norm: return "grad_norm";
    case TriageScore::inv_r_grad: return "inv_r_grad";
    case TriageScore::inv_r_dom: return "inv_r_dom";
  }
  return "unknown";
}

double score_of(const TriageRow& row, TriageScore s) {
  switch (s) {
    case TriageScore::abs_c4: return row.abs_c4;
    case TriageScore::grad_norm: return row.grad_norm;
    case TriageScore::inv_r_grad: return row.inv_r_grad;
    case TriageScore::inv_r_dom:
      return row.r_dom > 0.0 ? 1.0 / row.r_dom : std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

TriageResult average_precision(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ContractError("average_precision: need equal, non-empty score and label arrays");
  }
  TriageResult res;
  const auto n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  res.prevalence = static_cast<double>(positives) / static_cast<double>(n);
  if (positives == 0 || positives == n) {
    res.degenerate = true;
    res.auprc = res.prevalence;
    return res;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n;) {
    const double thr = scores[order[k]];
    while (k < n && scores[order[k]] == thr) {
      tp += labels[order[k]];
      ++seen;
      ++k;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    res.auprc += (recall - prev_recall) * precision;
    prev_recall = recall;
    res.curve.push_back({thr, precision, recall});
  }
  return res;
}

TriageResult triage(const std::vector<TriageRow>& rows, TriageScore score) {
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& r : rows) {
    s.push_back(score_of(r, score));
    y.push_back(r.fragile);
  }
  return average_precision(s, y);
}

}  // namespace cvnp
