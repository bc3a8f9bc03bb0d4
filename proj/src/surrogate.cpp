#include "cvnp/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace cvnp {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::complex<double> ipow(std::complex<double> z, int k) {
  std::complex<double> r(1.0);
  for (int s = 0; s < k; ++s) r *= z;
  return r;
}

}  // namespace

void SurrogateConfig::validate() const {
  if (degree < 2) throw ContractError("surrogate: degree must be >= 2");
  if (!(radius > 0.0)) throw ContractError("surrogate: radius must be > 0");
  if (ridge < 0.0) throw ContractError("surrogate: ridge must be >= 0");
  if (!(min_keep_ratio > 0.0 && min_keep_ratio <= 1.0)) {
    throw ContractError("surrogate: min_keep_ratio must be in (0, 1]");
  }
  if (n_fit < 1 || n_eval < 0) throw ContractError("surrogate: bad sample counts");
  if (radius_halvings < 0) throw ContractError("surrogate: radius_halvings must be >= 0");
}

LocalFunction network_target(const ModelParams& params) {
  return [&params](const CVec4& x) {
    const ForwardResult r = forward(params, x);
    return LocalProbe{r.logits[0] - r.logits[1], r.hidden_margins.minCoeff()};
  };
}

LocalFunction planted_target(
    std::function<std::complex<double>(std::complex<double>, std::complex<double>)> g,
    const CVec4& anchor) {
  return [g = std::move(g), anchor](const CVec4& x) {
    const Eigen::Vector2cd d = to_complex(x - anchor);
    return LocalProbe{g(d[0], d[1]), 1.0};
  };
}

std::vector<Monomial> monomial_basis(int degree) {
  std::vector<Monomial> basis;
  for (int total = 2; total <= degree; ++total)
    for (int i = total; i >= 0; --i) basis.push_back({i, total - i});
  return basis;
}

Eigen::MatrixXcd design_matrix(const Eigen::MatrixX2cd& points,
                               const std::vector<Monomial>& basis) {
  Eigen::MatrixXcd a(points.rows(), static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index n = 0; n < points.rows(); ++n) {
    for (std::size_t k = 0; k < basis.size(); ++k) {
      a(n, static_cast<Eigen::Index>(k)) = ipow(points(n, 0), basis[k].i) * ipow(points(n, 1), basis[k].j);
    }
  }
  return a;
}

Neighborhood sample_neighborhood(const LocalFunction& target, const CVec4& anchor, int n,
                                 double radius, const SurrogateConfig& cfg, Rng& rng) {
  std::vector<CVec4> offsets;
  std::vector<LocalProbe> probes;
  for (int s = 0; s < n; ++s) {
    CVec4 d;
    for (int c = 0; c < 4; ++c) d[c] = rng.uniform(-radius, radius);
    const LocalProbe p = target(anchor + d);
    if (p.min_margin <= cfg.kink_eps) continue;
    offsets.push_back(d);
    probes.push_back(p);
  }
  Neighborhood nb;
  nb.n_drawn = n;
  nb.kept_ratio = n > 0 ? static_cast<double>(offsets.size()) / n : 0.0;
  const auto kept = static_cast<Eigen::Index>(offsets.size());
  nb.points.resize(kept, 2);
  nb.values.resize(kept);
  nb.weights.resize(kept);
  nb.min_margins.resize(kept);
  for (Eigen::Index k = 0; k < kept; ++k) {
    nb.points.row(k) = to_complex(offsets[k]).transpose();
    nb.values[k] = probes[k].value;
    nb.min_margins[k] = probes[k].min_margin;
    double w = std::max(probes[k].min_margin, 0.0) + 1e-9;
    if (cfg.weight_by_distance) w /= 1.0 + offsets[k].norm() / radius;
    nb.weights[k] = w;
  }
  if (nb.kept_ratio < cfg.min_keep_ratio) {
    throw InsufficientSamples("kept ratio " + std::to_string(nb.kept_ratio) +
                                  " below minimum " + std::to_string(cfg.min_keep_ratio),
                              nb.kept_ratio);
  }
  return nb;
}

PolyFit fit_polynomial(const Eigen::MatrixX2cd& points, const Eigen::VectorXcd& values,
                       const Eigen::VectorXd& weights, int degree, double ridge,
                       bool scale_columns) {
  PolyFit out;
  out.basis = monomial_basis(degree);
  const auto m = static_cast<Eigen::Index>(out.basis.size());
  const Eigen::Index n = points.rows();
  if (values.size() != n || weights.size() != n) {
    throw ContractError("fit_polynomial: sample arrays disagree in length");
  }
  if (n < m) throw ContractError("fit_polynomial: fewer samples than monomials");

  const Eigen::VectorXd sw = weights.cwiseSqrt();
  Eigen::MatrixXcd b = sw.asDiagonal() * design_matrix(points, out.basis);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(m);
  if (scale_columns) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const double norm = b.col(k).norm();
      if (norm > 0.0) scale[k] = 1.0 / norm;
    }
    b = b * scale.asDiagonal();
  }

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(b);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[m - 1];
  out.cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  const double rank_tol = smax * static_cast<double>(std::max(n, m)) *
                          std::numeric_limits<double>::epsilon();
  out.rank = static_cast<int>((sv.array() > rank_tol).count());

  const Eigen::VectorXcd rhs_top = sw.cast<std::complex<double>>().cwiseProduct(values);
  Eigen::MatrixXcd aug(n + m, m);
  aug.topRows(n) = b;
  aug.bottomRows(m) = std::sqrt(ridge) * Eigen::MatrixXcd::Identity(m, m);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n + m);
  rhs.head(n) = rhs_top;
  const Eigen::VectorXcd scaled = aug.colPivHouseholderQr().solve(rhs);
  out.weighted_residual = (b * scaled - rhs_top).norm();
  out.coeffs = scale.cast<std::complex<double>>().cwiseProduct(scaled);
  return out;
}

Fidelity fidelity_metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  Fidelity fd;
  fd.n = static_cast<int>(actual.size());
  if (fd.n < 2 || predicted.size() != actual.size()) return fd;
  fd.available = true;
  const Eigen::ArrayXd err = (predicted - actual).array();
  fd.rmse = std::sqrt(err.square().mean());
  fd.mae = err.abs().mean();
  const Eigen::ArrayXd pc = predicted.array() - predicted.mean();
  const Eigen::ArrayXd ac = actual.array() - actual.mean();
  const double denom = std::sqrt(pc.square().sum() * ac.square().sum());
  fd.pearson = denom > 0.0 ? (pc * ac).sum() / denom : std::numeric_limits<double>::quiet_NaN();
  int agree = 0;
  for (Eigen::Index k = 0; k < actual.size(); ++k) {
    agree += (predicted[k] >= 0.0) == (actual[k] >= 0.0);
  }
  fd.sign_agreement = static_cast<double>(agree) / fd.n;
  return fd;
}

std::complex<double> SurrogateFit::coeff(int i, int j) const {
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (basis[k].i == i && basis[k].j == j) return coeffs[static_cast<Eigen::Index>(k)];
  }
  return {};
}

std::complex<double> SurrogateFit::operator()(std::complex<double> xi,
                                              std::complex<double> eta) const {
  std::complex<double> s{};
  for (std::size_t k = 0; k < basis.size(); ++k) {
    s += coeffs[static_cast<Eigen::Index>(k)] * ipow(xi, basis[k].i) * ipow(eta, basis[k].j);
  }
  return s;
}

Fidelity evaluate_fidelity(const SurrogateFit& fit, const LocalFunction& target,
                           const CVec4& anchor, const SurrogateConfig& cfg, Rng& rng) {
  SurrogateConfig loose = cfg;
  loose.min_keep_ratio = std::numeric_limits<double>::min();
  Neighborhood nb;
  try {
    nb = sample_neighborhood(target, anchor, cfg.n_eval, fit.radius_used, loose, rng);
  } catch (const InsufficientSamples&) {
    return {};
  }
  Eigen::VectorXd pred(nb.points.rows());
  for (Eigen::Index k = 0; k < nb.points.rows(); ++k) pred[k] = fit(nb.points(k, 0), nb.points(k, 1)).real();
  return fidelity_metrics(pred, nb.values.real());
}

SurrogateFit fit_surrogate(const LocalFunction& target, const CVec4& anchor,
                           const SurrogateConfig& cfg) {
  cfg.validate();
  std::vector<FitAttempt> attempts;
  std::uint64_t stream = 0;
  double t_sampling = 0.0, t_lstsq = 0.0;
  for (int degree = cfg.degree; degree >= 2; --degree) {
    const auto m = static_cast<int>(monomial_basis(degree).size());
    double radius = cfg.radius;
    for (int h = 0; h <= cfg.radius_halvings; ++h, radius /= 2.0, ++stream) {
      FitAttempt at{degree, radius, 0.0, 0.0, 0, "ok"};
      Rng rng(mix_seed(cfg.seed, 2 * stream));
      const auto t0 = Clock::now();
      Neighborhood nb;
      try {
        nb = sample_neighborhood(target, anchor, cfg.n_fit, radius, cfg, rng);
      } catch (const InsufficientSamples& e) {
        t_sampling += ms_since(t0);
        at.kept_ratio = e.kept_ratio();
        at.outcome = "kept_ratio";
        attempts.push_back(at);
        continue;
      }
      t_sampling += ms_since(t0);
      at.kept_ratio = nb.kept_ratio;
      if (nb.points.rows() < m) {
        at.outcome = "too_few_samples";
        attempts.push_back(at);
        continue;
      }
      const auto t1 = Clock::now();
      PolyFit pf = fit_polynomial(nb.points, nb.values, nb.weights, degree, cfg.ridge);
      t_lstsq += ms_since(t1);
      at.cond = pf.cond;
      at.rank = pf.rank;
      if (!(pf.cond <= cfg.cond_max)) at.outcome = "cond";
      else if (pf.rank < m) at.outcome = "rank";
      attempts.push_back(at);
      if (at.outcome != "ok") continue;

      SurrogateFit fit;
      fit.basis = std::move(pf.basis);
      fit.coeffs = std::move(pf.coeffs);
      fit.degree_used = degree;
      fit.radius_used = radius;
      fit.cond_A = pf.cond;
      fit.rank_A = pf.rank;
      fit.kept_ratio = nb.kept_ratio;
      fit.n_kept = static_cast<int>(nb.points.rows());
      fit.attempts = attempts;
      fit.time_sampling_ms = t_sampling;
      fit.time_lstsq_ms = t_lstsq;
      Rng eval_rng(mix_seed(cfg.seed, 2 * stream + 1));
      fit.fidelity = evaluate_fidelity(fit, target, anchor, cfg, eval_rng);
      return fit;
    }
  }
  throw UnfittableAnchor("surrogate fit failed after " + std::to_string(attempts.size()) +
                             " attempts",
                         attempts);
}

KinkScore kink_prevalence(const LocalFunction& target, const CVec4& anchor, int n_draws,
                          double radius, std::uint64_t seed) {
  if (n_draws < 2) throw ContractError("kink_prevalence: need at least 2 draws");
  Rng rng(seed);
  const double h = 1e-6;
  std::vector<CVec4> dirs;
  for (int s = 0; s < n_draws; ++s) {
    CVec4 u;
    for (int c = 0; c < 4; ++c) u[c] = rng.normal();
    if (u.norm() == 0.0) continue;
    const CVec4 p = anchor + radius * u.normalized();
    CVec4 g;
    for (int c = 0; c < 4; ++c) {
      CVec4 e = CVec4::Zero();
      e[c] = h;
      g[c] = (target(p + e).value.real() - target(p - e).value.real()) / (2.0 * h);
    }
    if (g.norm() > 0.0) dirs.push_back(g.normalized());
  }
  KinkScore ks;
  ks.n_used = static_cast<int>(dirs.size());
  if (dirs.empty()) {
    ks.degenerate = true;
    return ks;
  }
  CVec4 mean = CVec4::Zero();
  for (const auto& d : dirs) mean += d;
  if (mean.norm() == 0.0) {
    ks.angular_sd = std::numbers::pi / 2.0;
    return ks;
  }
  mean.normalize();
  double sq = 0.0;
  for (const auto& d : dirs) {
    const double ang = std::acos(std::clamp(d.dot(mean), -1.0, 1.0));
    sq += ang * ang;
  }
  ks.angular_sd = std::sqrt(sq / static_cast<double>(dirs.size()));
  return ks;
}

SparsePoly2 to_sparse_poly(const SurrogateFit& fit, double rel_prune) {
  SparsePoly2 f;
  for (std::size_t k = 0; k < fit.basis.size(); ++k) {
    f.add(Rational(fit.basis[k].i), fit.basis[k].j, fit.coeffs[static_cast<Eigen::Index>(k)]);
  }
  f.prune(rel_prune);
  return f;
}

}  // namespace cvnp
