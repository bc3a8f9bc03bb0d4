#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvnp/ccore.hpp"
#include "cvnp/rng.hpp"
#include "cvnp/sparse_poly.hpp"

namespace cvnp {

struct SurrogateConfig {
  int degree = 4;
  double radius = 0.05;
  int n_fit = 600;
  int n_eval = 200;
  double kink_eps = 1e-6;
  double ridge = 1e-8;
  bool weight_by_distance = true;
  double min_keep_ratio = 0.25;
  double cond_max = 1e10;
  int radius_halvings = 2;  // per degree, before the degree is lowered
  std::uint64_t seed = 0;

  void validate() const;
};

/// Value of the function being approximated plus the smallest first-layer
/// modReLU margin at that point (the kink detector input).
struct LocalProbe {
  std::complex<double> value;
  double min_margin = 1.0;
};
using LocalFunction = std::function<LocalProbe(const CVec4&)>;

/// f = l_0 - l_1 of the network, with min_h s_h.
LocalFunction network_target(const ModelParams& params);

/// g(xi, eta) for xi = z1 - z1*, eta = z2 - z2*; margin is always 1.
LocalFunction planted_target(
    std::function<std::complex<double>(std::complex<double>, std::complex<double>)> g,
    const CVec4& anchor);

struct Monomial {
  int i = 0;  // power of xi
  int j = 0;  // power of eta
  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// xi^i eta^j with 2 <= i + j <= degree, ordered by total degree then by
/// decreasing i. Size C(degree + 2, 2) - 3.
std::vector<Monomial> monomial_basis(int degree);

/// Rows (xi, eta) for each sample.
Eigen::MatrixXcd design_matrix(const Eigen::MatrixX2cd& points, const std::vector<Monomial>& basis);

struct Neighborhood {
  Eigen::MatrixX2cd points;  // kept offsets as (xi, eta)
  Eigen::VectorXcd values;
  Eigen::VectorXd weights;
  Eigen::VectorXd min_margins;
  int n_drawn = 0;
  double kept_ratio = 0.0;
};

class InsufficientSamples : public Error {
 public:
  InsufficientSamples(const std::string& what, double kept_ratio)
      : Error(what), kept_ratio_(kept_ratio) {}
  double kept_ratio() const { return kept_ratio_; }

 private:
  double kept_ratio_;
};

/// Draws `n` uniform offsets in [-radius, radius]^4, drops those with
/// min margin <= kink_eps and weights the rest by
/// (max(min margin, 0) + 1e-9) / (1 + |offset| / radius).
Neighborhood sample_neighborhood(const LocalFunction& target, const CVec4& anchor, int n,
                                 double radius, const SurrogateConfig& cfg, Rng& rng);

struct PolyFit {
  std::vector<Monomial> basis;
  Eigen::VectorXcd coeffs;  // raw monomial basis
  double cond = 0.0;        // of the weighted (and scaled) design matrix
  int rank = 0;
  double weighted_residual = 0.0;
};

/// Weighted ridge least squares
///   min |W^{1/2}(A c - F)|^2 + ridge |c'|^2
/// where c' are the coefficients of the column-normalised weighted design
/// (c' = c when scale_columns is off). Solved by column-pivoted QR on the
/// augmented system.
PolyFit fit_polynomial(const Eigen::MatrixX2cd& points, const Eigen::VectorXcd& values,
                       const Eigen::VectorXd& weights, int degree, double ridge,
                       bool scale_columns = true);

struct Fidelity {
  bool available = false;
  int n = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double pearson = 0.0;  // NaN when either side is constant
  double sign_agreement = 0.0;
};

/// Compares Re f_hat with Re f. sign(0) counts as positive.
Fidelity fidelity_metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

struct FitAttempt {
  int degree = 0;
  double radius = 0.0;
  double kept_ratio = 0.0;
  double cond = 0.0;
  int rank = 0;
  std::string outcome;  // "ok", "kept_ratio", "cond", "rank", "too_few_samples"
};

struct SurrogateFit {
  std::vector<Monomial> basis;
  Eigen::VectorXcd coeffs;
  int degree_used = 0;
  double radius_used = 0.0;
  double cond_A = 0.0;
  int rank_A = 0;
  double kept_ratio = 0.0;
  int n_kept = 0;
  Fidelity fidelity;
  std::vector<FitAttempt> attempts;
  double time_sampling_ms = 0.0;
  double time_lstsq_ms = 0.0;

  std::complex<double> coeff(int i, int j) const;
  std::complex<double> operator()(std::complex<double> xi, std::complex<double> eta) const;
};

class UnfittableAnchor : public Error {
 public:
  UnfittableAnchor(const std::string& what, std::vector<FitAttempt> attempts)
      : Error(what), attempts_(std::move(attempts)) {}
  const std::vector<FitAttempt>& attempts() const { return attempts_; }

 private:
  std::vector<FitAttempt> attempts_;
};

/// Samples, fits and evaluates. On cond > cond_max, rank < M or
/// kept_ratio < min_keep_ratio the radius is halved (radius_halvings times),
/// then the degree is lowered by one with the radius reset, down to 2.
SurrogateFit fit_surrogate(const LocalFunction& target, const CVec4& anchor,
                           const SurrogateConfig& cfg);

/// Fidelity on cfg.n_eval fresh, kink-filtered offsets at the fit's radius.
Fidelity evaluate_fidelity(const SurrogateFit& fit, const LocalFunction& target,
                           const CVec4& anchor, const SurrogateConfig& cfg, Rng& rng);

struct KinkScore {
  double angular_sd = 0.0;  // radians
  int n_used = 0;
  bool degenerate = false;
};

/// Root-mean-square angle between finite-difference gradient directions of
/// Re f on the sphere of radius `radius` and their mean direction.
KinkScore kink_prevalence(const LocalFunction& target, const CVec4& anchor, int n_draws,
                          double radius, std::uint64_t seed);

/// The fit as x = xi, y = eta, dropping |c| < rel_prune * max|c|.
SparsePoly2 to_sparse_poly(const SurrogateFit& fit, double rel_prune = 1e-12);

}  // namespace cvnp
