#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvnp/error.hpp"

namespace cvnp {

enum class CalibMethod { none, temperature, platt, isotonic, phase_aware };
std::string_view to_string(CalibMethod m);
const std::vector<CalibMethod>& all_calib_methods();

/// Half-open index ranges [first, last) of equal-frequency bins over
/// confidences sorted ascending. A run of equal confidences that straddles a
/// boundary is moved whole into the lower bin.
std::vector<std::pair<std::size_t, std::size_t>> equal_frequency_bins(
    std::span<const double> sorted_conf, int n_bins);

/// Expected calibration error over equal-frequency bins of the predicted-class
/// confidence. correct[i] is 1 when the prediction was right.
double ece(std::span<const double> confidences, std::span<const int> correct, int n_bins);

struct ReliabilityBin {
  double bin_low = 0.0;
  double bin_high = 0.0;
  double mean_conf = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

std::vector<ReliabilityBin> reliability_curve(std::span<const double> confidences,
                                              std::span<const int> correct, int n_bins);

struct ProperScores {
  double nll = 0.0;
  double brier = 0.0;  // sum over classes, so [0, 2]
};

/// probs is N x K, rows are distributions.
ProperScores proper_scores(const Eigen::MatrixXd& probs, std::span<const int> labels);

struct TemperatureFit {
  double T = 1.0;
  bool degenerate = false;  // single-class labels, T left at 1
  bool at_boundary = false;
};

/// Golden-section minimisation of the NLL of softmax(logits / T) over
/// T in [0.05, 10], to |dT| <= 1e-4. logits is N x K.
TemperatureFit fit_temperature(const Eigen::MatrixXd& logits, std::span<const int> labels);
double temperature_nll(const Eigen::MatrixXd& logits, std::span<const int> labels, double T);

struct PlattFit {
  double a = 0.0;
  double b = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline constexpr double kPlattPenalty = 1e-6;

/// p = sigmoid(a s + b) for targets in {0, 1}. Newton on the summed NLL plus
/// (kPlattPenalty / 2)(a^2 + b^2), stopped at mean gradient norm <= 1e-8.
PlattFit fit_platt(std::span<const double> scores, std::span<const int> targets);
double platt_nll(std::span<const double> scores, std::span<const int> targets, double a, double b);
double sigmoid(double t);

/// Nondecreasing step function from pool-adjacent-violators.
struct IsotonicFit {
  std::vector<double> lo;     // smallest score in each block
  std::vector<double> hi;     // largest score in each block
  std::vector<double> value;  // block mean, nondecreasing
  std::vector<double> weight;

  /// Value of the last block starting at or below s (first block below the range).
  double operator()(double s) const;
};

/// Equal scores are pooled first, so the fit is a function of the score.
IsotonicFit fit_isotonic(std::span<const double> scores, std::span<const double> targets);

/// T' = T_base * m^(-gamma).
double phase_aware_T(double T_base, int m, double gamma);

/// T_mult = (1 + eps)^(-gamma).
double temperature_multiplier(double eps, double gamma);
std::vector<std::pair<double, double>> misestimation_sweep(std::span<const double> eps_list,
                                                           double gamma);
std::vector<double> default_eps_grid();

}  // namespace cvnp
