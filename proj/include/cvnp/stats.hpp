#pragma once

#include <span>
#include <string_view>

namespace cvnp {

/// Regularised incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student-t quantile for probability p with nu degrees of freedom.
double t_quantile(double p, double nu);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// mean +/- t_{(1+level)/2, n-1} s / sqrt(n). Requires n >= 2.
ConfidenceInterval t_confidence_interval(std::span<const double> values, double level = 0.95);

enum class Alternative { less, greater };

struct WilcoxonResult {
  double p = 1.0;
  double w_plus = 0.0;   // rank sum of positive differences
  int n = 0;             // nonzero differences
  bool exact = false;
  bool degenerate = false;  // all differences zero, p undefined
  bool reportable = false;  // n >= 5
};

/// One-sided signed-rank test on d = a - b. "less" asks whether a tends to be
/// below b. Zero differences are dropped, ties get mid-ranks. Exact null
/// distribution for n <= 16, normal approximation with continuity correction
/// (and tie-corrected variance) above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alt);

struct WinRate {
  int wins = 0;
  int n = 0;
};

/// Folds where a is strictly better than b; lower_is_better picks the direction.
WinRate win_rate(std::span<const double> a, std::span<const double> b, bool lower_is_better);

}  // namespace cvnp
