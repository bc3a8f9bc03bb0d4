#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cvnp/ccore.hpp"

namespace cvnp {

enum class FlagReason { low_confidence, small_margin, both };

std::string_view to_string(FlagReason r);
FlagReason flag_reason_from_string(std::string_view s);

/// A sample together with the class probabilities assigned to it.
struct Scored {
  std::int64_t id = 0;
  CVec4 x = CVec4::Zero();
  int label = 0;
  Eigen::VectorXd probs;
};

struct AnchorRecord {
  std::int64_t id = 0;
  CVec4 x = CVec4::Zero();
  int y_true = 0;
  Eigen::VectorXd probs;
  double p_max = 0.0;
  double margin = 0.0;  // gap between the two largest probabilities
  FlagReason flag_reason = FlagReason::small_margin;
};

/// Gap between the two largest entries (|p1 - p2| when K = 2).
double top2_margin(const Eigen::VectorXd& probs);

std::vector<Scored> score_dataset(const ModelParams& params, std::span<const Sample> data,
                                  double temperature = 1.0);

/// Flags a sample iff p_max < tau or margin < delta.
std::vector<AnchorRecord> flag_uncertain(std::span<const Scored> samples, double tau,
                                         double delta);

struct SensCell {
  double tau = 0.0, delta = 0.0;
  double abstain = 0.0, capture = 0.0, precision = 0.0, risk_accept = 0.0;
  double dispersion = 0.0;
  double kink_benefit = 0.0;
  std::size_t n_flagged = 0;
};

/// Mean distance of flagged points to their centroid, divided by the norm of
/// the per-coordinate max-min range of the whole set; 0 when |U| <= 1.
double flagged_dispersion(std::span<const Scored> samples, const std::vector<bool>& flagged);

/// Evaluates the union rule on every (tau, delta) pair. "Misclassified" means
/// argmax(probs) != label. Conventions: capture = 0 without errors,
/// precision = 0 without flags, risk_accept = 0 with an empty accept set.
/// kink_benefit = capture - abstain after min-max normalising each over the grid.
std::vector<SensCell> sensitivity_grid(std::span<const Scored> samples,
                                       std::span<const double> tau_grid,
                                       std::span<const double> delta_grid);

std::vector<double> default_tau_grid();    // 0.50, 0.55, ..., 0.95
std::vector<double> default_delta_grid();  // 0.00, 0.05, ..., 0.60

struct BudgetThresholds {
  double tau = 0.0;
  double delta = 0.0;
};

/// Picks (tau*, delta*) so that at most `budget` candidates are flagged.
/// Each threshold is the smallest double strictly above the p_max (resp.
/// margin) of the last admitted candidate, so re-flagging with the strict
/// rule admits exactly that candidate and everything ranked before it.
BudgetThresholds select_budget(std::span<const Scored> candidates, std::size_t budget);

}  // namespace cvnp
