#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "cvnp/ccore.hpp"
#include "cvnp/puiseux.hpp"
#include "cvnp/surrogate.hpp"

namespace cvnp {

enum class DirectionSource { branch_phase, random_phase, gradient };
std::string_view to_string(DirectionSource s);
DirectionSource direction_source_from_string(std::string_view s);

struct RayProbe {
  CVec4 direction = CVec4::Zero();  // unit norm
  DirectionSource source = DirectionSource::random_phase;
  std::optional<double> flip_radius;
  int n_steps = 20;
  double max_radius = 0.02;
};

using Classifier = std::function<int(const CVec4&)>;

/// Smallest r_k = k * max_radius / n_steps (k = 1..n_steps) at which the
/// class differs from the class at the anchor.
std::optional<double> ray_flip_radius(const Classifier& classify, const CVec4& anchor,
                                      const CVec4& direction, double max_radius, int n_steps);
std::optional<double> ray_flip_radius(const ModelParams& params, const CVec4& anchor,
                                      const CVec4& direction, double max_radius, int n_steps);

/// For each branch with leading term a x^theta: (e^{i phi}, (a/|a|) e^{i theta phi})
/// normalised, phi = 2 pi k / phase_steps. Then n_random directions
/// (e^{i alpha}, e^{i beta}) / sqrt(2) with uniform phases.
std::vector<RayProbe> generate_directions(const std::vector<PuiseuxBranch>& branches,
                                          int n_random, std::uint64_t seed,
                                          int phase_steps = 8);

struct DominantRatio {
  double dr = 0.0;
  double r_dom = 0.0;
  bool degenerate = false;  // quartic block is zero, dr = +inf
};

/// max |quadratic| / max |quartic| on the raw coefficients.
DominantRatio dominant_ratio(const SurrogateFit& fit);

/// Largest quartic coefficient magnitude.
double max_quartic(const SurrogateFit& fit);

struct Saliency {
  CVec4 grad = CVec4::Zero();
  double grad_norm = 0.0;
  double value = 0.0;  // f at the anchor
  double wall_ms = 0.0;
};

/// Gradient of f = l_0 - l_1 by one backward pass.
Saliency gradient_saliency(const ModelParams& params, const CVec4& anchor);

/// Unit vector along -sign(f) grad f, i.e. toward the decision boundary.
RayProbe gradient_direction(const Saliency& s);

struct TriageRow {
  std::int64_t anchor_id = 0;
  double abs_c4 = 0.0;
  double grad_norm = 0.0;
  double inv_r_grad = 0.0;  // |grad f| / |f|, the inverse linearised boundary distance
  double r_dom = 0.0;
  bool fragile = false;
};

enum class TriageScore { abs_c4, grad_norm, inv_r_grad, inv_r_dom };
std::string_view to_string(TriageScore s);
double score_of(const TriageRow& row, TriageScore s);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct TriageResult {
  std::vector<PrPoint> curve;
  double auprc = 0.0;
  double prevalence = 0.0;
  bool degenerate = false;
};

/// Ranks by score, descending; ties enter together. AUPRC is average
/// precision: sum over thresholds of (recall step) * precision.
TriageResult triage(const std::vector<TriageRow>& rows, TriageScore score);
TriageResult average_precision(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace cvnp
