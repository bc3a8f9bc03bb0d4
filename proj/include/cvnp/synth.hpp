#pragma once

#include <array>
#include <cstdint>
#include <numbers>

#include "cvnp/ccore.hpp"

namespace cvnp {

struct HelixClass {
  double mu_r1, sd_r1, mu_r2, sd_r2;
  double mu_phi1, mu_phi2;  // radians
};

/// Two-class C^2 helix: x = r1 e^{i phi1}, y = r2 e^{i phi2} with normal
/// amplitudes and phases per class.
struct HelixParams {
  std::array<HelixClass, 2> classes{{
      {1.0, 0.10, 2.0, 0.20, 0.0, std::numbers::pi / 4.0},
      {1.5, 0.15, 2.0, 0.20, std::numbers::pi / 2.0, -std::numbers::pi},
  }};
  double sd_phi = 0.3;
  int n_per_class = 2000;
  std::uint64_t seed = 42;
  double train_frac = 0.8;

  void validate() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Draw order per sample is r1, phi1, r2, phi2; non-positive amplitudes are
/// redrawn. Ids run 0..2N-1 (class 0 first). The split is stratified:
/// round(train_frac * N) of each class go to train, and both splits are
/// shuffled with the same stream.
Split generate(const HelixParams& p);

}  // namespace cvnp
