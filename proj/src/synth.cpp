#include "cvnp/synth.hpp"

#include <cmath>
#include <complex>

#include "cvnp/rng.hpp"

namespace cvnp {

void HelixParams::validate() const {
  for (const auto& c : classes) {
    if (!(c.sd_r1 > 0.0 && c.sd_r2 > 0.0)) throw ContractError("HelixParams: sd must be > 0");
  }
  if (!(sd_phi > 0.0)) throw ContractError("HelixParams: sd_phi must be > 0");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ContractError("HelixParams: train_frac in (0,1)");
  if (n_per_class < 1) throw ContractError("HelixParams: n_per_class >= 1");
}

namespace {

double positive_normal(Rng& rng, double mean, double sd) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double r = rng.normal(mean, sd);
    if (r > 0.0) return r;
  }
  throw ContractError("generate: amplitude distribution has no positive mass");
}

void shuffle(Dataset& d, Rng& rng) {
  for (std::size_t i = d.size(); i > 1; --i) std::swap(d[i - 1], d[rng.index(i)]);
}

}  // namespace

Split generate(const HelixParams& p) {
  p.validate();
  Rng rng(p.seed);
  const auto n_train = static_cast<int>(std::lround(p.train_frac * p.n_per_class));
  Split out;
  std::int64_t id = 0;
  for (int k = 0; k < 2; ++k) {
    const auto& c = p.classes[k];
    Dataset cls;
    cls.reserve(p.n_per_class);
    for (int i = 0; i < p.n_per_class; ++i) {
      const double r1 = positive_normal(rng, c.mu_r1, c.sd_r1);
      const double phi1 = rng.normal(c.mu_phi1, p.sd_phi);
      const double r2 = positive_normal(rng, c.mu_r2, c.sd_r2);
      const double phi2 = rng.normal(c.mu_phi2, p.sd_phi);
      Eigen::Vector2cd z(std::polar(r1, phi1), std::polar(r2, phi2));
      cls.push_back({id++, to_real(z), k});
    }
    shuffle(cls, rng);
    out.train.insert(out.train.end(), cls.begin(), cls.begin() + n_train);
    out.test.insert(out.test.end(), cls.begin() + n_train, cls.end());
  }
  shuffle(out.train, rng);
  shuffle(out.test, rng);
  return out;
}

}  // namespace cvnp
