#include "cvnp/ccore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvnp/rng.hpp"

namespace cvnp {

Eigen::VectorXd softmax_temp(const Eigen::VectorXd& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidTemperature("softmax_temp: temperature must be positive and finite");
  }
  if (logits.size() == 0) throw ContractError("softmax_temp: empty logits");
  const Eigen::ArrayXd scaled = logits.array() / temperature;
  const Eigen::ArrayXd e = (scaled - scaled.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

ModelParams ModelParams::zeros(int hidden, int classes, double eps_logit) {
  ModelParams p;
  p.w1_re = Eigen::MatrixXd::Zero(hidden, 2);
  p.w1_im = Eigen::MatrixXd::Zero(hidden, 2);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.w2_re = Eigen::MatrixXd::Zero(classes, hidden);
  p.w2_im = Eigen::MatrixXd::Zero(classes, hidden);
  p.eps_logit = eps_logit;
  return p;
}

void ModelParams::validate() const {
  const auto h = hidden_width();
  const auto k = num_classes();
  if (h < 1 || k < 2) throw ContractError("ModelParams: need H >= 1 and K >= 2");
  if (w1_re.rows() != h || w1_re.cols() != 2 || w1_im.rows() != h || w1_im.cols() != 2 ||
      w2_re.cols() != h || w2_im.rows() != k || w2_im.cols() != h) {
    throw ContractError("ModelParams: inconsistent shapes");
  }
  if (!(eps_logit > 0.0)) throw ContractError("ModelParams: eps_logit must be positive");
  if (!w1_re.allFinite() || !w1_im.allFinite() || !b1.allFinite() || !w2_re.allFinite() ||
      !w2_im.allFinite()) {
    throw ContractError("ModelParams: non-finite entry");
  }
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void put(Eigen::VectorXd& flat, Eigen::Index& at, const Eigen::MatrixXd& m) {
  const RowMajor rm = m;
  flat.segment(at, rm.size()) = Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
  at += rm.size();
}

Eigen::MatrixXd take(const Eigen::VectorXd& flat, Eigen::Index& at, int rows, int cols) {
  RowMajor rm(rows, cols);
  Eigen::Map<Eigen::VectorXd>(rm.data(), rm.size()) = flat.segment(at, rm.size());
  at += rm.size();
  return rm;
}

}  // namespace

Eigen::VectorXd flatten(const ModelParams& params) {
  Eigen::VectorXd flat(params.num_parameters());
  Eigen::Index at = 0;
  put(flat, at, params.w1_re);
  put(flat, at, params.w1_im);
  put(flat, at, params.b1);
  put(flat, at, params.w2_re);
  put(flat, at, params.w2_im);
  return flat;
}

ModelParams unflatten(const Eigen::VectorXd& flat, int hidden, int classes, double eps_logit) {
  ModelParams p;
  if (flat.size() != 5 * hidden + 2 * classes * hidden) {
    throw ContractError("unflatten: parameter count mismatch");
  }
  Eigen::Index at = 0;
  p.w1_re = take(flat, at, hidden, 2);
  p.w1_im = take(flat, at, hidden, 2);
  p.b1 = take(flat, at, hidden, 1);
  p.w2_re = take(flat, at, classes, hidden);
  p.w2_im = take(flat, at, classes, hidden);
  p.eps_logit = eps_logit;
  return p;
}

ForwardTrace forward_trace(const ModelParams& params, const CVec4& x) {
  ForwardTrace t;
  t.input = to_complex(x);
  t.preact = complex_linear<double>(params.w1_re, params.w1_im, t.input);
  const auto h = params.hidden_width();
  t.hidden.resize(h);
  t.hidden_margins.resize(h);
  for (int i = 0; i < h; ++i) {
    t.hidden[i] = modrelu(t.preact[i], params.b1[i]);
    t.hidden_margins[i] = std::abs(t.preact[i]) + params.b1[i];
  }
  t.output = complex_linear<double>(params.w2_re, params.w2_im, t.hidden);
  t.logits = modulus_logits<double>(t.output, params.eps_logit);
  return t;
}

ForwardResult forward(const ModelParams& params, const CVec4& x) {
  auto t = forward_trace(params, x);
  return {std::move(t.logits), std::move(t.hidden_margins)};
}

double logit_difference(const ModelParams& params, const CVec4& x) {
  const auto r = forward(params, x);
  return r.logits[0] - r.logits[1];
}

int predict(const ModelParams& params, const CVec4& x) {
  return argmax(forward(params, x).logits);
}

Backprop backward(const ModelParams& params, const ForwardTrace& t,
                  const Eigen::VectorXd& dlogits) {
  const int hdim = params.hidden_width();
  const int kdim = params.num_classes();

  // Through the modulus head.
  const Eigen::ArrayXd inv_l = t.logits.array().inverse();
  const Eigen::VectorXd du = (dlogits.array() * t.output.real().array() * inv_l).matrix();
  const Eigen::VectorXd dv = (dlogits.array() * t.output.imag().array() * inv_l).matrix();

  const Eigen::VectorXd hr = t.hidden.real();
  const Eigen::VectorXd hi = t.hidden.imag();
  const Eigen::MatrixXd dw2_re = du * hr.transpose() + dv * hi.transpose();
  const Eigen::MatrixXd dw2_im = -du * hi.transpose() + dv * hr.transpose();

  const Eigen::VectorXd gh_re = params.w2_re.transpose() * du + params.w2_im.transpose() * dv;
  const Eigen::VectorXd gh_im = -params.w2_im.transpose() * du + params.w2_re.transpose() * dv;

  // Through modReLU.
  Eigen::VectorXd ga_re = Eigen::VectorXd::Zero(hdim);
  Eigen::VectorXd ga_im = Eigen::VectorXd::Zero(hdim);
  Eigen::VectorXd db = Eigen::VectorXd::Zero(hdim);
  for (int h = 0; h < hdim; ++h) {
    const double ar = t.preact[h].real();
    const double ai = t.preact[h].imag();
    const double r = std::abs(t.preact[h]);
    const double b = params.b1[h];
    if (r == 0.0 || r + b <= 0.0) continue;
    const double s = (r + b) / r;
    const double r3 = r * r * r;
    const double j_rr = s - b * ar * ar / r3;
    const double j_ii = s - b * ai * ai / r3;
    const double j_ri = -b * ar * ai / r3;
    ga_re[h] = gh_re[h] * j_rr + gh_im[h] * j_ri;
    ga_im[h] = gh_re[h] * j_ri + gh_im[h] * j_ii;
    db[h] = (gh_re[h] * ar + gh_im[h] * ai) / r;
  }

  const Eigen::Vector2d x = t.input.real();
  const Eigen::Vector2d y = t.input.imag();
  const Eigen::MatrixXd dw1_re = ga_re * x.transpose() + ga_im * y.transpose();
  const Eigen::MatrixXd dw1_im = -ga_re * y.transpose() + ga_im * x.transpose();

  const Eigen::Vector2d gx = params.w1_re.transpose() * ga_re + params.w1_im.transpose() * ga_im;
  const Eigen::Vector2d gy = -params.w1_im.transpose() * ga_re + params.w1_re.transpose() * ga_im;

  Backprop out;
  ModelParams g = ModelParams::zeros(hdim, kdim, params.eps_logit);
  g.w1_re = dw1_re;
  g.w1_im = dw1_im;
  g.b1 = db;
  g.w2_re = dw2_re;
  g.w2_im = dw2_im;
  out.param_grad = flatten(g);
  out.input_grad = CVec4(gx[0], gx[1], gy[0], gy[1]);
  return out;
}

double loss_and_gradient(const ModelParams& params, std::span<const Sample> batch,
                         Eigen::VectorXd* grad) {
  if (batch.empty()) throw TrainingInputError("loss_and_gradient: empty batch");
  double loss = 0.0;
  if (grad) *grad = Eigen::VectorXd::Zero(params.num_parameters());
  for (const auto& s : batch) {
    const auto t = forward_trace(params, s.x);
    const Eigen::VectorXd p = softmax_temp(t.logits, 1.0);
    loss -= std::log(std::max(p[s.label], 1e-300));
    if (grad) {
      Eigen::VectorXd dl = p;
      dl[s.label] -= 1.0;
      *grad += backward(params, t, dl).param_grad;
    }
  }
  const double n = static_cast<double>(batch.size());
  if (grad) *grad /= n;
  return loss / n;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("TrainConfig: lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("TrainConfig: betas must lie in (0, 1)");
  }
  if (epochs < 1 || batch_size < 1 || hidden_width < 1) {
    throw ContractError("TrainConfig: epochs, batch_size, hidden_width must be >= 1");
  }
}

ModelParams init_params(int hidden, int classes, std::uint64_t seed, double eps_logit) {
  Rng rng(seed);
  ModelParams p = ModelParams::zeros(hidden, classes, eps_logit);
  const auto fill = [&rng](Eigen::MatrixXd& m, double limit) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
  };
  const double a1 = std::sqrt(3.0 / (2.0 + hidden));
  const double a2 = std::sqrt(3.0 / (hidden + static_cast<double>(classes)));
  fill(p.w1_re, a1);
  fill(p.w1_im, a1);
  fill(p.w2_re, a2);
  fill(p.w2_im, a2);
  return p;
}

ModelParams train(std::span<const Sample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw TrainingInputError("train: empty dataset");
  int max_label = 0;
  for (const auto& s : data) {
    if (s.label < 0) throw TrainingInputError("train: negative label");
    max_label = std::max(max_label, s.label);
  }
  const int classes = std::max(2, max_label + 1);
  std::vector<int> counts(classes, 0);
  for (const auto& s : data) ++counts[s.label];
  if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
    throw TrainingInputError("train: need samples from at least two classes");
  }

  ModelParams params = init_params(cfg.hidden_width, classes, cfg.seed, cfg.eps_logit);
  Eigen::VectorXd theta = flatten(params);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  std::int64_t step = 0;

  std::vector<std::size_t> order(data.size());
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  Eigen::VectorXd grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.index(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);

      loss_and_gradient(params, batch, &grad);
      grad += cfg.weight_decay * theta;

      ++step;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      theta -= (cfg.lr * (m / bc1).array() / ((v / bc2).array().sqrt() + cfg.adam_eps)).matrix();
      params = unflatten(theta, cfg.hidden_width, classes, cfg.eps_logit);
    }
  }
  return params;
}

double accuracy(const ModelParams& params, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : data) hit += predict(params, s.x) == s.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

}  // namespace cvnp
