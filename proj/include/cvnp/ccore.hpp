#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cvnp/error.hpp"

namespace cvnp {

/// A point of C^2 stored as R^4 in the block layout [Re1, Re2, Im1, Im2].
using CVec4 = Eigen::Vector4d;

inline Eigen::Vector2cd to_complex(const CVec4& v) {
  return {std::complex<double>(v[0], v[2]), std::complex<double>(v[1], v[3])};
}

inline CVec4 to_real(const Eigen::Vector2cd& z) {
  return {z[0].real(), z[1].real(), z[0].imag(), z[1].imag()};
}

/// Multiplies both complex coordinates by e^{i phi}.
inline CVec4 rotate_phase(const CVec4& v, double phi) {
  return to_real(to_complex(v) * std::polar(1.0, phi));
}

struct Sample {
  std::int64_t id = 0;
  CVec4 x = CVec4::Zero();
  int label = 0;
};

using Dataset = std::vector<Sample>;

// ---------------------------------------------------------------------------
// Scalar-generic primitives

/// modReLU: zero when |h| + b <= 0, otherwise h scaled by (|h| + b) / |h|.
/// modrelu(0, b) is 0 for every b.
template <typename Scalar>
std::complex<Scalar> modrelu(const std::complex<Scalar>& h, Scalar b) {
  const Scalar r = std::abs(h);
  if (r == Scalar(0) || r + b <= Scalar(0)) return {};
  return h * ((r + b) / r);
}

/// Complex matrix-vector product carried out as two real GEMMs:
/// (Wr x - Wi y) + i (Wr y + Wi x) for z = x + i y.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> complex_linear(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& w_re,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& w_im,
    const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& z) {
  if (w_re.rows() != w_im.rows() || w_re.cols() != w_im.cols() ||
      w_re.cols() != z.size()) {
    throw ContractError("complex_linear: dimension mismatch");
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = z.real();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = z.imag();
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> out(w_re.rows());
  out.real() = w_re * x - w_im * y;
  out.imag() = w_re * y + w_im * x;
  return out;
}

/// l_k = sqrt(u_k^2 + v_k^2 + eps).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> modulus_logits(
    const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& c, Scalar eps) {
  return (c.array().abs2() + eps).sqrt().matrix();
}

/// Temperature softmax with max-subtraction. Throws InvalidTemperature for T <= 0.
Eigen::VectorXd softmax_temp(const Eigen::VectorXd& logits, double temperature);

/// Index of the largest entry (first on ties).
int argmax(const Eigen::VectorXd& v);

// ---------------------------------------------------------------------------
// SimpleComplexNet: ComplexLinear -> modReLU -> ComplexLinear -> |.|

struct ModelParams {
  Eigen::MatrixXd w1_re, w1_im;  // H x 2
  Eigen::VectorXd b1;            // H, modReLU biases
  Eigen::MatrixXd w2_re, w2_im;  // K x H
  double eps_logit = 1e-9;

  int hidden_width() const { return static_cast<int>(b1.size()); }
  int num_classes() const { return static_cast<int>(w2_re.rows()); }
  int num_parameters() const { return 4 * hidden_width() + hidden_width() + 2 * num_classes() * hidden_width(); }

  static ModelParams zeros(int hidden, int classes, double eps_logit = 1e-9);
  void validate() const;
};

/// Parameters flattened in the order W1 (row-major real, then imaginary),
/// b1, W2 (row-major real, then imaginary).
Eigen::VectorXd flatten(const ModelParams& params);
ModelParams unflatten(const Eigen::VectorXd& flat, int hidden, int classes, double eps_logit);

struct ForwardResult {
  Eigen::VectorXd logits;          // K
  Eigen::VectorXd hidden_margins;  // H, s_h = |a_h| + b_h
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  Eigen::VectorXcd input;         // 2
  Eigen::VectorXcd preact;        // H, a = W1 z
  Eigen::VectorXcd hidden;        // H, modrelu(a, b)
  Eigen::VectorXcd output;        // K, c = W2 h
  Eigen::VectorXd logits;         // K
  Eigen::VectorXd hidden_margins; // H
};

ForwardTrace forward_trace(const ModelParams& params, const CVec4& x);
ForwardResult forward(const ModelParams& params, const CVec4& x);

/// Logit difference f = l_0 - l_1.
double logit_difference(const ModelParams& params, const CVec4& x);
int predict(const ModelParams& params, const CVec4& x);

struct Backprop {
  Eigen::VectorXd param_grad;  // layout of flatten()
  CVec4 input_grad;
};

/// Backpropagates dL/dlogits through the net, treating every real and
/// imaginary part as an independent real variable.
Backprop backward(const ModelParams& params, const ForwardTrace& trace,
                  const Eigen::VectorXd& dlogits);

/// Mean cross-entropy over `batch` at T = 1 and its gradient (no weight decay).
double loss_and_gradient(const ModelParams& params, std::span<const Sample> batch,
                         Eigen::VectorXd* grad);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 42;
  int hidden_width = 16;
  double eps_logit = 1e-9;

  void validate() const;
};

/// Complex-Glorot initialisation: real and imaginary parts each uniform in
/// [-a, a] with a = sqrt(3 / (fan_in + fan_out)); modReLU biases start at 0.
ModelParams init_params(int hidden, int classes, std::uint64_t seed, double eps_logit = 1e-9);

/// Mini-batch Adam on cross-entropy. Epoch e shuffles with seed mix(seed, e).
ModelParams train(std::span<const Sample> data, const TrainConfig& cfg);

double accuracy(const ModelParams& params, std::span<const Sample> data);

}  // namespace cvnp
