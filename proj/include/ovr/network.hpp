#pragma once

// Dense single-layer building blocks: forward/backward, losses, Adam,
// plateau scheduling and input corruption.

#include "ovr/common.hpp"

#include <limits>
#include <span>
#include <string>
#include <string_view>

namespace ovr {

enum class Activation { identity, sigmoid, relu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity" || s == "none" || s == "linear") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Matrix W;  // units x in_dim; row k is the weight vector of unit k
  Vector b;
  Activation activation = Activation::identity;
  std::string name = "dense";

  Eigen::Index units() const { return W.rows(); }
  Eigen::Index in_dim() const { return W.cols(); }
};

struct HiddenBatch {
  Matrix A;  // pre-activations
  Matrix H;  // activations
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

struct DenseGrads {
  Matrix dW;
  Vector db;
  Matrix dX;
};

// Glorot-uniform weights, zero biases.
inline DenseLayer make_dense(Eigen::Index in_dim, Eigen::Index units, Activation act, Rng& rng,
                             std::string name = "dense") {
  if (in_dim <= 0 || units <= 0) throw InvalidArgument("make_dense: dimensions must be positive");
  DenseLayer layer;
  layer.W.resize(units, in_dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + units));
  for (Eigen::Index r = 0; r < units; ++r)
    for (Eigen::Index c = 0; c < in_dim; ++c) layer.W(r, c) = rng.uniform(-limit, limit);
  layer.b = Vector::Zero(units);
  layer.activation = act;
  layer.name = std::move(name);
  return layer;
}

inline void apply_activation(Activation act, const Matrix& A, Matrix& H) {
  switch (act) {
    case Activation::identity: H = A; break;
    case Activation::sigmoid: H = (1.0 + (-A.array()).exp()).inverse().matrix(); break;
    case Activation::relu: H = A.cwiseMax(0.0); break;
  }
}

// Derivative of the activation expressed through A and H.
inline Matrix activation_derivative(Activation act, const Matrix& A, const Matrix& H) {
  switch (act) {
    case Activation::identity: return Matrix::Ones(A.rows(), A.cols());
    case Activation::sigmoid: return (H.array() * (1.0 - H.array())).matrix();
    case Activation::relu: return (A.array() > 0.0).cast<double>().matrix();
  }
  return {};
}

inline HiddenBatch dense_forward(const DenseLayer& layer, const Matrix& X) {
  if (X.cols() != layer.in_dim())
    throw ShapeError(layer.name + ": input has " + std::to_string(X.cols()) + " columns, layer expects " +
                     std::to_string(layer.in_dim()));
  HiddenBatch out;
  out.A.noalias() = X * layer.W.transpose();
  out.A.rowwise() += layer.b.transpose();
  apply_activation(layer.activation, out.A, out.H);
  if (!out.H.allFinite()) throw NumericError(layer.name + ": non-finite activation in forward pass");
  return out;
}

inline DenseGrads backprop_dense(const DenseLayer& layer, const Matrix& X, const HiddenBatch& hidden,
                                 const Matrix& dH) {
  require_same_shape(hidden.H, dH, "backprop_dense: dH");
  require_same_shape(hidden.A, hidden.H, "backprop_dense: A/H");
  if (X.rows() != dH.rows() || X.cols() != layer.in_dim() || dH.cols() != layer.units())
    throw ShapeError(layer.name + ": backprop shapes inconsistent");
  const Matrix dA = dH.cwiseProduct(activation_derivative(layer.activation, hidden.A, hidden.H));
  DenseGrads g;
  g.dW.noalias() = dA.transpose() * X;
  g.db = dA.colwise().sum().transpose();
  g.dX.noalias() = dA * layer.W;
  return g;
}

inline LossGrad mse_loss_grad(const Matrix& Y_hat, const Matrix& Y) {
  require_same_shape(Y_hat, Y, "mse_loss_grad");
  const double count = static_cast<double>(Y.size());
  LossGrad out;
  const Matrix diff = Y_hat - Y;
  out.loss = diff.squaredNorm() / count;
  out.grad = diff * (2.0 / count);
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

inline LossGrad softmax_ce_loss_grad(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeError("softmax_ce_loss_grad: " + std::to_string(logits.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  if (logits.rows() == 0) throw InvalidArgument("softmax_ce_loss_grad: empty batch");
  const Eigen::Index n = logits.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols())
      throw InvalidArgument("softmax_ce_loss_grad: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(logits.cols()) + ")");
  }
  const Vector row_max = logits.rowwise().maxCoeff();
  const Matrix shifted = logits.colwise() - row_max;
  const Vector log_z = shifted.array().exp().rowwise().sum().log().matrix();
  LossGrad out;
  out.grad = (shifted.colwise() - log_z).array().exp().matrix();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    loss += log_z(i) - shifted(i, y);
    out.grad(i, y) -= 1.0;
  }
  out.loss = loss / static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(AdamState& s, std::span<double> param, std::span<const double> grad, double lr) {
  if (param.size() != grad.size())
    throw ShapeError("adam_step: parameter size " + std::to_string(param.size()) + " vs gradient size " +
                     std::to_string(grad.size()));
  const auto n = static_cast<Eigen::Index>(param.size());
  Eigen::Map<Eigen::ArrayXd> p(param.data(), n);
  const Eigen::Map<const Eigen::ArrayXd> g(grad.data(), n);
  if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient");
  if (s.m.size() == 0) {
    s.m = Eigen::ArrayXd::Zero(n);
    s.v = Eigen::ArrayXd::Zero(n);
  } else if (s.m.size() != n) {
    throw ShapeError("adam_step: state holds " + std::to_string(s.m.size()) + " entries, parameter has " +
                     std::to_string(n));
  }
  ++s.t;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * g;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * g.square();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  p -= lr * (s.m / c1) / ((s.v / c2).sqrt() + s.eps);
}

template <typename Derived>
void adam_step(AdamState& s, Eigen::PlainObjectBase<Derived>& param, const Eigen::PlainObjectBase<Derived>& grad,
               double lr) {
  require_same_shape(param, grad, "adam_step");
  adam_step(s, std::span<double>(param.data(), static_cast<std::size_t>(param.size())),
            std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())), lr);
}

// Adam moments for one dense layer.
struct LayerAdam {
  AdamState W;
  AdamState b;
};

inline void apply_adam(DenseLayer& layer, LayerAdam& opt, const Matrix& dW, const Vector& db, double lr,
                       bool update_bias = true) {
  adam_step(opt.W, layer.W, dW, lr);
  if (update_bias) adam_step(opt.b, layer.b, db, lr);
}

// ---------------------------------------------------------------------------
// Plateau learning-rate schedule

struct PlateauScheduler {
  int patience = 5;
  double factor = 0.5;
  double min_improvement = 1e-4;
  double best_loss = std::numeric_limits<double>::infinity();
  int stall_count = 0;
};

inline double plateau_schedule(PlateauScheduler& s, double epoch_loss, double lr) {
  if (epoch_loss < s.best_loss * (1.0 - s.min_improvement)) {
    s.best_loss = epoch_loss;
    s.stall_count = 0;
    return lr;
  }
  if (++s.stall_count > s.patience) {
    s.stall_count = 0;
    return lr * s.factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Input corruption

// Zeroes each entry with probability drop_ratio. With inverted = true the
// survivors are scaled by 1/(1-p) (training-time dropout); otherwise they are
// left unchanged (denoising corruption).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double drop_ratio, Rng& rng, bool inverted) {
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0))
    throw InvalidArgument("corrupt_input: drop_ratio must be in [0, 1), got " + std::to_string(drop_ratio));
  const double keep_value = inverted ? 1.0 / (1.0 - drop_ratio) : 1.0;
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = (drop_ratio > 0.0 && rng.uniform() < drop_ratio) ? 0.0 : keep_value;
  return mask;
}

inline Matrix corrupt_input(const Matrix& X, double drop_ratio, std::uint64_t seed, bool inverted = false) {
  Rng rng(seed);
  return X.cwiseProduct(dropout_mask(X.rows(), X.cols(), drop_ratio, rng, inverted));
}

}  // namespace ovr
