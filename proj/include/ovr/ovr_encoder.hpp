#pragma once

// Single-layer encoder trained without a decoder: minimizes
//   J = |mean(H) - 0.5| + lambda * sum_{i != j} h_i . h_j
// either with the local per-neuron rule or with the exact gradient of J.

#include "ovr/common.hpp"
#include "ovr/datasets.hpp"
#include "ovr/evaluation.hpp"
#include "ovr/network.hpp"
#include "ovr/regularizers.hpp"

#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ovr {

enum class UpdateRule { paper_local, exact_gradient };

inline std::string_view to_string(UpdateRule r) {
  return r == UpdateRule::paper_local ? "paper_local" : "exact_gradient";
}

inline UpdateRule parse_update_rule(std::string_view s) {
  if (s == "paper_local" || s == "local") return UpdateRule::paper_local;
  if (s == "exact_gradient" || s == "exact") return UpdateRule::exact_gradient;
  throw InvalidArgument("unknown update rule '" + std::string(s) + "'");
}

struct OvrEncoderConfig {
  int hidden_units = 256;
  double lambda = 1e-4;
  Activation activation = Activation::sigmoid;
  UpdateRule update_rule = UpdateRule::paper_local;
  int batch_size = 128;
  double lr = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 0;
  bool use_bias = true;
  bool include_diagonal = false;
  bool use_activity_term = true;  // the |mean(H) - 0.5| anchor
  bool use_adam = true;           // false: plain SGD on the raw update
  bool row_normalize = false;     // exact_gradient only
};

inline void validate(const OvrEncoderConfig& c) {
  if (c.hidden_units <= 0) throw InvalidArgument("ovr_encoder: hidden_units must be positive");
  if (c.lambda < 0) throw InvalidArgument("ovr_encoder: lambda must be non-negative");
  if (c.batch_size < 1) throw InvalidArgument("ovr_encoder: batch_size must be positive");
  if (c.lambda > 0 && c.update_rule == UpdateRule::paper_local && c.batch_size < 2)
    throw InvalidArgument("ovr_encoder: the local rule needs batch_size >= 2 when lambda > 0");
  if (!(c.lr > 0)) throw InvalidArgument("ovr_encoder: lr must be positive");
  if (c.epochs < 0) throw InvalidArgument("ovr_encoder: epochs must be non-negative");
}

inline HiddenBatch encoder_forward(const DenseLayer& layer, const Matrix& X) { return dense_forward(layer, X); }

inline double cost_J(const Matrix& H, double lambda, bool include_diagonal) {
  if (lambda < 0) throw InvalidArgument("cost_J: lambda must be non-negative");
  return activity_target_loss_grad(H).loss + lambda * ovr_loss_grad(H, include_diagonal).loss;
}

// Local OVR direction for every unit at once (row k belongs to unit k):
//   D_k = -sum_j h^j_k sum_{i != j} x^i = H^T X - (colsum H)^T (colsum X)
// No activation derivative enters, matching the printed rule.
inline Matrix local_ovr_direction(const Matrix& X, const Matrix& H) {
  if (X.rows() != H.rows()) throw ShapeError("local_ovr_direction: batch sizes differ");
  const RowVector sum_x = X.colwise().sum();
  const RowVector sum_h = H.colwise().sum();
  Matrix D = H.transpose() * X;
  D.noalias() -= sum_h.transpose() * sum_x;
  return D;
}

// Gradient of the optional activity term, chained through the layer.
struct EncoderGrads {
  Matrix dW;
  Vector db;
};

inline EncoderGrads activity_term_grads(const DenseLayer& layer, const Matrix& X, const HiddenBatch& hb) {
  const LossGrad act = activity_target_loss_grad(hb.H);
  const DenseGrads g = backprop_dense(layer, X, hb, act.grad);
  return {g.dW, g.db};
}

// The descent "gradient" used by the local rule: the negated local OVR
// direction scaled by lambda, plus the activity term's exact gradient.
inline EncoderGrads local_update_grads(const DenseLayer& layer, const Matrix& X, const HiddenBatch& hb,
                                       double lambda, bool use_activity_term = true) {
  EncoderGrads g;
  g.dW = -lambda * local_ovr_direction(X, hb.H);
  g.db = Vector::Zero(layer.units());
  if (use_activity_term) {
    const EncoderGrads a = activity_term_grads(layer, X, hb);
    g.dW += a.dW;
    g.db = a.db;
  }
  return g;
}

// Exact dJ/dW, dJ/db.
inline EncoderGrads exact_grads(const DenseLayer& layer, const Matrix& X, const HiddenBatch& hb, double lambda,
                                bool include_diagonal, bool use_activity_term = true, bool row_normalize = false) {
  Matrix dH = Matrix::Zero(hb.H.rows(), hb.H.cols());
  if (use_activity_term) dH += activity_target_loss_grad(hb.H).grad;
  if (lambda > 0)
    dH += regularize(hb.H, RegConfig{RegKind::ovr, lambda, include_diagonal, row_normalize}).grad;
  const DenseGrads g = backprop_dense(layer, X, hb, dH);
  return {g.dW, g.db};
}

inline void apply_encoder_grads(DenseLayer& layer, LayerAdam* adam, const EncoderGrads& g, double lr,
                                bool use_bias) {
  if (adam) {
    apply_adam(layer, *adam, g.dW, g.db, lr, use_bias);
  } else {
    if (!g.dW.allFinite() || !g.db.allFinite()) throw NumericError("ovr_encoder: non-finite update");
    layer.W -= lr * g.dW;
    if (use_bias) layer.b -= lr * g.db;
  }
}

// One local-rule step. With adam == nullptr this is plain SGD, i.e. the OVR
// part of the change to w_k is exactly lr * lambda * D_k.
inline void local_update(DenseLayer& layer, LayerAdam* adam, const Matrix& X, const HiddenBatch& hb, double lr,
                         double lambda, bool use_bias = true, bool use_activity_term = true) {
  apply_encoder_grads(layer, adam, local_update_grads(layer, X, hb, lambda, use_activity_term), lr, use_bias);
}

inline void exact_update(DenseLayer& layer, LayerAdam* adam, const Matrix& X, const HiddenBatch& hb, double lr,
                         double lambda, bool include_diagonal, bool use_bias = true, bool use_activity_term = true,
                         bool row_normalize = false) {
  apply_encoder_grads(layer, adam,
                      exact_grads(layer, X, hb, lambda, include_diagonal, use_activity_term, row_normalize), lr,
                      use_bias);
}

struct EncoderEpoch {
  int epoch = 0;
  double mean_J = 0.0;
  double mean_activation = 0.0;
  double sparsity = 0.0;
};

struct EncoderTrainResult {
  DenseLayer layer;
  std::vector<EncoderEpoch> history;
};

inline double default_tau(Activation a) { return a == Activation::sigmoid ? 0.05 : 1e-6; }

inline DenseLayer init_encoder(const OvrEncoderConfig& cfg, Eigen::Index in_dim) {
  Rng rng(mix_seed(cfg.seed, 1));
  return make_dense(in_dim, cfg.hidden_units, cfg.activation, rng, "encoder");
}

// Statistics per epoch are accumulated over the training batches as they are
// seen (before each update).
inline EncoderTrainResult train_ovr_encoder(
    const OvrEncoderConfig& cfg, const LabeledDataset& data,
    const std::function<void(const EncoderEpoch&, const DenseLayer&)>& on_epoch = {}) {
  validate(cfg);
  if (data.X.rows() == 0) throw InvalidArgument("train_ovr_encoder: empty dataset");
  EncoderTrainResult out;
  out.layer = init_encoder(cfg, data.X.cols());
  LayerAdam adam;
  const double tau = default_tau(cfg.activation);
  const auto bs = std::min<Eigen::Index>(cfg.batch_size, data.X.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum_J = 0.0, sum_act = 0.0, sum_sparse = 0.0;
    Eigen::Index seen = 0;
    int batches = 0;
    for (const auto& idx : batch_plan(data.X.rows(), bs, cfg.seed, static_cast<std::uint64_t>(epoch))) {
      const Matrix X = gather_rows(data.X, idx);
      const HiddenBatch hb = encoder_forward(out.layer, X);
      double J = (cfg.use_activity_term ? activity_target_loss_grad(hb.H).loss : 0.0) +
                 cfg.lambda * ovr_loss_grad(cfg.row_normalize ? row_normalize(hb.H).Hn : hb.H, cfg.include_diagonal).loss;
      if (!std::isfinite(J)) {
        std::ostringstream msg;
        msg << "ovr_encoder diverged: non-finite J at epoch " << epoch << " (lambda=" << cfg.lambda << ")";
        throw NumericError(msg.str());
      }
      sum_J += J;
      ++batches;
      sum_act += hb.H.sum();
      sum_sparse += (hb.H.array() <= tau).cast<double>().sum();
      seen += hb.H.size();
      try {
        if (cfg.update_rule == UpdateRule::paper_local)
          local_update(out.layer, cfg.use_adam ? &adam : nullptr, X, hb, cfg.lr, cfg.lambda, cfg.use_bias,
                       cfg.use_activity_term);
        else
          exact_update(out.layer, cfg.use_adam ? &adam : nullptr, X, hb, cfg.lr, cfg.lambda, cfg.include_diagonal,
                       cfg.use_bias, cfg.use_activity_term, cfg.row_normalize);
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "ovr_encoder diverged at epoch " << epoch << " (lambda=" << cfg.lambda << "): " << e.what();
        throw NumericError(msg.str());
      }
    }
    out.history.push_back({epoch, sum_J / batches, sum_act / static_cast<double>(seen),
                           sum_sparse / static_cast<double>(seen)});
    if (on_epoch) on_epoch(out.history.back(), out.layer);
  }
  return out;
}

}  // namespace ovr
