#pragma once

// Single-hidden-layer MLP classifier and autoencoder, with activity
// regularization on the hidden layer, dropout and denoising corruption.

#include "ovr/common.hpp"
#include "ovr/datasets.hpp"
#include "ovr/evaluation.hpp"
#include "ovr/network.hpp"
#include "ovr/regularizers.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace ovr {

struct Mlp {
  DenseLayer hidden;
  DenseLayer output;  // identity activation, logits
};

struct Autoencoder {
  DenseLayer encoder;
  DenseLayer decoder;  // with tied weights decoder.W is ignored in favour of encoder.W^T
  bool tied = false;
};

struct ObjectiveGrads {
  double loss = 0.0;       // total objective
  double data_loss = 0.0;  // CE or reconstruction part
  Matrix H;                // hidden activations (pre-dropout)
  Matrix dW1;
  Vector db1;
  Matrix dW2;
  Vector db2;
};

// Optional masks multiply the input / hidden activations (dropout).
struct Masks {
  std::optional<Matrix> input;
  std::optional<Matrix> hidden;
};

inline ObjectiveGrads mlp_loss_grad(const Mlp& net, const Matrix& X, const Labels& y, const RegConfig& reg,
                                    const Masks& masks = {}) {
  const Matrix Xin = masks.input ? Matrix(X.cwiseProduct(*masks.input)) : X;
  const HiddenBatch h = dense_forward(net.hidden, Xin);
  const Matrix Hd = masks.hidden ? Matrix(h.H.cwiseProduct(*masks.hidden)) : h.H;
  const HiddenBatch o = dense_forward(net.output, Hd);
  const LossGrad ce = softmax_ce_loss_grad(o.H, y);
  const LossGrad r = regularize(h.H, reg);

  ObjectiveGrads out;
  out.data_loss = ce.loss;
  out.loss = ce.loss + r.loss;
  out.H = h.H;
  const DenseGrads g2 = backprop_dense(net.output, Hd, o, ce.grad);
  Matrix dH = masks.hidden ? Matrix(g2.dX.cwiseProduct(*masks.hidden)) : g2.dX;
  dH += r.grad;
  const DenseGrads g1 = backprop_dense(net.hidden, Xin, h, dH);
  out.dW1 = g1.dW;
  out.db1 = g1.db;
  out.dW2 = g2.dW;
  out.db2 = g2.db;
  return out;
}

inline DenseLayer effective_decoder(const Autoencoder& ae) {
  if (!ae.tied) return ae.decoder;
  DenseLayer d = ae.decoder;
  d.W = ae.encoder.W.transpose();
  return d;
}

// Reconstructs `target` from `input` (they differ for denoising).
inline ObjectiveGrads autoencoder_loss_grad(const Autoencoder& ae, const Matrix& input, const Matrix& target,
                                            const RegConfig& reg) {
  const DenseLayer dec = effective_decoder(ae);
  const HiddenBatch h = dense_forward(ae.encoder, input);
  const HiddenBatch r = dense_forward(dec, h.H);
  const LossGrad mse = mse_loss_grad(r.H, target);
  const LossGrad pen = regularize(h.H, reg);

  ObjectiveGrads out;
  out.data_loss = mse.loss;
  out.loss = mse.loss + pen.loss;
  out.H = h.H;
  const DenseGrads g2 = backprop_dense(dec, h.H, r, mse.grad);
  const DenseGrads g1 = backprop_dense(ae.encoder, input, h, g2.dX + pen.grad);
  out.dW1 = g1.dW;
  out.db1 = g1.db;
  out.db2 = g2.db;
  if (ae.tied) {
    out.dW1 += g2.dW.transpose();
    out.dW2 = Matrix::Zero(ae.decoder.W.rows(), ae.decoder.W.cols());
  } else {
    out.dW2 = g2.dW;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loops

struct TrainConfig {
  int hidden_units = 64;
  Activation activation = Activation::relu;
  RegConfig reg;
  double input_dropout = 0.0;   // MLP: inverted dropout; AE: denoising corruption
  double hidden_dropout = 0.0;  // MLP only
  double lr = 1e-3;
  int epochs = 75;
  int batch_size = 128;
  std::uint64_t seed = 0;
  bool plateau = true;
  bool tied = false;                                  // AE only
  std::optional<Activation> output_activation;        // AE only; defaults by input range
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
};

struct MlpResult {
  Mlp net;  // parameters at the epoch of least validation loss
  int best_epoch = -1;
  std::vector<EpochStats> history;
};

struct AutoencoderResult {
  Autoencoder net;
  int best_epoch = -1;
  std::vector<EpochStats> history;
};

inline Mlp init_mlp(Eigen::Index in_dim, int hidden, int classes, Activation act, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1));
  Mlp net;
  net.hidden = make_dense(in_dim, hidden, act, rng, "hidden");
  net.output = make_dense(hidden, classes, Activation::identity, rng, "output");
  return net;
}

inline Autoencoder init_autoencoder(Eigen::Index in_dim, int hidden, Activation act, Activation out_act, bool tied,
                                    std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1));
  Autoencoder ae;
  ae.encoder = make_dense(in_dim, hidden, act, rng, "encoder");
  ae.decoder = make_dense(hidden, in_dim, out_act, rng, "decoder");
  ae.tied = tied;
  if (tied) ae.decoder.W = ae.encoder.W.transpose();
  return ae;
}

inline Matrix mlp_logits(const Mlp& net, const Matrix& X) {
  return dense_forward(net.output, dense_forward(net.hidden, X).H).H;
}

inline MlpResult train_mlp(const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset& val,
                           const std::function<void(const EpochStats&, const Mlp&)>& on_epoch = {}) {
  validate(train);
  validate(val);
  MlpResult res;
  Mlp net = init_mlp(train.X.cols(), cfg.hidden_units, train.class_count, cfg.activation, cfg.seed);
  LayerAdam adam1, adam2;
  PlateauScheduler sched;
  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  Rng noise(mix_seed(cfg.seed, 3));
  const auto bs = std::min<Eigen::Index>(cfg.batch_size, train.X.rows());
  res.net = net;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    Eigen::Index seen = 0;
    for (const auto& idx : batch_plan(train.X.rows(), bs, cfg.seed, static_cast<std::uint64_t>(epoch))) {
      const Matrix X = gather_rows(train.X, idx);
      const Labels y = gather_labels(train.y, idx);
      Masks masks;
      if (cfg.input_dropout > 0) masks.input = dropout_mask(X.rows(), X.cols(), cfg.input_dropout, noise, true);
      if (cfg.hidden_dropout > 0)
        masks.hidden = dropout_mask(X.rows(), cfg.hidden_units, cfg.hidden_dropout, noise, true);
      const ObjectiveGrads g = mlp_loss_grad(net, X, y, cfg.reg, masks);
      if (!std::isfinite(g.loss))
        throw NumericError("mlp diverged at epoch " + std::to_string(epoch) + " (lambda=" +
                           std::to_string(cfg.reg.lambda) + ")");
      total += g.loss * static_cast<double>(X.rows());
      seen += X.rows();
      apply_adam(net.hidden, adam1, g.dW1, g.db1, lr);
      apply_adam(net.output, adam2, g.dW2, g.db2, lr);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = total / static_cast<double>(seen);
    const Matrix logits = mlp_logits(net, val.X);
    st.val_loss = softmax_ce_loss_grad(logits, val.y).loss;
    st.val_accuracy = accuracy(logits, val.y);
    st.lr = lr;
    res.history.push_back(st);
    if (on_epoch) on_epoch(st, net);
    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      res.best_epoch = epoch;
      res.net = net;
    }
    if (cfg.plateau) lr = plateau_schedule(sched, st.train_loss, lr);
  }
  return res;
}

inline Activation default_output_activation(const Matrix& X) {
  return (X.minCoeff() >= 0.0 && X.maxCoeff() <= 1.0) ? Activation::sigmoid : Activation::identity;
}

inline AutoencoderResult train_autoencoder(
    const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset& val,
    const std::function<void(const EpochStats&, const Autoencoder&)>& on_epoch = {}) {
  validate(train);
  validate(val);
  AutoencoderResult res;
  const Activation out_act = cfg.output_activation.value_or(default_output_activation(train.X));
  Autoencoder ae = init_autoencoder(train.X.cols(), cfg.hidden_units, cfg.activation, out_act, cfg.tied, cfg.seed);
  LayerAdam adam1, adam2;
  PlateauScheduler sched;
  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  Rng noise(mix_seed(cfg.seed, 3));
  const auto bs = std::min<Eigen::Index>(cfg.batch_size, train.X.rows());
  res.net = ae;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    Eigen::Index seen = 0;
    for (const auto& idx : batch_plan(train.X.rows(), bs, cfg.seed, static_cast<std::uint64_t>(epoch))) {
      const Matrix X = gather_rows(train.X, idx);
      const Matrix input =
          cfg.input_dropout > 0 ? Matrix(X.cwiseProduct(dropout_mask(X.rows(), X.cols(), cfg.input_dropout, noise, false)))
                                : X;
      const ObjectiveGrads g = autoencoder_loss_grad(ae, input, X, cfg.reg);
      if (!std::isfinite(g.loss))
        throw NumericError("autoencoder diverged at epoch " + std::to_string(epoch) + " (lambda=" +
                           std::to_string(cfg.reg.lambda) + ")");
      total += g.loss * static_cast<double>(X.rows());
      seen += X.rows();
      apply_adam(ae.encoder, adam1, g.dW1, g.db1, lr);
      if (ae.tied) {
        adam_step(adam2.b, ae.decoder.b, g.db2, lr);
        ae.decoder.W = ae.encoder.W.transpose();
      } else {
        apply_adam(ae.decoder, adam2, g.dW2, g.db2, lr);
      }
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = total / static_cast<double>(seen);
    st.val_loss = autoencoder_loss_grad(ae, val.X, val.X, cfg.reg).data_loss;
    st.lr = lr;
    res.history.push_back(st);
    if (on_epoch) on_epoch(st, ae);
    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      res.best_epoch = epoch;
      res.net = ae;
    }
    if (cfg.plateau) lr = plateau_schedule(sched, st.train_loss, lr);
  }
  return res;
}

}  // namespace ovr
