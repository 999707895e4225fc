#pragma once

// Penalties on a batch of hidden representations H (one row per sample),
// each returning the loss and its exact gradient with respect to H.

#include "ovr/common.hpp"
#include "ovr/network.hpp"

#include <string>
#include <string_view>

namespace ovr {

enum class RegKind { none, ovr, l1_activity, l2_activity };

inline std::string_view to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::ovr: return "ovr";
    case RegKind::l1_activity: return "l1_activity";
    case RegKind::l2_activity: return "l2_activity";
  }
  return "?";
}

inline RegKind parse_reg_kind(std::string_view s) {
  if (s == "none") return RegKind::none;
  if (s == "ovr") return RegKind::ovr;
  if (s == "l1_activity" || s == "l1") return RegKind::l1_activity;
  if (s == "l2_activity" || s == "l2") return RegKind::l2_activity;
  throw InvalidArgument("unknown regularizer '" + std::string(s) + "'");
}

struct RegConfig {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  bool include_diagonal = false;
  bool row_normalize = true;
};

// One-vs-rest overlap: sum of the entries of H H^T, optionally without the
// diagonal (self-overlap) terms. Uses sum_ij h_i.h_j = |sum_i h_i|^2.
inline LossGrad ovr_loss_grad(const Matrix& H, bool include_diagonal) {
  if (H.rows() == 0 || H.cols() == 0) throw InvalidArgument("ovr_loss_grad: empty H");
  const RowVector S = H.colwise().sum();
  LossGrad out;
  out.loss = S.squaredNorm();
  out.grad = (2.0 * S).replicate(H.rows(), 1);
  if (!include_diagonal) {
    out.loss -= H.squaredNorm();
    out.grad -= 2.0 * H;
  }
  return out;
}

// |mean(H) - 0.5| over every entry; subgradient 0 at the kink.
inline LossGrad activity_target_loss_grad(const Matrix& H) {
  if (H.size() == 0) throw InvalidArgument("activity_target_loss_grad: empty H");
  const double count = static_cast<double>(H.size());
  const double diff = H.mean() - 0.5;
  const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  return {std::abs(diff), Matrix::Constant(H.rows(), H.cols(), sign / count)};
}

inline LossGrad lp_activity_loss_grad(const Matrix& H, int p) {
  if (p != 1 && p != 2) throw InvalidArgument("lp_activity_loss_grad: p must be 1 or 2");
  if (H.size() == 0) throw InvalidArgument("lp_activity_loss_grad: empty H");
  const double count = static_cast<double>(H.size());
  LossGrad out;
  if (p == 1) {
    out.loss = H.cwiseAbs().sum() / count;
    out.grad = (H.array().sign() / count).matrix();
  } else {
    out.loss = H.squaredNorm() / count;
    out.grad = H * (2.0 / count);
  }
  return out;
}

struct RowNormalized {
  Matrix Hn;
  Vector norms;
  int degenerate_rows = 0;  // rows left unnormalized because their norm was < 1e-12
};

inline constexpr double kMinRowNorm = 1e-12;

inline RowNormalized row_normalize(const Matrix& H) {
  RowNormalized out;
  out.Hn = H;
  out.norms = H.rowwise().norm();
  for (Eigen::Index j = 0; j < H.rows(); ++j) {
    if (out.norms(j) < kMinRowNorm)
      ++out.degenerate_rows;
    else
      out.Hn.row(j) /= out.norms(j);
  }
  return out;
}

// dH = (dHn - Hn (Hn . dHn)) / |h| per row; degenerate rows get zero gradient.
inline Matrix row_normalize_backward(const RowNormalized& rn, const Matrix& dHn) {
  require_same_shape(rn.Hn, dHn, "row_normalize_backward");
  Matrix dH(dHn.rows(), dHn.cols());
  for (Eigen::Index j = 0; j < dHn.rows(); ++j) {
    if (rn.norms(j) < kMinRowNorm) {
      dH.row(j).setZero();
      continue;
    }
    const double proj = rn.Hn.row(j).dot(dHn.row(j));
    dH.row(j) = (dHn.row(j) - proj * rn.Hn.row(j)) / rn.norms(j);
  }
  return dH;
}

struct RowNormalizeGrad {
  RowNormalized normalized;
  Matrix dH;
};

inline RowNormalizeGrad row_normalize_grad(const Matrix& H, const Matrix& upstream) {
  RowNormalizeGrad out{row_normalize(H), {}};
  out.dH = row_normalize_backward(out.normalized, upstream);
  return out;
}

// lambda * penalty(H), with optional row normalization in front of the penalty.
inline LossGrad regularize(const Matrix& H, const RegConfig& cfg) {
  if (cfg.lambda < 0) throw InvalidArgument("regularizer lambda must be non-negative");
  if (cfg.kind == RegKind::none || cfg.lambda == 0.0) return {0.0, Matrix::Zero(H.rows(), H.cols())};

  RowNormalized rn;
  const Matrix* target = &H;
  if (cfg.row_normalize) {
    rn = row_normalize(H);
    target = &rn.Hn;
  }
  LossGrad inner;
  switch (cfg.kind) {
    case RegKind::ovr: inner = ovr_loss_grad(*target, cfg.include_diagonal); break;
    case RegKind::l1_activity: inner = lp_activity_loss_grad(*target, 1); break;
    case RegKind::l2_activity: inner = lp_activity_loss_grad(*target, 2); break;
    case RegKind::none: break;
  }
  LossGrad out;
  out.loss = cfg.lambda * inner.loss;
  out.grad = cfg.lambda * (cfg.row_normalize ? row_normalize_backward(rn, inner.grad) : inner.grad);
  return out;
}

}  // namespace ovr
