#pragma once

// Representation metrics, the logistic probe and MacQueen online k-means.

#include "ovr/common.hpp"
#include "ovr/datasets.hpp"
#include "ovr/network.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ovr {

struct SparsityReport {
  double mean_sparsity = 0.0;
  std::vector<double> per_sample_sparsity;
  double tau = 0.0;
  double mean_activation = 0.0;
};

// Fraction of units at or below tau, per sample and averaged.
inline SparsityReport sparsity(const Matrix& H, double tau) {
  if (H.size() == 0) throw InvalidArgument("sparsity: empty H");
  if (tau < 0) throw InvalidArgument("sparsity: tau must be non-negative");
  SparsityReport r;
  r.tau = tau;
  r.per_sample_sparsity.resize(static_cast<std::size_t>(H.rows()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < H.rows(); ++i) {
    const double s = (H.row(i).array() <= tau).cast<double>().mean();
    r.per_sample_sparsity[static_cast<std::size_t>(i)] = s;
    total += s;
  }
  r.mean_sparsity = total / static_cast<double>(H.rows());
  r.mean_activation = H.mean();
  return r;
}

struct ActiveSet {
  std::vector<Eigen::Index> indices;  // strictly increasing
};

inline ActiveSet active_set(const RowVector& h, double tau) {
  ActiveSet s;
  for (Eigen::Index k = 0; k < h.size(); ++k)
    if (h(k) > tau) s.indices.push_back(k);
  return s;
}

struct Overlap {
  ActiveSet a;
  ActiveSet b;
  std::size_t overlap_count = 0;
};

inline Overlap active_set_overlap(const RowVector& h_a, const RowVector& h_b, double tau) {
  if (h_a.size() != h_b.size())
    throw ShapeError("active_set_overlap: lengths " + std::to_string(h_a.size()) + " and " +
                     std::to_string(h_b.size()));
  Overlap o{active_set(h_a, tau), active_set(h_b, tau), 0};
  std::vector<Eigen::Index> common;
  std::set_intersection(o.a.indices.begin(), o.a.indices.end(), o.b.indices.begin(), o.b.indices.end(),
                        std::back_inserter(common));
  o.overlap_count = common.size();
  return o;
}

// ---------------------------------------------------------------------------
// Logistic probe

struct ProbeConfig {
  int epochs = 100;
  double lr = 1e-3;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;  // best validation accuracy over epochs
  int best_epoch = -1;
  DenseLayer layer;
};

inline double accuracy(const Matrix& logits, const Labels& y) {
  if (y.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    hits += (arg == y[static_cast<std::size_t>(i)]);
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

inline ProbeResult train_logistic_probe_full(const Matrix& reps, const Labels& labels, const Matrix& val_reps,
                                             const Labels& val_labels, int class_count, const ProbeConfig& cfg) {
  if (static_cast<std::size_t>(reps.rows()) != labels.size() ||
      static_cast<std::size_t>(val_reps.rows()) != val_labels.size() || reps.cols() != val_reps.cols())
    throw ShapeError("train_logistic_probe: inconsistent shapes");
  if (reps.rows() == 0 || val_reps.rows() == 0) throw InvalidArgument("train_logistic_probe: empty split");
  if (class_count <= 0) throw InvalidArgument("train_logistic_probe: class_count must be positive");
  for (int y : labels)
    if (y < 0 || y >= class_count) throw InvalidArgument("train_logistic_probe: label out of range");
  for (int y : val_labels)
    if (y < 0 || y >= class_count) throw InvalidArgument("train_logistic_probe: validation label out of range");
  if (std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels.front(); }))
    throw InvalidArgument("train_logistic_probe: training set has a single class (" +
                          std::to_string(labels.front()) + "); a probe is meaningless");

  Rng init_rng(mix_seed(cfg.seed, 7));
  ProbeResult best;
  DenseLayer layer = make_dense(reps.cols(), class_count, Activation::identity, init_rng, "probe");
  LayerAdam adam;
  const auto bs = std::min<Eigen::Index>(cfg.batch_size, reps.rows());
  best.accuracy = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : batch_plan(reps.rows(), bs, mix_seed(cfg.seed, 11), static_cast<std::uint64_t>(epoch))) {
      const Matrix X = gather_rows(reps, idx);
      const Labels y = gather_labels(labels, idx);
      const HiddenBatch hb = dense_forward(layer, X);
      const LossGrad ce = softmax_ce_loss_grad(hb.H, y);
      const DenseGrads g = backprop_dense(layer, X, hb, ce.grad);
      apply_adam(layer, adam, g.dW, g.db, cfg.lr);
    }
    const double acc = accuracy(dense_forward(layer, val_reps).H, val_labels);
    if (acc > best.accuracy) {
      best.accuracy = acc;
      best.best_epoch = epoch;
      best.layer = layer;
    }
  }
  if (cfg.epochs == 0) {
    best.accuracy = accuracy(dense_forward(layer, val_reps).H, val_labels);
    best.layer = layer;
  }
  return best;
}

inline double train_logistic_probe(const Matrix& reps, const Labels& labels, const Matrix& val_reps,
                                   const Labels& val_labels, int class_count, const ProbeConfig& cfg = {}) {
  return train_logistic_probe_full(reps, labels, val_reps, val_labels, class_count, cfg).accuracy;
}

// ---------------------------------------------------------------------------
// Online k-means

struct KMeansModel {
  Matrix centroids;
  std::vector<std::int64_t> counts;
};

inline Eigen::Index nearest_centroid(const Matrix& centroids, const RowVector& x) {
  Eigen::Index best = 0;
  (centroids.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
  return best;
}

// MacQueen: the first k points of the seeded order seed the centroids (count 1),
// the remaining points of the first pass and all points of later passes move
// their nearest centroid by (x - c) / count.
inline KMeansModel kmeans_fit(const Matrix& X, int k, int epochs, std::uint64_t seed) {
  if (k <= 0 || k > X.rows())
    throw InvalidArgument("kmeans_fit: k=" + std::to_string(k) + " must be in [1, " + std::to_string(X.rows()) + "]");
  if (epochs < 1) throw InvalidArgument("kmeans_fit: epochs must be at least 1");
  KMeansModel m;
  m.centroids.resize(k, X.cols());
  m.counts.assign(static_cast<std::size_t>(k), 1);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    std::size_t start = 0;
    if (epoch == 0) {
      for (int c = 0; c < k; ++c) m.centroids.row(c) = X.row(order[static_cast<std::size_t>(c)]);
      start = static_cast<std::size_t>(k);
    }
    for (std::size_t i = start; i < order.size(); ++i) {
      const RowVector x = X.row(order[i]);
      const Eigen::Index c = nearest_centroid(m.centroids, x);
      const auto count = ++m.counts[static_cast<std::size_t>(c)];
      m.centroids.row(c) += (x - m.centroids.row(c)) / static_cast<double>(count);
    }
  }
  return m;
}

enum class KMeansEncoding { triangle, hard };

inline KMeansEncoding parse_kmeans_encoding(std::string_view s) {
  if (s == "triangle") return KMeansEncoding::triangle;
  if (s == "hard") return KMeansEncoding::hard;
  throw InvalidArgument("unknown k-means encoding '" + std::string(s) + "'");
}

inline Matrix kmeans_encode(const KMeansModel& m, const Matrix& X, KMeansEncoding mode) {
  if (X.cols() != m.centroids.cols())
    throw ShapeError("kmeans_encode: input has " + std::to_string(X.cols()) + " columns, centroids have " +
                     std::to_string(m.centroids.cols()));
  const Eigen::Index k = m.centroids.rows();
  Matrix out = Matrix::Zero(X.rows(), k);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector z = (m.centroids.rowwise() - X.row(i)).rowwise().norm();
    if (mode == KMeansEncoding::hard) {
      Eigen::Index arg = 0;
      z.minCoeff(&arg);
      out(i, arg) = 1.0;
    } else {
      out.row(i) = (z.mean() - z.array()).cwiseMax(0.0).matrix().transpose();
    }
  }
  return out;
}

}  // namespace ovr
