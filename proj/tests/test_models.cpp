#include "ovr/models.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ovr;

namespace {

Matrix fd_param(const std::function<double()>& loss, Matrix& param) {
  return oracle::central_diff(
      [&](const Matrix& p) {
        const Matrix keep = param;
        param = p;
        const double v = loss();
        param = keep;
        return v;
      },
      Matrix(param));
}

Matrix fd_param(const std::function<double()>& loss, Vector& param) {
  return oracle::central_diff(
      [&](const Matrix& p) {
        const Vector keep = param;
        param = p;
        const double v = loss();
        param = keep;
        return v;
      },
      Matrix(param));
}

const std::vector<RegConfig> kRegs = {
    {RegKind::none, 0.0, false, false},       {RegKind::ovr, 0.05, false, false},
    {RegKind::ovr, 0.05, true, true},         {RegKind::l1_activity, 0.1, false, false},
    {RegKind::l2_activity, 0.1, false, true},
};

bool near_kink(const Matrix& A, Activation act) { return act == Activation::relu && (A.array().abs() < 1e-4).any(); }

}  // namespace

TEST(MlpObjective, FiniteDifferences) {
  std::mt19937_64 gen(1);
  int checked = 0;
  for (int t = 0; t < 30; ++t) {
    const Matrix X = oracle::random_matrix(gen, 3, 4);
    const Labels y{0, 1, t % 2};
    const Activation act = t % 2 ? Activation::sigmoid : Activation::relu;
    Mlp net = init_mlp(4, 5, 2, act, static_cast<std::uint64_t>(t));
    net.hidden.b = oracle::random_matrix(gen, 5, 1, -0.3, 0.3);
    const HiddenBatch h = dense_forward(net.hidden, X);
    if (near_kink(h.A, act)) continue;
    // L1 has a kink at zero activations, which relu produces; skip that pairing.
    for (const auto& reg : kRegs) {
      if (act == Activation::relu && reg.kind == RegKind::l1_activity) continue;
      if (reg.row_normalize && (h.H.rowwise().norm().array() < 1e-6).any()) continue;
      Masks masks;
      if (t % 3 == 0) {
        Rng r(static_cast<std::uint64_t>(t));
        masks.input = dropout_mask(3, 4, 0.3, r, true);
        masks.hidden = dropout_mask(3, 5, 0.3, r, true);
      }
      const auto g = mlp_loss_grad(net, X, y, reg, masks);
      auto loss = [&] { return mlp_loss_grad(net, X, y, reg, masks).loss; };
      EXPECT_LT(oracle::rel_error(g.dW1, fd_param(loss, net.hidden.W)), 1e-4);
      EXPECT_LT(oracle::rel_error(Matrix(g.db1), fd_param(loss, net.hidden.b)), 1e-4);
      EXPECT_LT(oracle::rel_error(g.dW2, fd_param(loss, net.output.W)), 1e-4);
      EXPECT_LT(oracle::rel_error(Matrix(g.db2), fd_param(loss, net.output.b)), 1e-4);
      ++checked;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(AutoencoderObjective, FiniteDifferences) {
  std::mt19937_64 gen(2);
  int checked = 0;
  for (int t = 0; t < 24; ++t) {
    const Matrix X = oracle::random_matrix(gen, 4, 3, 0, 1);
    const Matrix input = t % 4 == 0 ? corrupt_input(X, 0.3, static_cast<std::uint64_t>(t)) : X;
    const bool tied = t % 2 == 1;
    Autoencoder ae = init_autoencoder(3, 4, Activation::sigmoid, t % 3 ? Activation::sigmoid : Activation::identity,
                                      tied, static_cast<std::uint64_t>(t));
    for (const auto& reg : kRegs) {
      if (reg.kind == RegKind::l1_activity) continue;
      const auto g = autoencoder_loss_grad(ae, input, X, reg);
      auto loss = [&] {
        Autoencoder c = ae;
        if (tied) c.decoder.W = c.encoder.W.transpose();
        return autoencoder_loss_grad(c, input, X, reg).loss;
      };
      EXPECT_LT(oracle::rel_error(g.dW1, fd_param(loss, ae.encoder.W)), 1e-4);
      EXPECT_LT(oracle::rel_error(Matrix(g.db1), fd_param(loss, ae.encoder.b)), 1e-4);
      EXPECT_LT(oracle::rel_error(Matrix(g.db2), fd_param(loss, ae.decoder.b)), 1e-4);
      if (!tied) {
        EXPECT_LT(oracle::rel_error(g.dW2, fd_param(loss, ae.decoder.W)), 1e-4);
      }
      ++checked;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(Autoencoder, TiedDecoderIsTranspose) {
  const auto ae = init_autoencoder(5, 3, Activation::relu, Activation::identity, true, 1);
  EXPECT_EQ(effective_decoder(ae).W, ae.encoder.W.transpose());
}

TEST(Autoencoder, OutputActivationDefault) {
  EXPECT_EQ(default_output_activation(Matrix::Constant(2, 2, 0.5)), Activation::sigmoid);
  EXPECT_EQ(default_output_activation(Matrix::Constant(2, 2, -0.5)), Activation::identity);
}

namespace {

std::pair<LabeledDataset, LabeledDataset> sphere_split(int points, std::uint64_t seed) {
  SpherePartitionSpec spec;
  spec.num_points = points;
  spec.seed = seed;
  const auto d = generate_sphere_dataset(spec);
  const auto cut = points * 4 / 5;
  return {slice_rows(d, 0, cut), slice_rows(d, cut, points)};
}

}  // namespace

TEST(TrainMlp, LearnsSphereAndSelectsBestEpoch) {
  const auto [train, val] = sphere_split(2000, 1);
  TrainConfig c;
  c.epochs = 20;
  c.lr = 0.01;
  int calls = 0;
  const auto r = train_mlp(c, train, val, [&](const EpochStats&, const Mlp&) { ++calls; });
  EXPECT_EQ(calls, 20);
  double best = 1e300;
  for (const auto& e : r.history) best = std::min(best, e.val_loss);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch)].val_loss, best);
  EXPECT_GT(accuracy(mlp_logits(r.net, val.X), val.y), 0.5);
}

TEST(TrainMlp, Deterministic) {
  const auto [train, val] = sphere_split(400, 2);
  TrainConfig c;
  c.epochs = 3;
  c.input_dropout = 0.1;
  c.hidden_dropout = 0.2;
  c.reg = {RegKind::ovr, 1e-4, false, true};
  EXPECT_EQ(train_mlp(c, train, val).net.hidden.W, train_mlp(c, train, val).net.hidden.W);
}

TEST(TrainAutoencoder, ReducesReconstructionError) {
  const auto [train, val] = sphere_split(1000, 3);
  for (bool tied : {false, true}) {
    TrainConfig c;
    c.hidden_units = 16;
    c.epochs = 15;
    c.lr = 0.01;
    c.tied = tied;
    c.input_dropout = 0.2;
    const auto r = train_autoencoder(c, train, val);
    EXPECT_LT(r.history.back().val_loss, r.history.front().val_loss);
    if (tied) {
      EXPECT_EQ(r.net.decoder.W, r.net.encoder.W.transpose());
    }
  }
}
