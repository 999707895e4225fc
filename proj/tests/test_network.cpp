#include "ovr/network.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ovr;

namespace {

DenseLayer layer_with(const Matrix& W, const Vector& b, Activation act) {
  DenseLayer l;
  l.W = W;
  l.b = b;
  l.activation = act;
  return l;
}

}  // namespace

TEST(Dense, SigmoidOfZeroIsHalf) {
  const auto l = layer_with(Matrix::Zero(3, 2), Vector::Zero(3), Activation::sigmoid);
  const auto hb = dense_forward(l, Matrix::Ones(4, 2));
  EXPECT_TRUE(hb.H.isApproxToConstant(0.5));
  EXPECT_EQ(hb.H.rows(), 4);
  EXPECT_EQ(hb.H.cols(), 3);
}

TEST(Dense, IdentityLayerIsIdentity) {
  std::mt19937_64 gen(1);
  const Matrix X = oracle::random_matrix(gen, 5, 3);
  const auto l = layer_with(Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity);
  EXPECT_EQ(dense_forward(l, X).H, X);
}

TEST(Dense, Relu) {
  Matrix A(1, 2);
  A << -1, 2;
  Matrix H;
  apply_activation(Activation::relu, A, H);
  EXPECT_EQ(H(0, 0), 0.0);
  EXPECT_EQ(H(0, 1), 2.0);
}

TEST(Dense, ShapeMismatchThrows) {
  const auto l = layer_with(Matrix::Zero(3, 2), Vector::Zero(3), Activation::relu);
  EXPECT_THROW(dense_forward(l, Matrix::Zero(1, 4)), ShapeError);
}

TEST(Dense, NonFiniteInputThrows) {
  const auto l = layer_with(Matrix::Ones(1, 1), Vector::Zero(1), Activation::identity);
  Matrix X(1, 1);
  X(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(dense_forward(l, X), NumericError);
}

TEST(Dense, GlorotBounds) {
  Rng rng(3);
  const auto l = make_dense(30, 20, Activation::relu, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  EXPECT_LE(l.W.cwiseAbs().maxCoeff(), limit);
  EXPECT_TRUE(l.b.isZero(0));
}

TEST(Mse, Basics) {
  Matrix Y = Matrix::Ones(2, 2);
  const auto same = mse_loss_grad(Y, Y);
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_TRUE(same.grad.isZero(0));

  Matrix Yh(1, 2), Z = Matrix::Zero(1, 2);
  Yh << 1, 0;
  const auto r = mse_loss_grad(Yh, Z);
  EXPECT_DOUBLE_EQ(r.loss, 0.5);
  EXPECT_DOUBLE_EQ(r.grad(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.grad(0, 1), 0.0);
}

TEST(Mse, FiniteDifferences) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix Yh = oracle::random_matrix(gen, 4, 3), Y = oracle::random_matrix(gen, 4, 3);
    const Matrix fd = oracle::central_diff([&](const Matrix& m) { return mse_loss_grad(m, Y).loss; }, Yh);
    EXPECT_LT(oracle::rel_error(mse_loss_grad(Yh, Y).grad, fd), 1e-6);
  }
}

TEST(SoftmaxCe, UniformLogits) {
  const std::vector<int> y{0, 3, 2};
  const auto r = softmax_ce_loss_grad(Matrix::Constant(3, 5, 0.7), y);
  EXPECT_NEAR(r.loss, std::log(5.0), 1e-12);
}

TEST(SoftmaxCe, GradRowsSumToZero) {
  std::mt19937_64 gen(3);
  const Matrix L = oracle::random_matrix(gen, 6, 4, -5, 5);
  const std::vector<int> y{0, 1, 2, 3, 0, 1};
  const auto r = softmax_ce_loss_grad(L, y);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(r.grad.row(i).sum(), 0.0, 1e-12);
}

TEST(SoftmaxCe, FiniteDifferences) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix L = oracle::random_matrix(gen, 5, 4, -3, 3);
    const std::vector<int> y{t % 4, 1, 3, 0, 2};
    const Matrix fd = oracle::central_diff([&](const Matrix& m) { return softmax_ce_loss_grad(m, y).loss; }, L);
    EXPECT_LT(oracle::rel_error(softmax_ce_loss_grad(L, y).grad, fd), 1e-6);
  }
}

TEST(SoftmaxCe, LargeLogitsStayFinite) {
  Matrix L(1, 2);
  L << 1000, -1000;
  const std::vector<int> y{1};
  const auto r = softmax_ce_loss_grad(L, y);
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
  EXPECT_TRUE(softmax_rows(L).allFinite());
}

TEST(SoftmaxCe, BadLabel) {
  const std::vector<int> y{4};
  EXPECT_THROW(softmax_ce_loss_grad(Matrix::Zero(1, 3), y), InvalidArgument);
}

TEST(Backprop, ZeroUpstreamGivesZero) {
  Rng rng(5);
  const auto l = make_dense(3, 2, Activation::sigmoid, rng);
  const Matrix X = Matrix::Ones(4, 3);
  const auto hb = dense_forward(l, X);
  const auto g = backprop_dense(l, X, hb, Matrix::Zero(4, 2));
  EXPECT_TRUE(g.dW.isZero(0));
  EXPECT_TRUE(g.db.isZero(0));
  EXPECT_TRUE(g.dX.isZero(0));
}

TEST(Backprop, SingleSampleOuterProduct) {
  std::mt19937_64 gen(6);
  const auto l = layer_with(oracle::random_matrix(gen, 2, 3), Vector::Zero(2), Activation::identity);
  const Matrix x = oracle::random_matrix(gen, 1, 3), dh = oracle::random_matrix(gen, 1, 2);
  const auto g = backprop_dense(l, x, dense_forward(l, x), dh);
  EXPECT_TRUE(g.dW.isApprox(dh.transpose() * x, 1e-14));
}

TEST(Backprop, TwoLayerNetworkFiniteDifferences) {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 20; ++t) {
    const Matrix X = oracle::random_matrix(gen, 3, 4);
    const std::vector<int> y{0, 1, t % 2};
    for (Activation act : {Activation::sigmoid, Activation::relu, Activation::identity}) {
      const auto l1 = layer_with(oracle::random_matrix(gen, 4, 4), oracle::random_matrix(gen, 4, 1), act);
      const auto l2 =
          layer_with(oracle::random_matrix(gen, 2, 4), oracle::random_matrix(gen, 2, 1), Activation::identity);
      auto loss_for = [&](const DenseLayer& a, const DenseLayer& b) {
        return softmax_ce_loss_grad(dense_forward(b, dense_forward(a, X).H).H, y).loss;
      };
      const auto h1 = dense_forward(l1, X);
      const auto h2 = dense_forward(l2, h1.H);
      const auto ce = softmax_ce_loss_grad(h2.H, y);
      const auto g2 = backprop_dense(l2, h1.H, h2, ce.grad);
      const auto g1 = backprop_dense(l1, X, h1, g2.dX);

      const Matrix fdW1 = oracle::central_diff(
          [&](const Matrix& W) {
            auto c = l1;
            c.W = W;
            return loss_for(c, l2);
          },
          l1.W);
      const Matrix fdb1 = oracle::central_diff(
          [&](const Matrix& b) {
            auto c = l1;
            c.b = b;
            return loss_for(c, l2);
          },
          Matrix(l1.b));
      const Matrix fdW2 = oracle::central_diff(
          [&](const Matrix& W) {
            auto c = l2;
            c.W = W;
            return loss_for(l1, c);
          },
          l2.W);
      // Relu kinks make finite differences meaningless right at A = 0.
      if (act == Activation::relu && (h1.A.array().abs() < 1e-4).any()) continue;
      EXPECT_LT(oracle::rel_error(g1.dW, fdW1), 1e-5);
      EXPECT_LT(oracle::rel_error(Matrix(g1.db), fdb1), 1e-5);
      EXPECT_LT(oracle::rel_error(g2.dW, fdW2), 1e-5);
    }
  }
}

TEST(Adam, ZeroGradientKeepsParameter) {
  AdamState s;
  Vector p = Vector::Constant(3, 1.5);
  adam_step(s, p, Vector::Zero(3).eval(), 0.1);
  EXPECT_TRUE(p.isApproxToConstant(1.5));
}

TEST(Adam, FirstStepMatchesScalarReference) {
  AdamState s;
  Vector p = Vector::Zero(1);
  Vector g = Vector::Ones(1);
  adam_step(s, p, g, 0.001);
  oracle::ScalarAdam ref;
  EXPECT_NEAR(p(0), ref.step(0.0, 1.0, 0.001), 1e-15);
  EXPECT_NEAR(p(0), -0.001, 1e-10);
}

TEST(Adam, TracksScalarReferenceOverManySteps) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  AdamState s;
  Vector p = Vector::Constant(1, 0.3);
  oracle::ScalarAdam ref;
  double q = 0.3;
  for (int t = 0; t < 200; ++t) {
    const double g = nd(gen);
    Vector gv = Vector::Constant(1, g);
    adam_step(s, p, gv, 0.01);
    q = ref.step(q, g, 0.01);
    ASSERT_NEAR(p(0), q, 1e-14);
  }
}

TEST(Adam, IdenticalGradsIdenticalUpdates) {
  AdamState s;
  Vector p = Vector::Zero(2);
  Vector g(2);
  g << 0.4, 0.4;
  for (int i = 0; i < 5; ++i) adam_step(s, p, g, 0.01);
  EXPECT_EQ(p(0), p(1));
}

TEST(Adam, NonFiniteGradientThrows) {
  AdamState s;
  Vector p = Vector::Zero(1);
  Vector g = Vector::Constant(1, std::nan(""));
  EXPECT_THROW(adam_step(s, p, g, 0.01), NumericError);
}

TEST(Plateau, DecreasingLossKeepsRate) {
  PlateauScheduler s;
  double lr = 0.1;
  for (int e = 0; e < 20; ++e) lr = plateau_schedule(s, 1.0 / (e + 1), lr);
  EXPECT_EQ(lr, 0.1);
}

TEST(Plateau, ConstantLossHalvesOnce) {
  PlateauScheduler s;
  double lr = 0.1;
  lr = plateau_schedule(s, 1.0, lr);  // first epoch sets the baseline
  for (int e = 0; e < s.patience; ++e) lr = plateau_schedule(s, 1.0, lr);
  EXPECT_EQ(lr, 0.1);
  lr = plateau_schedule(s, 1.0, lr);
  EXPECT_EQ(lr, 0.05);
}

TEST(Plateau, TinyImprovementCountsAsStall) {
  PlateauScheduler s;
  double lr = 1.0;
  double loss = 1.0;
  lr = plateau_schedule(s, loss, lr);
  for (int e = 0; e <= s.patience; ++e) {
    loss *= 1.0 - 1e-5;
    lr = plateau_schedule(s, loss, lr);
  }
  EXPECT_EQ(lr, 0.5);
}

TEST(Dropout, ZeroRatioIsIdentity) {
  std::mt19937_64 gen(9);
  const Matrix X = oracle::random_matrix(gen, 4, 4);
  EXPECT_EQ(corrupt_input(X, 0.0, 1), X);
}

TEST(Dropout, HalfRatioConcentrates) {
  const Matrix X = Matrix::Ones(100, 1000);
  const Matrix Y = corrupt_input(X, 0.5, 42);
  const double zero_fraction = (Y.array() == 0.0).cast<double>().mean();
  EXPECT_NEAR(zero_fraction, 0.5, 0.01);
  EXPECT_TRUE(((Y.array() == 0.0) || (Y.array() == 1.0)).all());
}

TEST(Dropout, InvertedScalesSurvivors) {
  Rng rng(1);
  const Matrix m = dropout_mask(50, 50, 0.2, rng, true);
  EXPECT_TRUE(((m.array() == 0.0) || (m.array() == 1.25)).all());
}

TEST(Dropout, SameSeedSameMask) {
  const Matrix X = Matrix::Ones(20, 20);
  EXPECT_EQ(corrupt_input(X, 0.3, 7), corrupt_input(X, 0.3, 7));
  EXPECT_THROW(corrupt_input(X, 1.0, 7), InvalidArgument);
}

TEST(Rng, Deterministic) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(c.below(7), 7u);
  }
}
