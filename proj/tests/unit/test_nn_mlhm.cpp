#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"
#include "headstrain/mlhm.hpp"
#include "off_kinks.hpp"

using namespace headstrain;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Linear target with small noise.
std::pair<Matrix, Matrix> linear_problem(std::uint64_t seed, Eigen::Index n = 400) {
  Rng rng(seed);
  const Matrix x = random_matrix(rng, n, 6);
  const Matrix w = random_matrix(rng, 6, 3);
  Matrix y = x * w;
  y += 0.01 * random_matrix(rng, n, 3);
  return {x, y};
}

}  // namespace

TEST(DenseNet, ForwardMatchesManualComputation) {
  Rng rng(1);
  DenseNet net = DenseNet::make(3, {{4, Activation::ReLU, 0.0}}, 2, Activation::Linear, rng);
  const Matrix x = random_matrix(rng, 3, 5);
  const auto& l = net.layers();
  const Matrix h = ((l[0].weight * x).colwise() + l[0].bias).cwiseMax(0.0);
  const Matrix expect = (l[1].weight * h).colwise() + l[1].bias;
  EXPECT_LT((net.forward(x) - expect).norm(), 1e-14);
  EXPECT_EQ(net.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
}

TEST(DenseNet, SigmoidOutputIsBounded) {
  Rng rng(2);
  DenseNet net = DenseNet::make(4, {{8, Activation::ReLU, 0.0}}, 1, Activation::Sigmoid, rng);
  const Matrix out = net.forward(100.0 * random_matrix(rng, 4, 50));
  EXPECT_GE(out.minCoeff(), 0.0);
  EXPECT_LE(out.maxCoeff(), 1.0);
}

TEST(DenseNet, ResidualAddsInput) {
  Rng rng(3);
  DenseNet net = DenseNet::make(3, {{5, Activation::ReLU, 0.0}}, 3, Activation::Linear, rng);
  const Matrix x = random_matrix(rng, 3, 4);
  const Matrix plain = net.forward(x);
  net.set_residual(true);
  EXPECT_LT((net.forward(x) - plain - x).norm(), 1e-14);
  DenseNet mismatched = DenseNet::make(3, {}, 2, Activation::Linear, rng);
  EXPECT_THROW(mismatched.set_residual(true), DimensionError);
}

TEST(DenseNet, InputGradientMatchesFiniteDifference) {
  Rng rng(4);
  DenseNet net = DenseNet::make(4, {{6, Activation::ReLU, 0.0}, {5, Activation::ReLU, 0.0}}, 2, Activation::Sigmoid, rng);
  net.set_residual(false);
  const Matrix x = random_matrix(rng, 4, 1);
  const Matrix g_out = (Matrix(2, 1) << 0.7, -1.3).finished();
  Matrix g_in;
  net.backward(net.forward_train(x, nullptr), g_out, &g_in);
  for (Eigen::Index i = 0; i < 4; ++i) {
    Matrix up = x, down = x;
    up(i, 0) += 1e-6;
    down(i, 0) -= 1e-6;
    const double fd = (g_out.transpose() * (net.forward(up) - net.forward(down))).value() / 2e-6;
    EXPECT_NEAR(g_in(i, 0), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(DenseNet, JsonRoundTrip) {
  Rng rng(5);
  DenseNet net = DenseNet::make(3, {{4, Activation::ReLU, 0.25}}, 2, Activation::Sigmoid, rng);
  const DenseNet back = DenseNet::from_json(net.to_json());
  const Matrix x = random_matrix(rng, 3, 3);
  EXPECT_TRUE(back.forward(x) == net.forward(x));
  EXPECT_EQ(back.layers()[0].dropout, 0.25);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Rng init(6);
  // Dropout feeds the linear output layer directly, so the expectation is exact.
  MlhmModel model = init_mlhm(MlhmArch{5, {{32, Activation::ReLU, 0.0}, {16, Activation::ReLU, 0.3}}, 3}, 6);
  // Shift the output so relative tolerances are meaningful.
  model.net.layers().back().bias.setConstant(5.0);
  Rng rng(7);
  const Matrix x = random_matrix(rng, 1, 5);
  const Matrix ref = predict(model, x);
  Matrix acc = Matrix::Zero(1, 3);
  const int passes = 10000;
  for (int i = 0; i < passes; ++i) acc += predict_train_mode(model, x, rng);
  acc /= passes;
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(acc(0, k), ref(0, k), 0.02 * std::abs(ref(0, k)));
}

TEST(GradientCheck, SingleLinearLayerClosedForm) {
  MlhmModel model = init_mlhm(MlhmArch{3, {}, 2}, 1);
  Rng rng(8);
  const Vector x = random_matrix(rng, 3, 1);
  const Vector y = random_matrix(rng, 2, 1);
  const double l2 = 0.01;
  const auto& layer = model.net.layers()[0];
  const Vector r = layer.weight * x + layer.bias - y;
  const Matrix expect_w = 2.0 * r * x.transpose() + 2.0 * l2 * layer.weight;
  const Gradients g = mlhm_gradients(model.net, x.transpose(), y.transpose(), l2);
  EXPECT_LT((g.weight[0] - expect_w).norm(), 1e-12);
  EXPECT_LT((g.bias[0] - 2.0 * r).norm(), 1e-12);
  EXPECT_LT(gradient_check(model, x, y, l2, 1e-5), 1e-8);
}

TEST(GradientCheck, L2TermIsExactlyTwoLambdaW) {
  MlhmModel model = init_mlhm(MlhmArch{4, {{8, Activation::ReLU, 0.0}}, 2}, 2);
  Rng rng(9);
  const Matrix x = random_matrix(rng, 3, 4), y = random_matrix(rng, 3, 2);
  const Gradients g0 = mlhm_gradients(model.net, x, y, 0.0);
  const Gradients g1 = mlhm_gradients(model.net, x, y, 0.05);
  for (std::size_t l = 0; l < g0.weight.size(); ++l) {
    EXPECT_LT((g1.weight[l] - g0.weight[l] - 0.1 * model.net.layers()[l].weight).norm(), 1e-14);
    EXPECT_TRUE(g1.bias[l] == g0.bias[l]);
  }
}

TEST(GradientCheck, ReluNetworksPassAcrossArchitectures) {
  for (std::size_t depth = 1; depth <= 3; ++depth)
    for (std::size_t width : {4u, 16u, 64u})
      for (double l2 : {0.0, 1e-3}) {
        std::vector<LayerSpec> hidden(depth, LayerSpec{width, Activation::ReLU, 0.0});
        MlhmModel model = init_mlhm(MlhmArch{8, hidden, 4}, depth * 100 + width);
        Rng rng(depth * 1000 + width);
        const Vector x = random_matrix(rng, 8, 1);
        const Vector y = random_matrix(rng, 4, 1);
        testutil::move_off_kinks(model, x, 0.05);
        EXPECT_LT(gradient_check(model, x, y, l2, 1e-4), 1e-4) << depth << "x" << width << " l2=" << l2;
      }
}

TEST(Mlhm, LearnsLinearTarget) {
  const auto [x, y] = linear_problem(10);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  cfg.lr = 3e-3;
  const MlhmModel m = train_mlhm(x, y, cfg, MlhmArch{6, {{32, Activation::ReLU, 0.0}}, 3});
  Matrix xv(static_cast<Eigen::Index>(m.val_rows.size()), 6), yv(static_cast<Eigen::Index>(m.val_rows.size()), 3);
  for (std::size_t i = 0; i < m.val_rows.size(); ++i) {
    xv.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(m.val_rows[i]));
    yv.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(m.val_rows[i]));
  }
  const double mae = (predict(m, xv) - yv).cwiseAbs().mean();
  const double ystd = std::sqrt((y.array() - y.mean()).square().mean());
  EXPECT_LT(mae, 0.1 * ystd);

  const auto& tl = m.history.train_loss;
  ASSERT_GT(tl.size(), 10u);
  std::size_t decreasing = 0;
  for (std::size_t i = 1; i < tl.size(); ++i) decreasing += tl[i] <= tl[i - 1];
  EXPECT_GE(static_cast<double>(decreasing), 0.95 * static_cast<double>(tl.size() - 1));
  EXPECT_LT(tl.back(), tl.front());
}

TEST(Mlhm, SplitsArePartition) {
  const auto [x, y] = linear_problem(11, 100);
  TrainConfig cfg;
  cfg.epochs = 1;
  const MlhmModel m = train_mlhm(x, y, cfg, MlhmArch::desk(6, 3));
  EXPECT_EQ(m.train_rows.size() + m.val_rows.size() + m.test_rows.size(), 100u);
  std::vector<int> seen(100, 0);
  for (const auto* rows : {&m.train_rows, &m.val_rows, &m.test_rows})
    for (std::size_t r : *rows) ++seen[r];
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Mlhm, DeterministicAndZeroEpochs) {
  const auto [x, y] = linear_problem(12, 120);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 99;
  const MlhmArch arch = MlhmArch::desk(6, 3);
  const MlhmModel a = train_mlhm(x, y, cfg, arch);
  const MlhmModel b = train_mlhm(x, y, cfg, arch);
  for (std::size_t l = 0; l < a.net.layers().size(); ++l)
    EXPECT_TRUE(a.net.layers()[l].weight == b.net.layers()[l].weight);
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
  cfg.epochs = 0;
  const MlhmModel z = train_mlhm(x, y, cfg, arch);
  EXPECT_TRUE(z.history.train_loss.empty());
  EXPECT_EQ(z.history.best_epoch, 0u);
}

TEST(Mlhm, EarlyStoppingHistoryMatchesEpochsRun) {
  const auto [x, y] = linear_problem(13, 150);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.early_stop_patience = 3;
  const MlhmModel m = train_mlhm(x, y, cfg, MlhmArch::desk(6, 3));
  EXPECT_EQ(m.history.train_loss.size(), m.history.val_loss.size());
  EXPECT_LE(m.history.best_epoch, m.history.val_loss.size());
  EXPECT_GE(m.history.best_epoch, 1u);
}

TEST(Mlhm, PredictIsPerRowAndRepeatable) {
  const auto [x, y] = linear_problem(14, 60);
  TrainConfig cfg;
  cfg.epochs = 3;
  const MlhmModel m = train_mlhm(x, y, cfg, MlhmArch::desk(6, 3));
  const Matrix p = predict(m, x);
  EXPECT_TRUE(predict(m, x) == p);
  const Matrix reversed = x.colwise().reverse();
  EXPECT_LT((predict(m, reversed).colwise().reverse() - p).norm(), 1e-12);
}

TEST(Mlhm, ZeroWeightsGiveBias) {
  MlhmModel m = init_mlhm(MlhmArch{3, {{4, Activation::ReLU, 0.0}}, 2}, 1);
  for (auto& l : m.net.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  m.net.layers().back().bias << 0.25, -1.0;
  const Matrix p = predict(m, Matrix::Ones(5, 3));
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_EQ(p(i, 0), 0.25);
    EXPECT_EQ(p(i, 1), -1.0);
  }
}

TEST(Mlhm, IsotropicScalingSharesOneScale) {
  Rng rng(15);
  Matrix x = random_matrix(rng, 80, 4);
  x.col(0) *= 10.0;
  const Matrix y = x.leftCols(2);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.input_scaling = InputScaling::Isotropic;
  const MlhmModel m = train_mlhm(x, y, cfg, MlhmArch::desk(4, 2));
  EXPECT_EQ(m.input_scale.minCoeff(), m.input_scale.maxCoeff());
  EXPECT_GT(m.input_scale(0), 5.0);
  EXPECT_EQ(input_scaling_from_string(to_string(InputScaling::Isotropic)), InputScaling::Isotropic);
  EXPECT_THROW(input_scaling_from_string("loose"), ConfigError);
}

TEST(Mlhm, Errors) {
  const auto [x, y] = linear_problem(16, 60);
  TrainConfig cfg;
  EXPECT_THROW(train_mlhm(x, y.topRows(10), cfg, MlhmArch::desk(6, 3)), DimensionError);
  EXPECT_THROW(train_mlhm(x.topRows(5), y.topRows(5), cfg, MlhmArch::desk(6, 3)), DimensionError);
  cfg.train_fraction = 0.9;
  EXPECT_THROW(train_mlhm(x, y, cfg, MlhmArch::desk(6, 3)), ConfigError);
  cfg = TrainConfig{};
  cfg.epochs = 5;
  Matrix huge = x;
  huge.col(0).setConstant(1.7e308);  // column statistics overflow
  EXPECT_THROW(train_mlhm(huge, y, cfg, MlhmArch::desk(6, 3)), DivergenceError);
  const MlhmModel m = init_mlhm(MlhmArch::desk(6, 3), 1);
  EXPECT_THROW(predict(m, Matrix::Zero(2, 5)), DimensionError);
}

TEST(Mlhm, JsonRoundTrip) {
  const auto [x, y] = linear_problem(17, 60);
  TrainConfig cfg;
  cfg.epochs = 2;
  MlhmModel m = train_mlhm(x, y, cfg, MlhmArch::desk(6, 3));
  m.input_space = "drca:00ff";
  m.input_fingerprint = 77;
  const MlhmModel back = MlhmModel::from_json(m.to_json());
  EXPECT_TRUE(predict(back, x) == predict(m, x));
  EXPECT_EQ(back.input_space, "drca:00ff");
  EXPECT_EQ(back.input_fingerprint, 77u);
  EXPECT_EQ(back.history.train_loss, m.history.train_loss);
  EXPECT_TRUE(back.arch == m.arch);
}
