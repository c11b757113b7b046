#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "lexicol/gcn.hpp"
#include "support/oracles.hpp"

using namespace lexicol;

namespace {

DenseMatrix random_dense(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  DenseMatrix m(r, c);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : m.data()) v = u(rng);
  return m;
}

void expect_rows_normalized(const DenseMatrix& p) {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
  }
}

ConvolutionMatrix identity_conv(std::size_t n) { return build_convolution_matrix(Graph::from_edges(n, {})); }

}  // namespace

TEST(Init, DeterministicShapesAndRange) {
  const auto a = init_model(1433, 16, 7, 3);
  const auto b = init_model(1433, 16, 7, 3);
  EXPECT_EQ(a.theta0, b.theta0);
  EXPECT_EQ(a.theta1, b.theta1);
  EXPECT_EQ(a.theta0.rows(), 1433u);
  EXPECT_EQ(a.theta0.cols(), 16u);
  EXPECT_EQ(a.theta1.rows(), 16u);
  EXPECT_EQ(a.theta1.cols(), 7u);
  EXPECT_NE(a.theta0, init_model(1433, 16, 7, 4).theta0);
  const double r0 = std::sqrt(6.0 / (1433 + 16)), r1 = std::sqrt(6.0 / (16 + 7));
  for (double v : a.theta0.data()) EXPECT_LE(std::abs(v), r0);
  for (double v : a.theta1.data()) EXPECT_LE(std::abs(v), r1);
  EXPECT_THROW(init_model(0, 1, 1, 0), ValidationError);
}

TEST(Init, EntriesCenteredOnZero) {
  // 1e5 draws of U(-r, r): the mean has standard deviation r / sqrt(3 * 1e5).
  const auto m = init_model(6250, 16, 1, 11);
  const double r = std::sqrt(6.0 / (6250 + 16));
  const auto data = m.theta0.data();
  const double mean = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
  EXPECT_EQ(data.size(), 100000u);
  EXPECT_LE(std::abs(mean), 3 * r / std::sqrt(3.0 * 1e5));
}

TEST(Forward, SingleNodeExample) {
  GcnModel m = init_model(1, 1, 1, 0);
  m.theta0(0, 0) = 3;
  m.theta1(0, 0) = 5;
  const auto x = SparseMatrix::from_dense(DenseMatrix(1, 1, 2.0));
  const auto res = forward(m, identity_conv(1), x);
  EXPECT_EQ(res.cache.logits(0, 0), 30.0);
  EXPECT_EQ(res.probabilities(0, 0), 1.0);
}

TEST(Forward, ZeroOutputWeightsGiveUniformRows) {
  std::mt19937_64 rng(1);
  auto m = init_model(5, 4, 3, 1);
  m.theta1 = DenseMatrix(4, 3);
  const auto g = oracle::random_graph(7, 0.4, rng);
  const auto res = forward(m, build_convolution_matrix(g), SparseMatrix::from_dense(random_dense(7, 5, rng)));
  for (double p : res.probabilities.data()) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Forward, NoDropoutMeansTrainEqualsEval) {
  std::mt19937_64 rng(2);
  const auto m = init_model(6, 4, 3, 2);
  const auto a = build_convolution_matrix(oracle::random_connected(9, 5, rng));
  const auto x = SparseMatrix::from_dense(random_dense(9, 6, rng));
  const auto eval = forward(m, a, x);
  const auto tr = forward(m, a, x, {true, 0.0, 99, 3});
  EXPECT_EQ(eval.probabilities, tr.probabilities);
  expect_rows_normalized(eval.probabilities);
}

TEST(Forward, DropoutIsInvertedAndKeyed) {
  std::mt19937_64 rng(3);
  const auto m = init_model(20, 8, 3, 3);
  const auto a = build_convolution_matrix(oracle::random_connected(30, 20, rng));
  const auto x = SparseMatrix::from_dense(random_dense(30, 20, rng, 0.5, 1.0));
  const auto one = forward(m, a, x, {true, 0.5, 7, 0});
  EXPECT_EQ(one.probabilities, forward(m, a, x, {true, 0.5, 7, 0}).probabilities);
  EXPECT_NE(one.probabilities, forward(m, a, x, {true, 0.5, 7, 1}).probabilities);
  EXPECT_NE(one.probabilities, forward(m, a, x, {true, 0.5, 8, 0}).probabilities);
  std::size_t kept = 0;
  const auto dense = one.cache.x_dropped.to_dense();
  const auto orig = x.to_dense();
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense.data()[i] == 0.0) continue;
    ++kept;
    EXPECT_DOUBLE_EQ(dense.data()[i], 2.0 * orig.data()[i]);
  }
  EXPECT_NEAR(static_cast<double>(kept) / 600.0, 0.5, 0.1);
  for (double s : one.cache.hidden_mask.data()) EXPECT_TRUE(s == 0.0 || s == 2.0);
  expect_rows_normalized(one.probabilities);
}

TEST(Forward, ShapeErrors) {
  const auto m = init_model(3, 2, 2, 0);
  EXPECT_THROW(forward(m, identity_conv(2), SparseMatrix::from_dense(DenseMatrix(2, 4))), DimensionError);
  EXPECT_THROW(forward(m, identity_conv(3), SparseMatrix::from_dense(DenseMatrix(2, 3))), DimensionError);
}

TEST(Forward, PermutationEquivariance) {
  std::mt19937_64 rng(4);
  const std::size_t n = 10;
  const auto g = oracle::random_connected(n, 8, rng);
  const auto x = random_dense(n, 4, rng);
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Edge> edges;
  for (const auto& e : g.edges()) edges.push_back({perm[e.u], perm[e.v]});
  DenseMatrix xp(n, 4);
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t j = 0; j < 4; ++j) xp(perm[v], j) = x(v, j);
  const auto m = init_model(4, 3, 3, 5);
  const auto p = forward(m, build_convolution_matrix(g), SparseMatrix::from_dense(x)).probabilities;
  const auto q = forward(m, build_convolution_matrix(Graph::from_edges(n, edges)), SparseMatrix::from_dense(xp)).probabilities;
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(q(perm[v], j), p(v, j), 1e-12);
}

TEST(Loss, Examples) {
  const auto m0 = init_model(1, 1, 2, 0);
  const DenseMatrix onehot(2, 2, {1, 0, 0, 1});
  const std::vector<ClassId> labels{0, 1};
  const std::vector<NodeId> mask{0, 1};
  EXPECT_EQ(loss(onehot, labels, mask, m0, 0.0), 0.0);
  const DenseMatrix uniform(2, 3, 1.0 / 3.0);
  EXPECT_NEAR(loss(uniform, labels, mask, init_model(1, 1, 3, 0), 0.0), std::log(3.0), 1e-15);
  GcnModel m = init_model(1, 1, 2, 0);
  m.theta0(0, 0) = 2.0;
  m.theta1(0, 0) = 7.0;
  EXPECT_NEAR(loss(onehot, labels, mask, m, 5e-4), 1e-3, 1e-18);
  EXPECT_NEAR(loss(onehot, labels, mask, m, 5e-4, true), 0.5 * 5e-4 * (4 + 49 + m.theta1(0, 1) * m.theta1(0, 1)), 1e-15);
  EXPECT_THROW(loss(onehot, labels, std::vector<NodeId>{}, m, 0.0), ValidationError);
  EXPECT_THROW(loss(onehot, std::vector<ClassId>{0, kUnknownLabel}, mask, m, 0.0), ValidationError);
}

TEST(Gradients, MatchCentralDifferences) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 5, d = 1 + trial % 5, h = 1 + trial % 4, k = 2 + trial % 2;
    const auto a = build_convolution_matrix(oracle::random_graph(n, 0.5, rng));
    const auto x = SparseMatrix::from_dense(random_dense(n, d, rng));
    std::vector<ClassId> labels(n);
    for (auto& l : labels) l = static_cast<ClassId>(rng() % k);
    std::vector<NodeId> mask;
    for (NodeId v = 0; v < n; ++v)
      if (v % 2 == 0 || v + 1 == n) mask.push_back(v);
    auto m = init_model(d, h, k, rng());
    const bool both = trial % 3 == 0;
    const double l2 = 0.05;
    // Dropout masks depend only on (seed, epoch), so a fixed training-mode
    // pass is a smooth function of the weights too.
    const ForwardOptions opt{trial % 2 == 1, 0.3, 17, 2};
    const auto value = [&](const GcnModel& mm) {
      return loss(forward(mm, a, x, opt).probabilities, labels, mask, mm, l2, both);
    };
    const auto g = backward(m, a, forward(m, a, x, opt), labels, mask, l2, both);
    const auto check = [&](DenseMatrix& theta, const DenseMatrix& grad) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta.data()[i];
        theta.data()[i] = keep + 1e-5;
        const double up = value(m);
        theta.data()[i] = keep - 1e-5;
        const double down = value(m);
        theta.data()[i] = keep;
        const double numeric = (up - down) / 2e-5;
        const double analytic = grad.data()[i];
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, rel);
        EXPECT_LE(rel, 1e-4) << "trial " << trial << " entry " << i << " analytic " << analytic
                             << " numeric " << numeric;
      }
    };
    check(m.theta0, g.theta0);
    check(m.theta1, g.theta1);
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Train, ZeroLearningRateKeepsWeights) {
  std::mt19937_64 rng(6);
  const auto g = oracle::random_connected(12, 6, rng);
  TrainingData data{SparseMatrix::from_dense(random_dense(12, 5, rng)), std::vector<ClassId>(12, 0), {0, 1, 2}, {}};
  for (NodeId v = 6; v < 12; ++v) data.labels[v] = 1;
  data.train.push_back(7);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 20;
  const auto m = init_model(5, 16, 2, 1);
  const auto out = train(m, data, build_convolution_matrix(g), cfg);
  EXPECT_EQ(out.model.theta0, m.theta0);
  EXPECT_EQ(out.model.theta1, m.theta1);
  EXPECT_EQ(out.history.epochs(), 20u);
  EXPECT_TRUE(std::isnan(out.history.val_loss[0]));
}

TEST(Train, SingleNodeLossDecreases) {
  TrainingData data{SparseMatrix::from_dense(DenseMatrix(1, 1, 1.0)), {1}, {0}, {}};
  const auto a = identity_conv(1);
  const auto eval_loss = [&](const GcnModel& m) {
    return loss(forward(m, a, data.features).probabilities, data.labels, data.train, m, 0.0);
  };
  const auto init = init_model(1, 16, 2, 2);
  // Default dropout: the lone input feature is dropped in about half of the
  // epochs, which pins that epoch's loss at ln 2, so compare eval-mode losses.
  const auto out = train(init, data, a, TrainConfig{});
  EXPECT_EQ(out.history.epochs(), 200u);
  EXPECT_LT(eval_loss(out.model), eval_loss(init));
  TrainConfig plain;
  plain.dropout_rate = 0.0;
  const auto det = train(init, data, a, plain);
  EXPECT_LT(det.history.train_loss.back(), det.history.train_loss.front());
}

TEST(Train, SameSeedSameHistory) {
  std::mt19937_64 rng(7);
  const auto g = oracle::random_connected(30, 30, rng);
  TrainingData data{SparseMatrix::from_dense(random_dense(30, 8, rng, 0, 1)), std::vector<ClassId>(30), {}, {}};
  for (NodeId v = 0; v < 30; ++v) {
    data.labels[v] = static_cast<ClassId>(v % 3);
    (v < 9 ? data.train : data.val).push_back(v);
  }
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.seed = 5;
  const auto a_hat = build_convolution_matrix(g);
  const auto a = train(init_model(8, 16, 3, 1), data, a_hat, cfg);
  const auto b = train(init_model(8, 16, 3, 1), data, a_hat, cfg);
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
  EXPECT_EQ(a.history.val_loss, b.history.val_loss);
  EXPECT_EQ(a.model.theta0, b.model.theta0);
  cfg.seed = 6;
  EXPECT_NE(train(init_model(8, 16, 3, 1), data, a_hat, cfg).history.train_loss, a.history.train_loss);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  std::mt19937_64 rng(8);
  const auto g = oracle::random_connected(30, 30, rng);
  // Random labels: validation loss cannot keep improving.
  TrainingData data{SparseMatrix::from_dense(random_dense(30, 8, rng, 0, 1)), std::vector<ClassId>(30), {}, {}};
  for (NodeId v = 0; v < 30; ++v) {
    data.labels[v] = static_cast<ClassId>(rng() % 3);
    (v < 15 ? data.train : data.val).push_back(v);
  }
  TrainConfig cfg;
  cfg.early_stopping = true;
  cfg.learning_rate = 0.1;
  const auto out = train(init_model(8, 16, 3, 1), data, build_convolution_matrix(g), cfg);
  ASSERT_LT(out.history.epochs(), 200u);
  const auto& vl = out.history.val_loss;
  const auto best = std::min_element(vl.begin(), vl.end()) - vl.begin();
  EXPECT_EQ(static_cast<std::size_t>(vl.size() - 1 - best), cfg.patience);
}

TEST(Train, NonFiniteActivationReportsEpoch) {
  TrainingData data{SparseMatrix::from_dense(DenseMatrix(2, 2, 1e308)), {0, 1}, {0, 1}, {}};
  auto m = init_model(2, 4, 2, 0);
  m.theta0 = DenseMatrix(2, 4, 10.0);
  TrainConfig cfg;
  cfg.dropout_rate = 0.0;
  try {
    train(m, data, identity_conv(2), cfg);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
  }
}

TEST(Train, RejectsBadConfigAndEmptyMask) {
  TrainingData data{SparseMatrix::from_dense(DenseMatrix(1, 1, 1.0)), {0}, {}, {}};
  EXPECT_THROW(train(init_model(1, 2, 1, 0), data, identity_conv(1), TrainConfig{}), ValidationError);
  data.train = {0};
  TrainConfig bad;
  bad.dropout_rate = 1.0;
  EXPECT_THROW(train(init_model(1, 2, 1, 0), data, identity_conv(1), bad), ValidationError);
}

TEST(Train, LossFallsOnSeparableFixture) {
  // Isolated nodes whose features are their class indicators.
  const std::size_t n = 12, k = 3;
  DenseMatrix x(n, k);
  TrainingData data{{}, std::vector<ClassId>(n), {}, {}};
  for (NodeId v = 0; v < n; ++v) {
    x(v, v % k) = 1.0;
    data.labels[v] = static_cast<ClassId>(v % k);
    data.train.push_back(v);
  }
  data.features = SparseMatrix::from_dense(x);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.dropout_rate = 0.0;
  const auto out = train(init_model(k, 16, k, 3), data, identity_conv(n), cfg);
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(out.history.train_loss[e], out.history.train_loss[e - 1]);
  cfg.dropout_rate = 0.5;
  const auto noisy = train(init_model(k, 16, k, 3), data, identity_conv(n), cfg);
  EXPECT_LT(noisy.history.train_loss.back(), noisy.history.train_loss.front());
}

TEST(Evaluate, Examples) {
  // Perfect predictions.
  const DenseMatrix p(3, 2, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4});
  EXPECT_EQ(accuracy(p, std::vector<ClassId>{0, 1, 0}, std::vector<NodeId>{0, 1, 2}), 1.0);
  // Zero weights: every prediction is class 0.
  auto zero = init_model(2, 2, 3, 0);
  zero.theta0 = DenseMatrix(2, 2);
  zero.theta1 = DenseMatrix(2, 3);
  const std::vector<ClassId> balanced{0, 1, 2, 0, 1, 2};
  const auto x6 = SparseMatrix::from_dense(DenseMatrix(6, 2, 1.0));
  EXPECT_DOUBLE_EQ(evaluate(zero, identity_conv(6), x6, balanced, std::vector<NodeId>{0, 1, 2, 3, 4, 5}), 1.0 / 3.0);
  EXPECT_THROW(accuracy(p, std::vector<ClassId>{0, 1, 0}, std::vector<NodeId>{}), ValidationError);
}

TEST(Evaluate, HandComputedFixture) {
  // No edges, identity weights: logits equal ReLU of the features.
  auto m = init_model(2, 2, 2, 0);
  m.theta0 = DenseMatrix(2, 2, {1, 0, 0, 1});
  m.theta1 = DenseMatrix(2, 2, {1, 0, 0, 1});
  const auto x = SparseMatrix::from_dense(DenseMatrix(4, 2, {1, 0, 0, 1, 1, 0, 2, 0}));
  const std::vector<ClassId> labels{0, 1, 1, 0};
  EXPECT_EQ(evaluate(m, identity_conv(4), x, labels, std::vector<NodeId>{0, 1, 2, 3}), 0.75);
}

TEST(Features, RowNormalization) {
  const DenseMatrix x(3, 2, {1, 3, 0, 0, 2, 2});
  const auto n = prepare_features(x, true).to_dense();
  EXPECT_EQ(n, DenseMatrix(3, 2, {0.25, 0.75, 0, 0, 0.5, 0.5}));
  EXPECT_EQ(prepare_features(x, false).to_dense(), x);
}

TEST(Checkpoint, RoundTripAndLayout) {
  oracle::TempDir tmp("gcn");
  const auto m = init_model(3, 2, 4, 9);
  write_model(m, tmp / "model.lxgm");
  const auto back = read_model(tmp / "model.lxgm");
  EXPECT_EQ(back.theta0, m.theta0);
  EXPECT_EQ(back.theta1, m.theta1);
  std::ifstream in(tmp / "model.lxgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(bytes.size(), 4u + 4 + 24 + 8 * (6 + 8));
  EXPECT_EQ(bytes.substr(0, 4), "LXGM");
  std::uint64_t k;
  std::memcpy(&k, bytes.data() + 24, 8);
  EXPECT_EQ(k, 4u);
  double last;
  std::memcpy(&last, bytes.data() + bytes.size() - 8, 8);
  EXPECT_EQ(last, m.theta1(1, 3));
  std::ofstream(tmp / "short.lxgm", std::ios::binary) << bytes.substr(0, 40);
  EXPECT_THROW(read_model(tmp / "short.lxgm"), FormatError);
  std::ofstream(tmp / "long.lxgm", std::ios::binary) << bytes << "x";
  EXPECT_THROW(read_model(tmp / "long.lxgm"), FormatError);
}
