#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lexicol/binary_io.hpp"
#include "lexicol/graph.hpp"
#include "lexicol/linalg.hpp"
#include "lexicol/random.hpp"

// Two-layer graph convolutional network
//
//   Y = softmax(Â ReLU(Â X Θ0) Θ1)
//
// with inverted dropout on the input of each convolution, masked softmax
// cross-entropy, L2 on Θ0 (optionally Θ1) and Adam. Everything is float64 and
// single-threaded; dropout masks are counter-based draws keyed by
// (seed, epoch, layer, entry index), so a run is a pure function of its inputs.

namespace lexicol {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t max_epochs = 200;
  double dropout_rate = 0.5;
  double l2_weight = 5e-4;
  std::size_t hidden_units = 16;
  std::uint64_t seed = 0;
  bool l2_both_layers = false;
  bool early_stopping = false;
  std::size_t patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v < 1.0; };
    if (!in_unit(learning_rate)) throw ValidationError("learning_rate must be in [0, 1)");
    if (!in_unit(dropout_rate)) throw ValidationError("dropout_rate must be in [0, 1)");
    if (!in_unit(l2_weight)) throw ValidationError("l2_weight must be in [0, 1)");
    if (max_epochs < 1) throw ValidationError("max_epochs must be positive");
    if (hidden_units < 1) throw ValidationError("hidden_units must be positive");
    if (!in_unit(beta1) || !in_unit(beta2)) throw ValidationError("Adam decay rates must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  }
};

struct AdamState {
  DenseMatrix m0, v0, m1, v1;
  std::size_t step = 0;
};

struct GcnModel {
  DenseMatrix theta0;  // d x h
  DenseMatrix theta1;  // h x k
  AdamState adam;

  std::size_t input_dim() const noexcept { return theta0.rows(); }
  std::size_t hidden_units() const noexcept { return theta0.cols(); }
  std::size_t num_classes() const noexcept { return theta1.cols(); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;      // NaN when there is no validation set
  std::vector<double> val_accuracy;  // NaN when there is no validation set
  std::size_t epochs() const noexcept { return train_loss.size(); }
};

/// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)).
inline GcnModel init_model(std::size_t d, std::size_t h, std::size_t k, std::uint64_t seed) {
  if (d < 1 || h < 1 || k < 1) throw ValidationError("init_model: dimensions must be >= 1");
  const auto glorot = [&](std::size_t rows, std::size_t cols, std::uint64_t which) {
    DenseMatrix m(rows, cols);
    const double range = std::sqrt(6.0 / static_cast<double>(rows + cols));
    const auto key = rng::derive_key(seed, {rng::label(rng::Domain::kInit), which});
    auto data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = (2.0 * rng::to_unit(rng::bits(key, i)) - 1.0) * range;
    return m;
  };
  GcnModel model;
  model.theta0 = glorot(d, h, 0);
  model.theta1 = glorot(h, k, 1);
  model.adam = {DenseMatrix(d, h), DenseMatrix(d, h), DenseMatrix(h, k), DenseMatrix(h, k), 0};
  return model;
}

/// Row-normalizes features (rows summing to 0 are left unchanged) and stores
/// them sparsely for the first-layer products.
inline SparseMatrix prepare_features(const DenseMatrix& x, bool row_normalize) {
  if (!row_normalize) return SparseMatrix::from_dense(x);
  DenseMatrix scaled = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    if (s == 0.0) continue;
    for (double& v : scaled.row(r)) v /= s;
  }
  return SparseMatrix::from_dense(scaled);
}

struct ForwardOptions {
  bool train = false;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

struct ForwardCache {
  SparseMatrix x_dropped;  // X after dropout
  DenseMatrix pre_hidden;  // Â X Θ0
  DenseMatrix hidden_mask; // dropout scale per hidden entry (1 in eval mode)
  DenseMatrix hidden;      // dropout(ReLU(pre_hidden))
  DenseMatrix logits;      // Â hidden Θ1
};

struct ForwardResult {
  DenseMatrix probabilities;
  ForwardCache cache;
};

namespace detail {

inline std::uint64_t dropout_key(std::uint64_t seed, std::size_t epoch, std::size_t layer) {
  return rng::derive_key(seed, {rng::label(rng::Domain::kDropout), epoch, layer});
}

inline bool keep(std::uint64_t key, std::size_t index, double rate) {
  return rng::to_unit(rng::bits(key, index)) >= rate;
}

inline void softmax_rows(const DenseMatrix& logits, DenseMatrix& out) {
  out = DenseMatrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    auto y = out.row(i);
    for (std::size_t c = 0; c < z.size(); ++c) {
      y[c] = std::exp(z[c] - m);
      s += y[c];
    }
    for (double& v : y) v /= s;
  }
}

}  // namespace detail

inline ForwardResult forward(const GcnModel& model, const ConvolutionMatrix& a_hat,
                             const SparseMatrix& x, const ForwardOptions& opt = {}) {
  const std::size_t n = x.rows();
  if (x.cols() != model.input_dim())
    throw DimensionError("forward: features have " + std::to_string(x.cols()) +
                         " columns, model expects " + std::to_string(model.input_dim()));
  if (a_hat.matrix.rows() != n || a_hat.matrix.cols() != n)
    throw DimensionError("forward: convolution matrix does not match feature rows");
  const bool drop = opt.train && opt.dropout_rate > 0.0;
  const double scale = drop ? 1.0 / (1.0 - opt.dropout_rate) : 1.0;

  ForwardResult res;
  auto& c = res.cache;
  if (drop) {
    const auto key = detail::dropout_key(opt.seed, opt.epoch, 0);
    const std::size_t d = x.cols();
    std::vector<double> vals(x.values().begin(), x.values().end());
    const auto off = x.row_offsets();
    const auto idx = x.col_indices();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = off[r]; k < off[r + 1]; ++k)
        vals[k] = detail::keep(key, r * d + idx[k], opt.dropout_rate) ? vals[k] * scale : 0.0;
    c.x_dropped = SparseMatrix(n, d, std::vector<std::size_t>(off.begin(), off.end()),
                               std::vector<std::uint32_t>(idx.begin(), idx.end()), std::move(vals));
  } else {
    c.x_dropped = x;
  }

  // Â (X Θ0): associativity keeps the n x d product sparse.
  const DenseMatrix xw = multiply(c.x_dropped, model.theta0);
  c.pre_hidden = multiply(a_hat.matrix, xw);
  const std::size_t h = model.hidden_units();
  c.hidden = DenseMatrix(n, h);
  c.hidden_mask = DenseMatrix(n, h, 1.0);
  const auto key1 = detail::dropout_key(opt.seed, opt.epoch, 1);
  for (std::size_t i = 0; i < n * h; ++i) {
    const double relu = std::max(0.0, c.pre_hidden.data()[i]);
    if (drop) c.hidden_mask.data()[i] = detail::keep(key1, i, opt.dropout_rate) ? scale : 0.0;
    c.hidden.data()[i] = relu * c.hidden_mask.data()[i];
  }
  c.logits = multiply(a_hat.matrix, matmul(c.hidden, model.theta1));
  if (!c.logits.all_finite())
    throw TrainingError("forward: non-finite activation", opt.epoch);
  detail::softmax_rows(c.logits, res.probabilities);
  return res;
}

inline double l2_penalty(const GcnModel& model, double l2_weight, bool both_layers) {
  double s = 0.0;
  for (double v : model.theta0.data()) s += v * v;
  if (both_layers)
    for (double v : model.theta1.data()) s += v * v;
  return 0.5 * l2_weight * s;
}

/// Mean negative log-likelihood over `mask` plus l2_weight * ½‖Θ0‖².
inline double loss(const DenseMatrix& probabilities, std::span<const ClassId> labels,
                   std::span<const NodeId> mask, const GcnModel& model, double l2_weight,
                   bool l2_both_layers = false) {
  if (mask.empty()) throw ValidationError("loss: empty mask");
  double nll = 0.0;
  for (NodeId v : mask) {
    const ClassId y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= probabilities.cols())
      throw ValidationError("loss: node " + std::to_string(v) + " has no valid label");
    nll -= std::log(probabilities(v, static_cast<std::size_t>(y)));
  }
  return nll / static_cast<double>(mask.size()) + l2_penalty(model, l2_weight, l2_both_layers);
}

struct Gradients {
  DenseMatrix theta0;
  DenseMatrix theta1;
};

/// Gradients of `loss` with respect to Θ0 and Θ1 for the cached forward pass.
inline Gradients backward(const GcnModel& model, const ConvolutionMatrix& a_hat,
                          const ForwardResult& fwd, std::span<const ClassId> labels,
                          std::span<const NodeId> mask, double l2_weight,
                          bool l2_both_layers = false) {
  if (mask.empty()) throw ValidationError("backward: empty mask");
  const auto& c = fwd.cache;
  const std::size_t n = c.logits.rows(), k = c.logits.cols();
  DenseMatrix dz(n, k);
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (NodeId v : mask) {
    for (std::size_t j = 0; j < k; ++j) dz(v, j) += fwd.probabilities(v, j) * inv;
    dz(v, static_cast<std::size_t>(labels[v])) -= inv;
  }
  // Z = Â H Θ1, Â symmetric.
  const DenseMatrix d_hw = multiply(a_hat.matrix, dz);
  Gradients g;
  g.theta1 = matmul_at_b(c.hidden, d_hw);
  DenseMatrix d_hidden = matmul_a_bt(d_hw, model.theta1);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) {
    const double gate = c.pre_hidden.data()[i] > 0.0 ? c.hidden_mask.data()[i] : 0.0;
    d_hidden.data()[i] *= gate;
  }
  const DenseMatrix d_xw = multiply(a_hat.matrix, d_hidden);
  g.theta0 = multiply_transposed(c.x_dropped, d_xw);
  for (std::size_t i = 0; i < g.theta0.size(); ++i)
    g.theta0.data()[i] += l2_weight * model.theta0.data()[i];
  if (l2_both_layers)
    for (std::size_t i = 0; i < g.theta1.size(); ++i)
      g.theta1.data()[i] += l2_weight * model.theta1.data()[i];
  return g;
}

inline void adam_step(GcnModel& model, const Gradients& g, const TrainConfig& cfg) {
  auto& s = model.adam;
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  const auto update = [&](DenseMatrix& theta, DenseMatrix& m, DenseMatrix& v,
                          const DenseMatrix& grad) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = grad.data()[i];
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m.data()[i] / c1;
      const double v_hat = v.data()[i] / c2;
      theta.data()[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  };
  update(model.theta0, s.m0, s.v0, g.theta0);
  update(model.theta1, s.m1, s.v1, g.theta1);
}

/// Argmax accuracy over `mask`; ties go to the lowest class index.
inline double accuracy(const DenseMatrix& probabilities, std::span<const ClassId> labels,
                       std::span<const NodeId> mask) {
  if (mask.empty()) throw ValidationError("evaluate: empty mask");
  std::size_t correct = 0;
  for (NodeId v : mask) {
    const auto row = probabilities.row(v);
    const auto best = static_cast<ClassId>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

inline double evaluate(const GcnModel& model, const ConvolutionMatrix& a_hat, const SparseMatrix& x,
                       std::span<const ClassId> labels, std::span<const NodeId> mask) {
  return accuracy(forward(model, a_hat, x).probabilities, labels, mask);
}

/// Supervision for one training run. `labels` may carry pseudo-labels for
/// expanded nodes.
struct TrainingData {
  SparseMatrix features;
  std::vector<ClassId> labels;
  std::vector<NodeId> train;
  std::vector<NodeId> val;
};

struct TrainOutcome {
  GcnModel model;
  TrainHistory history;
};

/// Full-batch training for cfg.max_epochs epochs (fewer with early stopping).
inline TrainOutcome train(GcnModel model, const TrainingData& data, const ConvolutionMatrix& a_hat,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) throw ValidationError("train: empty training mask");
  TrainOutcome out;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    ForwardOptions fo{true, cfg.dropout_rate, cfg.seed, epoch};
    const auto fwd = forward(model, a_hat, data.features, fo);
    const double train_loss =
        loss(fwd.probabilities, data.labels, data.train, model, cfg.l2_weight, cfg.l2_both_layers);
    if (!std::isfinite(train_loss)) throw TrainingError("train: non-finite loss", epoch);
    const auto grads =
        backward(model, a_hat, fwd, data.labels, data.train, cfg.l2_weight, cfg.l2_both_layers);
    adam_step(model, grads, cfg);
    if (!model.theta0.all_finite() || !model.theta1.all_finite())
      throw TrainingError("train: non-finite weights", epoch);

    out.history.train_loss.push_back(train_loss);
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_acc = std::numeric_limits<double>::quiet_NaN();
    if (!data.val.empty()) {
      const auto eval = forward(model, a_hat, data.features);
      val_loss = loss(eval.probabilities, data.labels, data.val, model, cfg.l2_weight,
                      cfg.l2_both_layers);
      val_acc = accuracy(eval.probabilities, data.labels, data.val);
    }
    out.history.val_loss.push_back(val_loss);
    out.history.val_accuracy.push_back(val_acc);

    if (cfg.early_stopping && !data.val.empty()) {
      if (val_loss < best_val) {
        best_val = val_loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  out.model = std::move(model);
  return out;
}

// =============================================================================
// Checkpoint: "LXGM", u32 version=1, u64 d, u64 h, u64 k, Θ0 then Θ1 as
// binary64 row-major. Optimizer state is not persisted.
// =============================================================================

inline void write_model(const GcnModel& model, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& os) {
    os.write("LXGM", 4);
    io::write_le<std::uint32_t>(os, 1);
    io::write_le<std::uint64_t>(os, model.input_dim());
    io::write_le<std::uint64_t>(os, model.hidden_units());
    io::write_le<std::uint64_t>(os, model.num_classes());
    for (double v : model.theta0.data()) io::write_le<double>(os, v);
    for (double v : model.theta1.data()) io::write_le<double>(os, v);
  });
}

inline GcnModel read_model(const std::filesystem::path& path) {
  auto in = io::open_in(path, true);
  const std::string what = path.filename().string();
  io::expect_magic(in, "LXGM", what);
  const auto version = io::read_le<std::uint32_t>(in, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto d = io::read_le<std::uint64_t>(in, what);
  const auto h = io::read_le<std::uint64_t>(in, what);
  const auto k = io::read_le<std::uint64_t>(in, what);
  if (d == 0 || h == 0 || k == 0 || h > (std::uint64_t{1} << 32) || d > (std::uint64_t{1} << 32) ||
      k > (std::uint64_t{1} << 32))
    throw FormatError(what + ": implausible shape");
  io::expect_available(in, d * h + h * k, sizeof(double), what);
  GcnModel model;
  model.theta0 = DenseMatrix(d, h);
  model.theta1 = DenseMatrix(h, k);
  for (double& v : model.theta0.data()) v = io::read_le<double>(in, what);
  for (double& v : model.theta1.data()) v = io::read_le<double>(in, what);
  io::expect_end(in, what);
  model.adam = {DenseMatrix(d, h), DenseMatrix(d, h), DenseMatrix(h, k), DenseMatrix(h, k), 0};
  return model;
}

}  // namespace lexicol
