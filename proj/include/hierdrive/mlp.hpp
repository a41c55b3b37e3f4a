#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hierdrive/common.hpp"
#include "hierdrive/features.hpp"
#include "hierdrive/horizon_ocp.hpp"

namespace hierdrive {

inline constexpr int kPolicyOutputs = 10;  // 5 proximate (x, y) waypoints

// Single-hidden-layer tanh network from the 22 features to the 10 encoded
// waypoint outputs, with its frozen normalization statistics.
struct MlpPolicy {
  int input_dim = kFeatureDim;
  int hidden_dim = 64;
  int output_dim = kPolicyOutputs;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // output x hidden
  Eigen::VectorXd b2;
  FeatureStats stats;

  bool finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }
};

// Xavier-style scaled initialization, deterministic per seed.
inline MlpPolicy make_policy(int hidden_dim, std::uint64_t seed) {
  require(hidden_dim >= 1, "make_policy: hidden_dim must be positive");
  MlpPolicy p;
  p.hidden_dim = hidden_dim;
  p.w1.resize(hidden_dim, p.input_dim);
  p.b1 = Eigen::VectorXd::Zero(hidden_dim);
  p.w2.resize(p.output_dim, hidden_dim);
  p.b2 = Eigen::VectorXd::Zero(p.output_dim);
  std::mt19937_64 rng(seed);
  const double s1 = std::sqrt(6.0 / (p.input_dim + hidden_dim));
  const double s2 = std::sqrt(6.0 / (hidden_dim + p.output_dim));
  for (int i = 0; i < p.w1.rows(); ++i) {
    for (int j = 0; j < p.w1.cols(); ++j) p.w1(i, j) = uniform(rng, -s1, s1);
  }
  for (int i = 0; i < p.w2.rows(); ++i) {
    for (int j = 0; j < p.w2.cols(); ++j) p.w2(i, j) = uniform(rng, -s2, s2);
  }
  return p;
}

// Anchor for the relative waypoint encoding: x offsets are relative to the
// ego's longitudinal position, y is relative to the reference lane center.
struct WaypointAnchor {
  double x = 0.0;
  double y_ref = 0.0;
};

inline Eigen::VectorXd encode_waypoints(const WaypointPlan& plan,
                                        const WaypointAnchor& anchor) {
  require(plan.waypoints.size() == 5, "encode_waypoints: need 5 waypoints");
  Eigen::VectorXd out(kPolicyOutputs);
  for (int k = 0; k < 5; ++k) {
    out[2 * k] = plan.waypoints[k][0] - anchor.x;
    out[2 * k + 1] = plan.waypoints[k][1] - anchor.y_ref;
  }
  return out;
}

inline WaypointPlan decode_waypoints(const Eigen::VectorXd& encoded,
                                     const WaypointAnchor& anchor) {
  require(encoded.size() == kPolicyOutputs, "decode_waypoints: need 10 values");
  WaypointPlan plan;
  plan.waypoints.resize(5);
  for (int k = 0; k < 5; ++k) {
    plan.waypoints[k] = {anchor.x + encoded[2 * k], anchor.y_ref + encoded[2 * k + 1]};
  }
  return plan;
}

// Raw encoded outputs: normalize -> affine -> tanh -> affine.
inline Eigen::VectorXd policy_raw_output(const MlpPolicy& policy,
                                         const FeatureVector& features) {
  require(features.allFinite(), "policy forward: non-finite features");
  const FeatureVector norm = normalize(features, policy.stats);
  const Eigen::VectorXd hidden =
      ((policy.w1 * norm + policy.b1).array().tanh()).matrix();
  return policy.w2 * hidden + policy.b2;
}

inline WaypointPlan forward(const MlpPolicy& policy, const FeatureVector& features,
                            const WaypointAnchor& anchor) {
  return decode_waypoints(policy_raw_output(policy, features), anchor);
}

enum class SampleProvenance { Bootstrap, Dagger };

struct LabeledSample {
  FeatureVector features;                // raw, un-normalized
  Eigen::Matrix<double, kPolicyOutputs, 1> target;  // encoded waypoints
  SampleProvenance provenance = SampleProvenance::Bootstrap;
  int dagger_iteration = 0;              // 0 for bootstrap samples
  double deviation_at_capture = 0.0;
};

struct TrainHyper {
  int hidden_dim = 64;
  int epochs = 500;
  int batch = 64;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;
  int plateau_patience = 25;   // epochs without val improvement before halving
  double min_learning_rate = 1e-5;
};

struct TrainReport {
  double final_train_loss = 0.0;
  double validation_loss = 0.0;
  int epochs = 0;
  double wall_time = 0.0;  // seconds
};

namespace detail {

inline double mse_loss(const MlpPolicy& p, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd h = ((p.w1 * x).colwise() + p.b1).array().tanh();
  const Eigen::MatrixXd r = ((p.w2 * h).colwise() + p.b2) - y;
  return r.squaredNorm() / static_cast<double>(r.size());
}

}  // namespace detail

// Mini-batch gradient descent with momentum on the mean squared error of the
// encoded outputs. Deterministic per seed; normalization statistics are
// recomputed from the training split and frozen into the returned policy.
// The returned parameters are the best-validation snapshot.
inline std::pair<MlpPolicy, TrainReport> train(
    const std::vector<LabeledSample>& dataset, const TrainHyper& hyper) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(dataset.size());
  require(n >= 100, "train: need at least 100 samples");
  require(hyper.validation_fraction > 0.0 && hyper.validation_fraction < 0.5,
          "train: validation fraction out of range");

  std::mt19937_64 rng(hyper.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  const int n_val = std::max(1, static_cast<int>(n * hyper.validation_fraction));
  const int n_train = n - n_val;

  FeatureStats stats;
  for (int c = 0; c < n_train; ++c) stats.mean += dataset[order[c]].features;
  stats.mean /= static_cast<double>(n_train);
  Eigen::Matrix<double, kFeatureDim, 1> var =
      Eigen::Matrix<double, kFeatureDim, 1>::Zero();
  for (int c = 0; c < n_train; ++c) {
    const auto d = dataset[order[c]].features - stats.mean;
    var += d.cwiseProduct(d);
  }
  stats.stddev = (var / static_cast<double>(n_train)).cwiseSqrt();

  MlpPolicy policy = make_policy(hyper.hidden_dim, hyper.seed);
  policy.stats = stats;

  Eigen::MatrixXd x_train(kFeatureDim, n_train), y_train(kPolicyOutputs, n_train);
  Eigen::MatrixXd x_val(kFeatureDim, n_val), y_val(kPolicyOutputs, n_val);
  for (int c = 0; c < n_train; ++c) {
    x_train.col(c) = normalize(dataset[order[c]].features, stats);
    y_train.col(c) = dataset[order[c]].target;
  }
  for (int c = 0; c < n_val; ++c) {
    x_val.col(c) = normalize(dataset[order[n_train + c]].features, stats);
    y_val.col(c) = dataset[order[n_train + c]].target;
  }

  Eigen::MatrixXd vw1 = Eigen::MatrixXd::Zero(policy.w1.rows(), policy.w1.cols());
  Eigen::VectorXd vb1 = Eigen::VectorXd::Zero(policy.b1.size());
  Eigen::MatrixXd vw2 = Eigen::MatrixXd::Zero(policy.w2.rows(), policy.w2.cols());
  Eigen::VectorXd vb2 = Eigen::VectorXd::Zero(policy.b2.size());

  double lr = hyper.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();
  MlpPolicy best = policy;
  int since_improvement = 0;
  double train_loss = 0.0;

  std::vector<int> batch_order(n_train);
  std::iota(batch_order.begin(), batch_order.end(), 0);
  int epoch = 0;
  for (; epoch < hyper.epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(batch_order[i], batch_order[j]);
    }
    for (int start = 0; start < n_train; start += hyper.batch) {
      const int b = std::min(hyper.batch, n_train - start);
      Eigen::MatrixXd xb(kFeatureDim, b), yb(kPolicyOutputs, b);
      for (int c = 0; c < b; ++c) {
        xb.col(c) = x_train.col(batch_order[start + c]);
        yb.col(c) = y_train.col(batch_order[start + c]);
      }
      const Eigen::MatrixXd h = ((policy.w1 * xb).colwise() + policy.b1).array().tanh();
      const Eigen::MatrixXd out = (policy.w2 * h).colwise() + policy.b2;
      const Eigen::MatrixXd resid = out - yb;
      const double scale = 2.0 / static_cast<double>(resid.size());
      const Eigen::MatrixXd d_out = scale * resid;
      const Eigen::MatrixXd gw2 = d_out * h.transpose();
      const Eigen::VectorXd gb2 = d_out.rowwise().sum();
      const Eigen::MatrixXd dh =
          (policy.w2.transpose() * d_out).array() * (1.0 - h.array().square());
      const Eigen::MatrixXd gw1 = dh.matrix() * xb.transpose();
      const Eigen::VectorXd gb1 = dh.matrix().rowwise().sum();

      vw1 = hyper.momentum * vw1 - lr * gw1;
      vb1 = hyper.momentum * vb1 - lr * gb1;
      vw2 = hyper.momentum * vw2 - lr * gw2;
      vb2 = hyper.momentum * vb2 - lr * gb2;
      policy.w1 += vw1;
      policy.b1 += vb1;
      policy.w2 += vw2;
      policy.b2 += vb2;
    }
    train_loss = detail::mse_loss(policy, x_train, y_train);
    require(is_finite(train_loss),
            "train: loss diverged (NaN) at epoch " + std::to_string(epoch));
    const double val_loss = detail::mse_loss(policy, x_val, y_val);
    if (val_loss < best_val - 1e-12) {
      best_val = val_loss;
      best = policy;
      since_improvement = 0;
    } else if (++since_improvement >= hyper.plateau_patience) {
      since_improvement = 0;
      lr = std::max(hyper.min_learning_rate, 0.5 * lr);
    }
  }

  TrainReport report;
  report.final_train_loss = train_loss;
  report.validation_loss = best_val;
  report.epochs = epoch;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {best, report};
}

// Backpropagated parameter gradients vs central finite differences of the
// MSE loss on the given samples; returns the worst relative error.
inline double grad_check(const MlpPolicy& policy,
                         const std::vector<LabeledSample>& samples, double step) {
  require(step > 0.0, "grad_check: step must be positive");
  require(!samples.empty(), "grad_check: need at least one sample");
  const int b = static_cast<int>(samples.size());
  Eigen::MatrixXd x(kFeatureDim, b), y(kPolicyOutputs, b);
  for (int c = 0; c < b; ++c) {
    x.col(c) = normalize(samples[c].features, policy.stats);
    y.col(c) = samples[c].target;
  }

  const Eigen::MatrixXd h = ((policy.w1 * x).colwise() + policy.b1).array().tanh();
  const Eigen::MatrixXd resid = ((policy.w2 * h).colwise() + policy.b2) - y;
  const double scale = 2.0 / static_cast<double>(resid.size());
  const Eigen::MatrixXd d_out = scale * resid;
  const Eigen::MatrixXd gw2 = d_out * h.transpose();
  const Eigen::VectorXd gb2 = d_out.rowwise().sum();
  const Eigen::MatrixXd dh =
      (policy.w2.transpose() * d_out).array() * (1.0 - h.array().square());
  const Eigen::MatrixXd gw1 = dh.matrix() * x.transpose();
  const Eigen::VectorXd gb1 = dh.matrix().rowwise().sum();

  MlpPolicy probe = policy;
  const auto rel = [](double a, double fd) {
    return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
  };
  const auto fd_loss = [&](double* param) {
    const double saved = *param;
    *param = saved + step;
    const double up = detail::mse_loss(probe, x, y);
    *param = saved - step;
    const double down = detail::mse_loss(probe, x, y);
    *param = saved;
    return (up - down) / (2.0 * step);
  };

  double worst = 0.0;
  for (int i = 0; i < probe.w1.rows(); ++i) {
    for (int j = 0; j < probe.w1.cols(); ++j) {
      worst = std::max(worst, rel(gw1(i, j), fd_loss(&probe.w1(i, j))));
    }
  }
  for (int i = 0; i < probe.b1.size(); ++i) {
    worst = std::max(worst, rel(gb1(i), fd_loss(&probe.b1(i))));
  }
  for (int i = 0; i < probe.w2.rows(); ++i) {
    for (int j = 0; j < probe.w2.cols(); ++j) {
      worst = std::max(worst, rel(gw2(i, j), fd_loss(&probe.w2(i, j))));
    }
  }
  for (int i = 0; i < probe.b2.size(); ++i) {
    worst = std::max(worst, rel(gb2(i), fd_loss(&probe.b2(i))));
  }
  return worst;
}

}  // namespace hierdrive
