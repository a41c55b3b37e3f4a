#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>

#include "hierdrive/common.hpp"
#include "hierdrive/scenario.hpp"
#include "hierdrive/vehicle.hpp"

namespace hierdrive {

// 22 learned-policy inputs: 13 map + 1 goal + 8 safety.
inline constexpr int kFeatureDim = 22;
inline constexpr int kPreviewPoints = 10;
using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

// Longitudinal preview offsets for the lane-deviation features. Spacing
// grows with distance: nearby geometry matters more, yet a long reach keeps
// the features sensitive to small yaw changes.
struct PreviewGrid {
  std::array<double, kPreviewPoints> offsets{};

  void validate() const {
    require(offsets[0] == 0.0, "PreviewGrid: first offset must be 0");
    double prev_gap = 0.0;
    for (int j = 1; j < kPreviewPoints; ++j) {
      const double gap = offsets[j] - offsets[j - 1];
      require(gap > prev_gap, "PreviewGrid: intervals must strictly increase");
      prev_gap = gap;
    }
  }
};

// Quadratically spaced grid scaled so the last offset hits `span` meters.
inline PreviewGrid default_grid(double span = 2.0) {
  PreviewGrid grid;
  const double c = span / 81.0;
  for (int j = 0; j < kPreviewPoints; ++j) {
    grid.offsets[j] = c * static_cast<double>(j) * static_cast<double>(j);
  }
  grid.validate();
  return grid;
}

struct FeatureParams {
  VehicleGeometry geom;
  double v_max = 1.0;
  int horizon = 30;  // N of the expert layer, for the goal feature
  double dt = 0.1;
};

struct FeatureStats {
  Eigen::Matrix<double, kFeatureDim, 1> mean =
      Eigen::Matrix<double, kFeatureDim, 1>::Zero();
  Eigen::Matrix<double, kFeatureDim, 1> stddev =
      Eigen::Matrix<double, kFeatureDim, 1>::Ones();
};

// Layout: [0] y - upper curb, [1] y - lower curb, [2..11] lane-relative
// preview deviations, [12] speed margin, [13] goal distance, [14..17] and
// [18..21] per-car relative position and velocity blocks.
inline FeatureVector extract_features(const WorldScene& scene,
                                      const PreviewGrid& grid, double prev_steer,
                                      const FeatureParams& params) {
  scene.validate();
  require(std::abs(scene.ego.theta) < M_PI / 2.0,
          "extract_features: yaw outside the operating envelope");
  require(is_finite(prev_steer), "extract_features: non-finite previous steer");

  const VehicleState& ego = scene.ego;
  FeatureVector f;
  f[0] = ego.y - scene.curb_upper;
  f[1] = ego.y - scene.curb_lower;
  const double tan_theta = std::tan(ego.theta);
  const double lane_rel_y = ego.y - scene.reference_lane_y;
  for (int j = 0; j < kPreviewPoints; ++j) {
    f[2 + j] = lane_rel_y + grid.offsets[j] * tan_theta;
  }
  f[12] = ego.v - params.v_max;

  const double beta = slip_angle(prev_steer, params.geom);
  const double vx = ego.v * std::cos(ego.theta + beta);
  const double vy = ego.v * std::sin(ego.theta + beta);
  f[13] = ego.x + vx * params.horizon * params.dt - scene.goal_x;

  for (int car = 0; car < 2; ++car) {
    const SurroundingCar& c = scene.cars[car];
    const int base = 14 + 4 * car;
    f[base + 0] = ego.x - c.x;
    f[base + 1] = ego.y - c.y;
    f[base + 2] = vx - c.vx;
    f[base + 3] = vy - c.vy;
  }
  require(f.allFinite(), "extract_features: non-finite feature");
  return f;
}

// Per-feature z-score; constant features (tiny sigma) pass through unscaled.
inline FeatureVector normalize(const FeatureVector& features,
                               const FeatureStats& stats) {
  FeatureVector out;
  for (int i = 0; i < kFeatureDim; ++i) {
    const double sd = stats.stddev[i];
    out[i] = sd < 1e-8 ? features[i] - stats.mean[i]
                       : (features[i] - stats.mean[i]) / sd;
  }
  return out;
}

}  // namespace hierdrive
