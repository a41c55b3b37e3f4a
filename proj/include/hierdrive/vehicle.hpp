#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "hierdrive/common.hpp"

namespace hierdrive {

// Ego pose and speed in the road frame.
struct VehicleState {
  double x = 0.0;      // longitudinal position (m)
  double y = 0.0;      // lateral position (m)
  double theta = 0.0;  // yaw angle (rad), kept in (-pi, pi]
  double v = 0.0;      // speed (m/s), >= 0

  bool finite() const {
    return is_finite(x) && is_finite(y) && is_finite(theta) && is_finite(v);
  }
};

struct ControlInput {
  double accel = 0.0;  // longitudinal acceleration (m/s^2)
  double steer = 0.0;  // steering angle (rad)

  bool finite() const { return is_finite(accel) && is_finite(steer); }
};

struct VehicleGeometry {
  double l_r = 0.19;           // rear axle to CG (m)
  double l_f = 0.21;           // CG to front (m)
  double width = 0.19;         // body width (m)
  double safety_buffer = 0.02; // buffer added to the disc radius (m)

  double length() const { return l_r + l_f; }
  double safe_radius() const { return l_r + l_f + safety_buffer; }
};

struct DynamicLimits {
  double a_plus_max = 0.5;   // max commanded acceleration (m/s^2)
  double a_minus_max = 1.0;  // max total deceleration magnitude (m/s^2)
  double v_max = 1.0;        // speed limit (m/s)
  double steer_min = -0.5;   // rad
  double steer_max = 0.5;    // rad
};

// Slip angle of the kinematic bicycle: atan((L_r / L) * tan(steer)).
inline double slip_angle(double steer, const VehicleGeometry& geom) {
  return std::atan(geom.l_r / geom.length() * std::tan(steer));
}

// One step of the discrete bicycle model. Yaw is wrapped to (-pi, pi];
// speed is clamped at zero (braking cannot reverse the car).
inline VehicleState step_kinematics(const VehicleState& state,
                                    const ControlInput& input,
                                    const VehicleGeometry& geom, double dt) {
  require(dt > 0.0, "step_kinematics: dt must be positive");
  require(state.finite(), "step_kinematics: non-finite state");
  require(input.finite(), "step_kinematics: non-finite input");
  const double beta = slip_angle(input.steer, geom);
  const double heading = state.theta + beta;
  VehicleState next;
  next.x = state.x + state.v * std::cos(heading) * dt;
  next.y = state.y + state.v * std::sin(heading) * dt;
  next.theta = wrap_angle(state.theta + state.v * std::tan(input.steer) /
                                            geom.length() * std::cos(beta) * dt);
  next.v = std::max(0.0, state.v + input.accel * dt);
  return next;
}

// Repeated bicycle steps. Result[0] is the initial state; length = inputs + 1.
inline std::vector<VehicleState> rollout(const VehicleState& state,
                                         const std::vector<ControlInput>& inputs,
                                         const VehicleGeometry& geom, double dt) {
  std::vector<VehicleState> states;
  states.reserve(inputs.size() + 1);
  states.push_back(state);
  for (const auto& u : inputs) {
    states.push_back(step_kinematics(states.back(), u, geom, dt));
  }
  return states;
}

// Second difference of three consecutive positions: (p_k - 2 p_{k-1} + p_{k-2}) / dt^2.
inline double accel_from_positions(const std::array<double, 3>& p, double dt) {
  require(dt > 0.0, "accel_from_positions: dt must be positive");
  return (p[2] - 2.0 * p[1] + p[0]) / (dt * dt);
}

// Combined-acceleration disc: ax^2 + ay^2 <= a_minus_max^2. The commanded
// longitudinal bound a <= a_plus_max is enforced separately on ControlInput.
inline bool gg_feasible(double ax, double ay, const DynamicLimits& limits) {
  return ax * ax + ay * ay <= limits.a_minus_max * limits.a_minus_max;
}

struct CornerLaterals {
  double a, b, c, d;

  double max() const { return std::max(std::max(a, b), std::max(c, d)); }
  double min() const { return std::min(std::min(a, b), std::min(c, d)); }
};

// Lateral coordinates of the four body corners. A/D are the left pair
// (outboard +W/2), B/C the right pair; A/B sit L_f ahead of the CG and
// D/C mirror them behind.
inline CornerLaterals corner_lateral_positions(const VehicleState& state,
                                               const VehicleGeometry& geom) {
  const double s = std::sin(state.theta);
  const double c = std::cos(state.theta);
  const double half_w = 0.5 * geom.width;
  CornerLaterals out;
  out.a = state.y + geom.l_f * s + half_w * c;
  out.d = state.y - geom.l_f * s + half_w * c;
  out.b = state.y + geom.l_f * s - half_w * c;
  out.c = state.y - geom.l_f * s - half_w * c;
  return out;
}

// Disc separation test: center distance >= l_r + l_f + safety_buffer.
inline bool separation_ok(const VehicleState& ego,
                          const std::array<double, 2>& other_xy,
                          const VehicleGeometry& geom) {
  const double dx = ego.x - other_xy[0];
  const double dy = ego.y - other_xy[1];
  return std::hypot(dx, dy) >= geom.safe_radius();
}

}  // namespace hierdrive
