#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>
#include <vector>

#include "hierdrive/common.hpp"
#include "hierdrive/nlp.hpp"
#include "hierdrive/scenario.hpp"
#include "hierdrive/vehicle.hpp"

namespace hierdrive {

// Reference trajectory handed from the policy layer to the execution layer:
// road-frame (x, y) waypoints for prediction steps 1..n.
struct WaypointPlan {
  enum class Frame { Road };
  std::vector<std::array<double, 2>> waypoints;
  Frame frame = Frame::Road;

  // Sanity bound on spacing, not enforced on construction: raw policy
  // outputs may violate it and the tracker still has to cope.
  bool spacing_ok(double v_max, double dt, double margin = 0.05) const {
    double prev_x = waypoints.empty() ? 0.0 : waypoints[0][0];
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      if (std::abs(waypoints[i][0] - prev_x) > v_max * dt + margin) return false;
      prev_x = waypoints[i][0];
    }
    return true;
  }
};

// Decision-vector layout for an N-step horizon:
// [z_0..z_N | u_0..u_{N-1} | s_{0,car0} s_{0,car1} .. s_{N,car1}].
struct OcpLayout {
  int horizon = 0;

  int state_index(int k) const { return 4 * k; }
  int control_index(int k) const { return 4 * (horizon + 1) + 2 * k; }
  int slack_index(int k, int car) const {
    return 4 * (horizon + 1) + 2 * horizon + 2 * k + car;
  }
  int dim() const { return 4 * (horizon + 1) + 2 * horizon + 2 * (horizon + 1); }
  int n_eq() const { return 4 + 4 * horizon; }
  int n_gg() const { return horizon - 1; }          // k = 2..N
  int n_safety() const { return 2 * (horizon + 1); }
  int n_corner() const { return 4 * (horizon + 1); }
  int n_ineq() const { return n_gg() + n_safety() + n_corner(); }
  int gg_row(int k) const { return k - 2; }
  int safety_row(int k, int car) const { return n_gg() + 2 * k + car; }
  int corner_row(int k) const { return n_gg() + n_safety() + 4 * k; }
};

struct OcpWeights {
  Eigen::Matrix2d w_e = (Eigen::Matrix2d() << 1.0, 0.0, 0.0, 4.0).finished();
  Eigen::Matrix2d w_u = (Eigen::Matrix2d() << 10.0, 0.0, 0.0, 100.0).finished();
  double slack_penalty = 1e5;
};

struct OcpParams {
  int horizon = 30;
  double dt = 0.1;
  VehicleGeometry geom;
  DynamicLimits limits;
  OcpWeights weights;
  double lane_width = 0.38;
  double safety_margin = 2e-3;  // solver-side tightening of the safe radius
  double curb_margin = 1e-3;    // solver-side tightening of the corner bounds
  double theta_limit = 1.2;     // within-horizon yaw box (operating envelope)
};

// Per-step position tracking targets. Steps with track[k] = false contribute
// no W_e term (the execution layer has no reference for step 0).
struct OcpObjective {
  std::vector<bool> track;
  std::vector<std::array<double, 2>> refs;
  ControlInput prev_input;  // anchors delta-u at k = 0
};

namespace detail {

struct OcpData {
  OcpParams prm;
  OcpLayout layout;
  OcpObjective objective;
  VehicleState initial;
  std::array<std::vector<double>, 2> obs_x;  // per car, per step
  std::array<std::vector<double>, 2> obs_y;
  double cg_low = 0.0, cg_high = 0.0;        // lane-center box for y
  double corner_low = 0.0, corner_high = 0.0;
  double r_safe_sq = 0.0;
};

inline double objective_eval(const OcpData& d, const Eigen::VectorXd& w,
                             Eigen::VectorXd* grad) {
  const OcpLayout& L = d.layout;
  const int n = L.horizon;
  if (grad) grad->setZero(L.dim());
  double value = 0.0;
  for (int k = 0; k <= n; ++k) {
    if (!d.objective.track[k]) continue;
    const int zi = L.state_index(k);
    Eigen::Vector2d err(w[zi] - d.objective.refs[k][0],
                        w[zi + 1] - d.objective.refs[k][1]);
    value += err.dot(d.prm.weights.w_e * err);
    if (grad) {
      Eigen::Vector2d ge = 2.0 * (d.prm.weights.w_e * err);
      (*grad)[zi] += ge[0];
      (*grad)[zi + 1] += ge[1];
    }
  }
  for (int k = 0; k < n; ++k) {
    const int ui = L.control_index(k);
    Eigen::Vector2d u(w[ui], w[ui + 1]);
    Eigen::Vector2d u_prev = k == 0 ? Eigen::Vector2d(d.objective.prev_input.accel,
                                                      d.objective.prev_input.steer)
                                    : Eigen::Vector2d(w[L.control_index(k - 1)],
                                                      w[L.control_index(k - 1) + 1]);
    Eigen::Vector2d du = u - u_prev;
    value += du.dot(d.prm.weights.w_u * du);
    if (grad) {
      Eigen::Vector2d gu = 2.0 * (d.prm.weights.w_u * du);
      (*grad)[ui] += gu[0];
      (*grad)[ui + 1] += gu[1];
      if (k > 0) {
        (*grad)[L.control_index(k - 1)] -= gu[0];
        (*grad)[L.control_index(k - 1) + 1] -= gu[1];
      }
    }
  }
  const double rho = d.prm.weights.slack_penalty;
  for (int k = 0; k <= n; ++k) {
    for (int car = 0; car < 2; ++car) {
      const double s = w[L.slack_index(k, car)];
      value += rho * s * s;
      if (grad) (*grad)[L.slack_index(k, car)] += 2.0 * rho * s;
    }
  }
  return value;
}

inline void equalities_eval(const OcpData& d, const Eigen::VectorXd& w,
                            Eigen::VectorXd& values, Eigen::MatrixXd* jac) {
  const OcpLayout& L = d.layout;
  const int n = L.horizon;
  values.resize(L.n_eq());
  if (jac) jac->setZero(L.n_eq(), L.dim());

  // Initial-state pinning.
  const int z0 = L.state_index(0);
  values[0] = w[z0] - d.initial.x;
  values[1] = w[z0 + 1] - d.initial.y;
  values[2] = w[z0 + 2] - d.initial.theta;
  values[3] = w[z0 + 3] - d.initial.v;
  if (jac) {
    for (int j = 0; j < 4; ++j) (*jac)(j, z0 + j) = 1.0;
  }

  const double dt = d.prm.dt;
  const double len = d.prm.geom.length();
  const double ratio = d.prm.geom.l_r / len;
  for (int k = 0; k < n; ++k) {
    const int zi = L.state_index(k);
    const int zn = L.state_index(k + 1);
    const int ui = L.control_index(k);
    const double theta = w[zi + 2];
    const double v = w[zi + 3];
    const double delta = w[ui + 1];
    const double tan_d = std::tan(delta);
    const double beta = std::atan(ratio * tan_d);
    const double cos_b = std::cos(beta);
    const double sin_b = std::sin(beta);
    const double heading = theta + beta;
    const double ch = std::cos(heading);
    const double sh = std::sin(heading);
    const double sec2 = 1.0 + tan_d * tan_d;
    const double dbeta = ratio * sec2 / (1.0 + ratio * ratio * tan_d * tan_d);

    const int row = 4 + 4 * k;
    values[row + 0] = w[zn + 0] - w[zi + 0] - v * ch * dt;
    values[row + 1] = w[zn + 1] - w[zi + 1] - v * sh * dt;
    values[row + 2] = w[zn + 2] - w[zi + 2] - v * tan_d / len * cos_b * dt;
    values[row + 3] = w[zn + 3] - w[zi + 3] - w[ui + 0] * dt;
    if (jac) {
      (*jac)(row + 0, zn + 0) = 1.0;
      (*jac)(row + 0, zi + 0) = -1.0;
      (*jac)(row + 0, zi + 2) = v * sh * dt;
      (*jac)(row + 0, zi + 3) = -ch * dt;
      (*jac)(row + 0, ui + 1) = v * sh * dt * dbeta;

      (*jac)(row + 1, zn + 1) = 1.0;
      (*jac)(row + 1, zi + 1) = -1.0;
      (*jac)(row + 1, zi + 2) = -v * ch * dt;
      (*jac)(row + 1, zi + 3) = -sh * dt;
      (*jac)(row + 1, ui + 1) = -v * ch * dt * dbeta;

      (*jac)(row + 2, zn + 2) = 1.0;
      (*jac)(row + 2, zi + 2) = -1.0;
      (*jac)(row + 2, zi + 3) = -tan_d / len * cos_b * dt;
      (*jac)(row + 2, ui + 1) =
          -v * dt / len * (sec2 * cos_b - tan_d * sin_b * dbeta);

      (*jac)(row + 3, zn + 3) = 1.0;
      (*jac)(row + 3, zi + 3) = -1.0;
      (*jac)(row + 3, ui + 0) = -dt;
    }
  }
}

inline void inequalities_eval(const OcpData& d, const Eigen::VectorXd& w,
                              Eigen::VectorXd& values, Eigen::MatrixXd* jac) {
  const OcpLayout& L = d.layout;
  const int n = L.horizon;
  values.resize(L.n_ineq());
  if (jac) jac->setZero(L.n_ineq(), L.dim());

  const double dt = d.prm.dt;
  const double dt4 = dt * dt * dt * dt;
  const double decel_sq = d.prm.limits.a_minus_max * d.prm.limits.a_minus_max;
  for (int k = 2; k <= n; ++k) {
    const int r = L.gg_row(k);
    const int z0 = L.state_index(k - 2);
    const int z1 = L.state_index(k - 1);
    const int z2 = L.state_index(k);
    const double ax = w[z2 + 0] - 2.0 * w[z1 + 0] + w[z0 + 0];
    const double ay = w[z2 + 1] - 2.0 * w[z1 + 1] + w[z0 + 1];
    values[r] = (ax * ax + ay * ay) / dt4 - decel_sq;
    if (jac) {
      const double gx = 2.0 * ax / dt4;
      const double gy = 2.0 * ay / dt4;
      (*jac)(r, z2 + 0) = gx;
      (*jac)(r, z1 + 0) = -2.0 * gx;
      (*jac)(r, z0 + 0) = gx;
      (*jac)(r, z2 + 1) = gy;
      (*jac)(r, z1 + 1) = -2.0 * gy;
      (*jac)(r, z0 + 1) = gy;
    }
  }

  for (int k = 0; k <= n; ++k) {
    const int zi = L.state_index(k);
    for (int car = 0; car < 2; ++car) {
      const int r = L.safety_row(k, car);
      const int si = L.slack_index(k, car);
      const double dx = w[zi + 0] - d.obs_x[car][k];
      const double dy = w[zi + 1] - d.obs_y[car][k];
      values[r] = d.r_safe_sq - dx * dx - dy * dy - w[si];
      if (jac) {
        (*jac)(r, zi + 0) = -2.0 * dx;
        (*jac)(r, zi + 1) = -2.0 * dy;
        (*jac)(r, si) = -1.0;
      }
    }
  }

  const double lf = d.prm.geom.l_f;
  const double hw = 0.5 * d.prm.geom.width;
  for (int k = 0; k <= n; ++k) {
    const int zi = L.state_index(k);
    const int r = L.corner_row(k);
    const double st = std::sin(w[zi + 2]);
    const double ct = std::cos(w[zi + 2]);
    const double y = w[zi + 1];
    values[r + 0] = y + lf * st + hw * ct - d.corner_high;  // corner A
    values[r + 1] = y - lf * st + hw * ct - d.corner_high;  // corner D
    values[r + 2] = d.corner_low - (y + lf * st - hw * ct);  // corner B
    values[r + 3] = d.corner_low - (y - lf * st - hw * ct);  // corner C
    if (jac) {
      (*jac)(r + 0, zi + 1) = 1.0;
      (*jac)(r + 0, zi + 2) = lf * ct - hw * st;
      (*jac)(r + 1, zi + 1) = 1.0;
      (*jac)(r + 1, zi + 2) = -lf * ct - hw * st;
      (*jac)(r + 2, zi + 1) = -1.0;
      (*jac)(r + 2, zi + 2) = -lf * ct - hw * st;
      (*jac)(r + 3, zi + 1) = -1.0;
      (*jac)(r + 3, zi + 2) = lf * ct + hw * st;
    }
  }
}

}  // namespace detail

// Builds the N-step transcription of the driving OCP for the given scene.
// The same machinery serves the long-horizon expert (goal tracking at every
// step) and the short-horizon execution layer (waypoint tracking).
inline NlpProblem build_horizon_ocp(const OcpParams& params,
                                    const WorldScene& scene,
                                    const OcpObjective& objective) {
  const int n = params.horizon;
  require(n >= 2, "build_horizon_ocp: horizon must be at least 2");
  require(static_cast<int>(objective.track.size()) == n + 1 &&
              static_cast<int>(objective.refs.size()) == n + 1,
          "build_horizon_ocp: objective arrays must have horizon+1 entries");
  scene.validate();

  auto data = std::make_shared<detail::OcpData>();
  data->prm = params;
  data->layout.horizon = n;
  data->objective = objective;
  data->initial = scene.ego;
  for (int car = 0; car < 2; ++car) {
    data->obs_x[car].resize(n + 1);
    data->obs_y[car].resize(n + 1);
    for (int k = 0; k <= n; ++k) {
      data->obs_x[car][k] = scene.cars[car].x + k * scene.cars[car].vx * params.dt;
      data->obs_y[car][k] = scene.cars[car].y + k * scene.cars[car].vy * params.dt;
    }
  }
  const double lower_center = scene.curb_lower + 0.5 * params.lane_width;
  const double upper_center = scene.curb_upper - 0.5 * params.lane_width;
  data->cg_low = std::min(lower_center, scene.ego.y);
  data->cg_high = std::max(upper_center, scene.ego.y);
  data->corner_low = scene.curb_lower + params.curb_margin;
  data->corner_high = scene.curb_upper - params.curb_margin;
  const double r = params.geom.safe_radius() + params.safety_margin;
  data->r_safe_sq = r * r;

  const OcpLayout& L = data->layout;
  NlpProblem problem;
  problem.dim = L.dim();
  problem.n_eq = L.n_eq();
  problem.n_ineq = L.n_ineq();
  problem.objective = [data](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    return detail::objective_eval(*data, w, grad);
  };
  problem.equalities = [data](const Eigen::VectorXd& w, Eigen::VectorXd& v,
                              Eigen::MatrixXd* jac) {
    detail::equalities_eval(*data, w, v, jac);
  };
  problem.inequalities = [data](const Eigen::VectorXd& w, Eigen::VectorXd& v,
                                Eigen::MatrixXd* jac) {
    detail::inequalities_eval(*data, w, v, jac);
  };

  const double inf = std::numeric_limits<double>::infinity();
  problem.lower = Eigen::VectorXd::Constant(L.dim(), -inf);
  problem.upper = Eigen::VectorXd::Constant(L.dim(), inf);
  const double theta_lo = std::min(-params.theta_limit, scene.ego.theta);
  const double theta_hi = std::max(params.theta_limit, scene.ego.theta);
  const double v_hi = std::max(params.limits.v_max, scene.ego.v);
  for (int k = 1; k <= n; ++k) {
    const int zi = L.state_index(k);
    problem.lower[zi + 1] = data->cg_low;   // Eq-(11)-style lane box on y
    problem.upper[zi + 1] = data->cg_high;
    problem.lower[zi + 2] = theta_lo;
    problem.upper[zi + 2] = theta_hi;
    problem.lower[zi + 3] = 0.0;
    problem.upper[zi + 3] = v_hi;
  }
  // Pin the initial state through the bounds as well; the pinning equality
  // rows stay (and stay trivially satisfied).
  const int z0 = L.state_index(0);
  problem.lower[z0 + 0] = problem.upper[z0 + 0] = scene.ego.x;
  problem.lower[z0 + 1] = problem.upper[z0 + 1] = scene.ego.y;
  problem.lower[z0 + 2] = problem.upper[z0 + 2] = scene.ego.theta;
  problem.lower[z0 + 3] = problem.upper[z0 + 3] = scene.ego.v;
  for (int k = 0; k < n; ++k) {
    const int ui = L.control_index(k);
    problem.lower[ui + 0] = -params.limits.a_minus_max;
    problem.upper[ui + 0] = params.limits.a_plus_max;
    problem.lower[ui + 1] = params.limits.steer_min;
    problem.upper[ui + 1] = params.limits.steer_max;
  }
  for (int k = 0; k <= n; ++k) {
    for (int car = 0; car < 2; ++car) {
      problem.lower[L.slack_index(k, car)] = 0.0;
    }
  }
  return problem;
}

// Straight constant-speed zero-steer warm start; safety slacks are seeded at
// the violation level so the soft rows start satisfied.
inline Eigen::VectorXd straight_warm_start(const OcpParams& params,
                                           const WorldScene& scene) {
  OcpLayout L{params.horizon};
  Eigen::VectorXd w = Eigen::VectorXd::Zero(L.dim());
  VehicleState s = scene.ego;
  const double r = params.geom.safe_radius() + params.safety_margin;
  for (int k = 0; k <= params.horizon; ++k) {
    const int zi = L.state_index(k);
    w[zi + 0] = s.x;
    w[zi + 1] = s.y;
    w[zi + 2] = s.theta;
    w[zi + 3] = s.v;
    for (int car = 0; car < 2; ++car) {
      const double ox = scene.cars[car].x + k * scene.cars[car].vx * params.dt;
      const double oy = scene.cars[car].y + k * scene.cars[car].vy * params.dt;
      const double d_sq = (s.x - ox) * (s.x - ox) + (s.y - oy) * (s.y - oy);
      w[L.slack_index(k, car)] = std::max(0.0, r * r - d_sq);
    }
    if (k < params.horizon) {
      s = step_kinematics(s, ControlInput{0.0, 0.0}, params.geom, params.dt);
    }
  }
  return w;
}

// Horizon plan decoded from a decision vector, with its solve report.
struct HorizonPlan {
  std::vector<VehicleState> states;
  std::vector<ControlInput> controls;
  SolveReport report;
  bool flagged_infeasible = false;
  double max_safety_gap = 0.0;  // meters short of the safe radius, real cars only
};

inline HorizonPlan decode_plan(const Eigen::VectorXd& w, int horizon) {
  OcpLayout L{horizon};
  HorizonPlan plan;
  plan.states.resize(horizon + 1);
  plan.controls.resize(horizon);
  for (int k = 0; k <= horizon; ++k) {
    const int zi = L.state_index(k);
    plan.states[k] = VehicleState{w[zi], w[zi + 1], w[zi + 2], w[zi + 3]};
  }
  for (int k = 0; k < horizon; ++k) {
    const int ui = L.control_index(k);
    plan.controls[k] = ControlInput{w[ui], w[ui + 1]};
  }
  return plan;
}

// Receding-horizon shift: drop index 0, duplicate the last entries.
inline Eigen::VectorXd shift_warm_start(const HorizonPlan& previous,
                                        const OcpParams& params,
                                        const WorldScene& scene) {
  const int n = params.horizon;
  require(static_cast<int>(previous.states.size()) == n + 1,
          "shift_warm_start: plan horizon mismatch");
  OcpLayout L{n};
  Eigen::VectorXd w = Eigen::VectorXd::Zero(L.dim());
  const double r = params.geom.safe_radius() + params.safety_margin;
  for (int k = 0; k <= n; ++k) {
    const VehicleState& s = previous.states[std::min(k + 1, n)];
    const int zi = L.state_index(k);
    w[zi + 0] = s.x;
    w[zi + 1] = s.y;
    w[zi + 2] = s.theta;
    w[zi + 3] = s.v;
    for (int car = 0; car < 2; ++car) {
      const double ox = scene.cars[car].x + k * scene.cars[car].vx * params.dt;
      const double oy = scene.cars[car].y + k * scene.cars[car].vy * params.dt;
      const double d_sq = (s.x - ox) * (s.x - ox) + (s.y - oy) * (s.y - oy);
      w[L.slack_index(k, car)] = std::max(0.0, r * r - d_sq);
    }
  }
  for (int k = 0; k < n; ++k) {
    const ControlInput& u = previous.controls[std::min(k + 1, n - 1)];
    const int ui = L.control_index(k);
    w[ui + 0] = u.accel;
    w[ui + 1] = u.steer;
  }
  return w;
}

// Post-solve audit of a plan against the true (untightened) constraints.
struct PlanGrade {
  double dynamics_residual = 0.0;   // max |z_{k+1} - f(z_k, u_k)| component
  double gg_residual = 0.0;         // max (ax^2+ay^2) - a_minus^2
  double corner_violation = 0.0;    // meters beyond the true curbs
  double safety_gap_real = 0.0;     // meters short of R, real cars only
  double safety_gap_all = 0.0;      // including virtual cars
};

inline PlanGrade grade_plan(const HorizonPlan& plan, const WorldScene& scene,
                            const OcpParams& params) {
  PlanGrade grade;
  const int n = static_cast<int>(plan.controls.size());
  const double dt = params.dt;
  const double ratio = params.geom.l_r / params.geom.length();
  for (int k = 0; k < n; ++k) {
    const VehicleState& z = plan.states[k];
    const VehicleState& zn = plan.states[k + 1];
    const ControlInput& u = plan.controls[k];
    const double beta = std::atan(ratio * std::tan(u.steer));
    const double heading = z.theta + beta;
    const double rx = zn.x - z.x - z.v * std::cos(heading) * dt;
    const double ry = zn.y - z.y - z.v * std::sin(heading) * dt;
    const double rt = zn.theta - z.theta -
                      z.v * std::tan(u.steer) / params.geom.length() *
                          std::cos(beta) * dt;
    const double rv = zn.v - z.v - u.accel * dt;
    grade.dynamics_residual =
        std::max({grade.dynamics_residual, std::abs(rx), std::abs(ry),
                  std::abs(rt), std::abs(rv)});
  }
  const double decel_sq = params.limits.a_minus_max * params.limits.a_minus_max;
  for (int k = 2; k <= n; ++k) {
    const double ax = accel_from_positions(
        {plan.states[k - 2].x, plan.states[k - 1].x, plan.states[k].x}, dt);
    const double ay = accel_from_positions(
        {plan.states[k - 2].y, plan.states[k - 1].y, plan.states[k].y}, dt);
    grade.gg_residual = std::max(grade.gg_residual, ax * ax + ay * ay - decel_sq);
  }
  for (int k = 0; k <= n; ++k) {
    const CornerLaterals corners =
        corner_lateral_positions(plan.states[k], params.geom);
    grade.corner_violation =
        std::max({grade.corner_violation, corners.max() - scene.curb_upper,
                  scene.curb_lower - corners.min()});
    for (int car = 0; car < 2; ++car) {
      const double ox = scene.cars[car].x + k * scene.cars[car].vx * dt;
      const double oy = scene.cars[car].y + k * scene.cars[car].vy * dt;
      const double dist = std::hypot(plan.states[k].x - ox, plan.states[k].y - oy);
      const double gap = std::max(0.0, params.geom.safe_radius() - dist);
      grade.safety_gap_all = std::max(grade.safety_gap_all, gap);
      if (!scene.cars[car].is_virtual) {
        grade.safety_gap_real = std::max(grade.safety_gap_real, gap);
      }
    }
  }
  grade.corner_violation = std::max(0.0, grade.corner_violation);
  return grade;
}

}  // namespace hierdrive
