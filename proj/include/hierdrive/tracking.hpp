#pragma once

#include <optional>

#include "hierdrive/horizon_ocp.hpp"

namespace hierdrive {

struct TrackingConfig {
  OcpParams ocp;  // horizon defaults to 5 via make_default()
  SolveBudget budget{1500, std::numeric_limits<double>::infinity()};
  SolverOptions solver;
  // Residual levels beyond which the returned plan cannot be trusted and the
  // emergency fallback takes over.
  double fallback_violation = 1e-3;

  static TrackingConfig make_default() {
    TrackingConfig cfg;
    cfg.ocp.horizon = 5;
    return cfg;
  }
};

struct ExecutionResult {
  ControlInput first_control;
  HorizonPlan short_plan;  // 6 states + 5 controls
  SolveReport report;
  double tracking_rmse = 0.0;  // meters, against the reference waypoints
  bool fallback = false;       // emergency braking applied
};

// Short-horizon tracking MPC: follow the reference waypoints under the same
// constraint stack as the expert. Reference index k maps to prediction step
// k+1; step 0 is the pinned current state. When the problem cannot be solved
// to a trustworthy residual level even with safety slack, the fallback is
// maximum braking along the current heading.
inline ExecutionResult solve_tracking(const WorldScene& scene,
                                      const WaypointPlan& reference,
                                      const TrackingConfig& cfg,
                                      const ControlInput& prev_input,
                                      const std::optional<HorizonPlan>& warm = {}) {
  require(reference.frame == WaypointPlan::Frame::Road,
          "solve_tracking: reference must be in the road frame");
  require(static_cast<int>(reference.waypoints.size()) == cfg.ocp.horizon,
          "solve_tracking: reference length must equal the horizon");

  OcpObjective objective;
  objective.track.assign(cfg.ocp.horizon + 1, true);
  objective.track[0] = false;  // step 0 is pinned, no reference for it
  objective.refs.assign(cfg.ocp.horizon + 1, {0.0, 0.0});
  for (int k = 1; k <= cfg.ocp.horizon; ++k) {
    objective.refs[k] = reference.waypoints[k - 1];
  }
  objective.prev_input = prev_input;

  NlpProblem problem = build_horizon_ocp(cfg.ocp, scene, objective);
  Eigen::VectorXd w0 = warm.has_value() ? shift_warm_start(*warm, cfg.ocp, scene)
                                        : straight_warm_start(cfg.ocp, scene);
  SolveReport report = solve(problem, std::move(w0), cfg.budget, cfg.solver);

  ExecutionResult result;
  result.report = report;
  result.short_plan = decode_plan(report.solution, cfg.ocp.horizon);
  result.short_plan.report = report;

  const bool trustworthy =
      report.max_equality_violation <= cfg.fallback_violation &&
      report.max_inequality_violation <= cfg.fallback_violation;
  if (!trustworthy) {
    result.fallback = true;
    result.first_control = ControlInput{-cfg.ocp.limits.a_minus_max, 0.0};
    // Log a braking rollout in place of the untrusted plan.
    std::vector<ControlInput> brake(cfg.ocp.horizon, result.first_control);
    HorizonPlan plan;
    plan.states = rollout(scene.ego, brake, cfg.ocp.geom, cfg.ocp.dt);
    plan.controls = brake;
    plan.report = report;
    plan.flagged_infeasible = true;
    result.short_plan = plan;
  } else {
    result.first_control = result.short_plan.controls.front();
  }

  double sq_sum = 0.0;
  for (int k = 1; k <= cfg.ocp.horizon; ++k) {
    const double ex = result.short_plan.states[k].x - reference.waypoints[k - 1][0];
    const double ey = result.short_plan.states[k].y - reference.waypoints[k - 1][1];
    sq_sum += ex * ex + ey * ey;
  }
  result.tracking_rmse = std::sqrt(sq_sum / cfg.ocp.horizon);
  return result;
}

}  // namespace hierdrive
