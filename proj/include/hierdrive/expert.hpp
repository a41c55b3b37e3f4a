#pragma once

#include <Eigen/Eigenvalues>
#include <optional>

#include "hierdrive/horizon_ocp.hpp"

namespace hierdrive {

struct ExpertConfig {
  OcpParams ocp;                 // horizon defaults to 30
  SolveBudget budget{6000, std::numeric_limits<double>::infinity()};
  SolverOptions solver;
  double infeasible_gap = 0.01;  // meters of real-car safety shortfall that
                                 // mark a plan as "no expert label available"

  void validate() const {
    require(ocp.horizon >= 2, "ExpertConfig: horizon must be >= 2");
    require(ocp.dt > 0.0, "ExpertConfig: dt must be positive");
    require(ocp.weights.slack_penalty > 0.0,
            "ExpertConfig: slack penalty must be positive");
    for (const Eigen::Matrix2d& m : {ocp.weights.w_e, ocp.weights.w_u}) {
      require(std::abs(m(0, 1) - m(1, 0)) < 1e-12,
              "ExpertConfig: weight matrices must be symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
      require(es.eigenvalues().minCoeff() > 0.0,
              "ExpertConfig: weight matrices must be positive definite");
    }
  }
};

// Long-horizon goal-tracking OCP: every step is pulled toward the scene's
// horizon goal, subject to the full constraint stack.
inline NlpProblem build_expert_problem(const WorldScene& scene,
                                       const ExpertConfig& cfg,
                                       const ControlInput& prev_input) {
  cfg.validate();
  OcpObjective objective;
  objective.track.assign(cfg.ocp.horizon + 1, true);
  objective.refs.assign(cfg.ocp.horizon + 1, {scene.goal_x, scene.goal_y});
  objective.prev_input = prev_input;
  return build_horizon_ocp(cfg.ocp, scene, objective);
}

// Solves the expert problem. The warm start is the previous plan shifted one
// step when given, otherwise a straight constant-speed rollout.
inline HorizonPlan solve_expert(const WorldScene& scene, const ExpertConfig& cfg,
                                const ControlInput& prev_input,
                                const std::optional<HorizonPlan>& warm = {}) {
  NlpProblem problem = build_expert_problem(scene, cfg, prev_input);
  Eigen::VectorXd w0 = warm.has_value()
                           ? shift_warm_start(*warm, cfg.ocp, scene)
                           : straight_warm_start(cfg.ocp, scene);
  SolveReport report = solve(problem, std::move(w0), cfg.budget, cfg.solver);
  HorizonPlan plan = decode_plan(report.solution, cfg.ocp.horizon);
  plan.report = report;
  const PlanGrade grade = grade_plan(plan, scene, cfg.ocp);
  plan.max_safety_gap = grade.safety_gap_real;
  plan.flagged_infeasible =
      !report.converged || grade.safety_gap_real > cfg.infeasible_gap;
  return plan;
}

// First n_short post-initial (x, y) pairs of a converged plan: the
// imitation target handed to the policy layer.
inline WaypointPlan proximate_trajectory(const HorizonPlan& plan, int n_short) {
  require(!plan.flagged_infeasible,
          "proximate_trajectory: plan is flagged infeasible");
  require(n_short >= 1 &&
              n_short <= static_cast<int>(plan.states.size()) - 1,
          "proximate_trajectory: n_short out of range");
  WaypointPlan wps;
  wps.waypoints.reserve(n_short);
  for (int k = 1; k <= n_short; ++k) {
    wps.waypoints.push_back({plan.states[k].x, plan.states[k].y});
  }
  return wps;
}

}  // namespace hierdrive
