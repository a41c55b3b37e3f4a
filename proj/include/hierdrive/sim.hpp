#pragma once

#include <chrono>
#include <functional>
#include <optional>

#include "hierdrive/expert.hpp"
#include "hierdrive/features.hpp"
#include "hierdrive/mlp.hpp"
#include "hierdrive/scenario.hpp"
#include "hierdrive/tracking.hpp"

namespace hierdrive {

enum class EpisodeMode { Learned, ExpertOnly, ShortOnly };
enum class EpisodeStatus { Completed, Collision, CurbHit, Stalled, Timeout };

inline const char* to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Completed: return "completed";
    case EpisodeStatus::Collision: return "collision";
    case EpisodeStatus::CurbHit: return "curb_hit";
    case EpisodeStatus::Stalled: return "stalled";
    case EpisodeStatus::Timeout: return "timeout";
  }
  return "unknown";
}

struct SimConfig {
  double dt = 0.1;
  int max_steps = 150;
  double course_length = 5.0;  // finish line ahead of the start
  double stall_speed = 0.01;
  double stall_seconds = 3.0;
  double curb_hit_tol = 1e-6;
  DrivingTask task = DrivingTask::Cruise;
};

struct StepRecord {
  double t = 0.0;
  VehicleState ego;
  std::array<SurroundingCar, 2> cars;
  ControlInput applied;
  WaypointPlan reference;  // policy or naive reference; empty in expert mode
  double tracking_rmse = 0.0;
  int solver_iterations = 0;
  bool fallback = false;
  bool label_event = false;
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  EpisodeStatus status = EpisodeStatus::Timeout;
  double duration = 0.0;
  double start_x = 0.0;
  double curb_lower = 0.0;
  double curb_upper = 0.0;
  // Wall-clock samples kept in memory for the real-time contract; never
  // serialized, so logs stay byte-identical across runs.
  std::vector<double> step_seconds;
  std::vector<double> policy_seconds;
};

// Hook invoked once per learned-mode step, before the control is applied.
// The DAgger loop uses it to snapshot states for periodic expert labeling.
using StepHook = std::function<void(int step, const WorldScene& scene,
                                    const FeatureVector& features,
                                    const WaypointPlan& policy_plan,
                                    const ControlInput& prev_input)>;

struct EpisodeRunner {
  LaneWorld world;
  ExpertConfig expert_cfg;
  TrackingConfig tracking_cfg;
  FeatureParams feature_params;
  PreviewGrid grid = default_grid();
  SimConfig sim;

  EpisodeLog run_episode(const WorldScene& scene0, EpisodeMode mode,
                         const MlpPolicy* policy = nullptr,
                         const StepHook& hook = {},
                         std::function<bool(int)> label_at_step = {}) const {
    using clock = std::chrono::steady_clock;
    require(mode != EpisodeMode::Learned || policy != nullptr,
            "run_episode: learned mode needs a policy");
    scene0.validate();

    EpisodeLog log;
    log.start_x = scene0.ego.x;
    log.curb_lower = scene0.curb_lower;
    log.curb_upper = scene0.curb_upper;
    log.status = EpisodeStatus::Timeout;

    VehicleState ego = scene0.ego;
    ControlInput prev_input{0.0, 0.0};
    std::optional<HorizonPlan> warm_short;
    std::optional<HorizonPlan> warm_expert;
    int stall_count = 0;
    const int stall_limit =
        static_cast<int>(std::ceil(sim.stall_seconds / sim.dt));

    for (int step = 0; step < sim.max_steps; ++step) {
      const double t = step * sim.dt;
      WorldScene scene = scene0;
      scene.ego = ego;
      for (int i = 0; i < 2; ++i) {
        if (scene.cars[i].is_virtual) {
          scene.cars[i] = far_virtual_car(ego, scene0.cars[i].y);
        } else {
          scene.cars[i].x = scene0.cars[i].x + t * scene0.cars[i].vx;
          scene.cars[i].y = scene0.cars[i].y + t * scene0.cars[i].vy;
        }
      }
      scene = apply_decision(scene, sim.task, world);

      bool collided = false;
      for (const auto& car : scene.cars) {
        if (!car.is_virtual &&
            !separation_ok(ego, {car.x, car.y}, world.geom)) {
          collided = true;
        }
      }
      if (collided) {
        log.status = EpisodeStatus::Collision;
        break;
      }
      const CornerLaterals corners = corner_lateral_positions(ego, world.geom);
      if (corners.max() > scene.curb_upper + sim.curb_hit_tol ||
          corners.min() < scene.curb_lower - sim.curb_hit_tol) {
        log.status = EpisodeStatus::CurbHit;
        break;
      }
      if (ego.x - log.start_x >= sim.course_length) {
        log.status = EpisodeStatus::Completed;
        break;
      }
      if (stall_count >= stall_limit) {
        log.status = EpisodeStatus::Stalled;
        break;
      }

      const auto t_step0 = clock::now();
      StepRecord rec;
      rec.t = t;
      rec.ego = ego;
      rec.cars = scene.cars;
      rec.label_event = label_at_step && label_at_step(step);

      ControlInput u{0.0, 0.0};
      double policy_sec = 0.0;
      switch (mode) {
        case EpisodeMode::Learned: {
          const FeatureVector features =
              extract_features(scene, grid, prev_input.steer, feature_params);
          const auto t_p0 = clock::now();
          const WaypointPlan wps =
              forward(*policy, features,
                      WaypointAnchor{ego.x, scene.reference_lane_y});
          policy_sec = std::chrono::duration<double>(clock::now() - t_p0).count();
          if (hook) hook(step, scene, features, wps, prev_input);
          const ExecutionResult exec =
              solve_tracking(scene, wps, tracking_cfg, prev_input, warm_short);
          u = exec.first_control;
          warm_short = exec.fallback ? std::nullopt
                                     : std::optional<HorizonPlan>(exec.short_plan);
          rec.reference = wps;
          rec.tracking_rmse = exec.tracking_rmse;
          rec.solver_iterations = exec.report.iterations;
          rec.fallback = exec.fallback;
          break;
        }
        case EpisodeMode::ExpertOnly: {
          const HorizonPlan plan =
              solve_expert(scene, expert_cfg, prev_input, warm_expert);
          if (plan.flagged_infeasible) {
            u = ControlInput{-expert_cfg.ocp.limits.a_minus_max, 0.0};
            warm_expert.reset();
            rec.fallback = true;
          } else {
            u = plan.controls.front();
            warm_expert = plan;
          }
          rec.solver_iterations = plan.report.iterations;
          break;
        }
        case EpisodeMode::ShortOnly: {
          WaypointPlan naive;
          naive.waypoints.resize(tracking_cfg.ocp.horizon);
          for (int k = 1; k <= tracking_cfg.ocp.horizon; ++k) {
            naive.waypoints[k - 1] = {ego.x + k * sim.dt * world.v_max,
                                      scene.reference_lane_y};
          }
          const ExecutionResult exec =
              solve_tracking(scene, naive, tracking_cfg, prev_input, warm_short);
          u = exec.first_control;
          warm_short = exec.fallback ? std::nullopt
                                     : std::optional<HorizonPlan>(exec.short_plan);
          rec.reference = naive;
          rec.tracking_rmse = exec.tracking_rmse;
          rec.solver_iterations = exec.report.iterations;
          rec.fallback = exec.fallback;
          break;
        }
      }

      rec.applied = u;
      log.steps.push_back(rec);
      log.step_seconds.push_back(
          std::chrono::duration<double>(clock::now() - t_step0).count());
      if (mode == EpisodeMode::Learned) log.policy_seconds.push_back(policy_sec);

      ego = step_kinematics(ego, u, world.geom, sim.dt);
      prev_input = u;
      stall_count = ego.v < sim.stall_speed ? stall_count + 1 : 0;
    }
    log.duration = static_cast<double>(log.steps.size()) * sim.dt;
    return log;
  }
};

struct Metrics {
  double min_obstacle_distance = 999.0;  // center distance to real cars (m)
  double min_curb_clearance = 999.0;     // clamped at 0 (m)
  double max_lateral_accel = 0.0;        // |m/s^2| from logged y positions
  double mean_control_delta = 0.0;       // mean ||u_k - u_{k-1}||
  double time_to_goal = 0.0;             // episode duration (s)
  double end_speed = 0.0;                // m/s
};

inline Metrics compute_metrics(const EpisodeLog& log, const VehicleGeometry& geom,
                               double dt) {
  require(!log.steps.empty(), "compute_metrics: empty episode log");
  Metrics m;
  for (const auto& rec : log.steps) {
    for (const auto& car : rec.cars) {
      if (car.is_virtual) continue;
      const double dist = std::hypot(rec.ego.x - car.x, rec.ego.y - car.y);
      m.min_obstacle_distance = std::min(m.min_obstacle_distance, dist);
    }
    const CornerLaterals corners = corner_lateral_positions(rec.ego, geom);
    const double clearance = std::max(
        0.0, std::min(log.curb_upper - corners.max(), corners.min() - log.curb_lower));
    m.min_curb_clearance = std::min(m.min_curb_clearance, clearance);
  }
  for (std::size_t k = 2; k < log.steps.size(); ++k) {
    const double ay = accel_from_positions({log.steps[k - 2].ego.y,
                                            log.steps[k - 1].ego.y,
                                            log.steps[k].ego.y},
                                           dt);
    m.max_lateral_accel = std::max(m.max_lateral_accel, std::abs(ay));
  }
  double du_sum = 0.0;
  for (std::size_t k = 1; k < log.steps.size(); ++k) {
    const double da = log.steps[k].applied.accel - log.steps[k - 1].applied.accel;
    const double ds = log.steps[k].applied.steer - log.steps[k - 1].applied.steer;
    du_sum += std::hypot(da, ds);
  }
  m.mean_control_delta =
      log.steps.size() > 1 ? du_sum / static_cast<double>(log.steps.size() - 1) : 0.0;
  m.time_to_goal = log.duration;
  m.end_speed = log.steps.back().ego.v;
  return m;
}

}  // namespace hierdrive
