#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hierdrive/common.hpp"
#include "hierdrive/vehicle.hpp"

namespace hierdrive {

struct SurroundingCar {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  bool is_virtual = false;
};

enum class AdjacentDirection { Same, Oncoming };
enum class DrivingTask { Cruise, FollowOnly };

// Two-lane abstract scene: reference lane center, one front-car slot and one
// adjacent-lane slot (real or virtual), curbs, and the horizon goal.
struct WorldScene {
  VehicleState ego;
  std::array<SurroundingCar, 2> cars;  // [0] front slot, [1] adjacent slot
  double curb_lower = 0.0;             // y^-_curb
  double curb_upper = 0.0;             // y^+_curb
  double reference_lane_y = 0.0;
  double goal_x = 0.0;
  double goal_y = 0.0;
  AdjacentDirection adjacent_direction = AdjacentDirection::Same;

  void validate() const {
    require(ego.finite(), "WorldScene: non-finite ego state");
    for (const auto& c : cars) {
      require(is_finite(c.x) && is_finite(c.y) && is_finite(c.vx) && is_finite(c.vy),
              "WorldScene: non-finite surrounding car");
    }
    require(curb_lower < reference_lane_y && reference_lane_y < curb_upper,
            "WorldScene: reference lane must lie between the curbs");
    require(goal_x > ego.x, "WorldScene: goal must be ahead of the ego");
  }
};

// Shared lane-frame parameters of the desk-scale world.
struct LaneWorld {
  double lane_width = 0.38;      // W_L
  double v_max = 1.0;
  double horizon_advance = 3.0;  // N * dt * v_max, goal look-ahead
  VehicleGeometry geom;
};

// Lane center of the non-reference lane in the scene's two-lane window.
inline double adjacent_lane_y(const WorldScene& scene, const LaneWorld& world) {
  const double lower_center = scene.curb_lower + 0.5 * world.lane_width;
  const double upper_center = scene.curb_upper - 0.5 * world.lane_width;
  const bool ref_is_lower =
      std::abs(scene.reference_lane_y - lower_center) <
      std::abs(scene.reference_lane_y - upper_center);
  return ref_is_lower ? upper_center : lower_center;
}

struct MultiLaneRoad {
  int lane_count = 2;
  std::vector<bool> marker_crossable;  // size lane_count - 1
  double curb_lower = -0.19;           // physical road edges
  double lane_width = 0.38;

  double curb_upper() const { return curb_lower + lane_count * lane_width; }
  double lane_center(int lane) const {
    return curb_lower + (lane + 0.5) * lane_width;
  }
  void validate() const {
    require(lane_count >= 2, "MultiLaneRoad: need at least 2 lanes");
    require(static_cast<int>(marker_crossable.size()) == lane_count - 1,
            "MultiLaneRoad: markers must be lane_count - 1");
  }
};

// Far-downrange padding car used when a slot has no real occupant.
inline SurroundingCar far_virtual_car(const VehicleState& ego, double lane_y) {
  SurroundingCar c;
  c.x = ego.x + 100.0;
  c.y = lane_y;
  c.vx = ego.v;
  c.vy = 0.0;
  c.is_virtual = true;
  return c;
}

struct ScenarioRanges {
  double ego_v_min = 0.3, ego_v_max = 1.0;
  double ego_y_jitter = 0.03;
  double ego_theta_jitter = 0.05;
  double front_gap_min = 0.7, front_gap_max = 2.4;
  double front_v_min = 0.1, front_v_max = 0.9;
  double front_y_min = -0.06, front_y_max = 0.02;
  double adj_dx_min = -0.8, adj_dx_max = 2.0;
  double adj_v_min = 0.1, adj_v_max = 1.0;
  double adj_y_jitter = 0.02;
  double p_adjacent_far = 0.4;  // adjacent lane clear (far pad)
  double p_front_far = 0.1;     // empty road ahead
  double p_no_pass = 0.2;       // blocked adjacent lane via the virtual car
  AdjacentDirection adjacent_direction = AdjacentDirection::Same;
  int max_retries = 64;
};

inline WorldScene apply_no_pass_virtual_car(WorldScene scene,
                                            const LaneWorld& world);

// Decision-making stub: keeps the current reference lane and posts the goal
// one horizon ahead; FollowOnly additionally blocks the adjacent lane.
inline WorldScene apply_decision(WorldScene scene, DrivingTask task,
                                 const LaneWorld& world) {
  scene.goal_x = scene.ego.x + world.horizon_advance;
  scene.goal_y = scene.reference_lane_y;
  if (task == DrivingTask::FollowOnly) {
    scene = apply_no_pass_virtual_car(scene, world);
  }
  return scene;
}

// Randomized abstract scenario in the two-lane frame: curbs at -+0.5/1.5
// lane widths, ego near the lower lane center. Deterministic per seed.
inline WorldScene sample_scenario(std::uint64_t rng_seed,
                                  const ScenarioRanges& ranges,
                                  const LaneWorld& world) {
  std::mt19937_64 rng(rng_seed);
  const double wl = world.lane_width;
  for (int attempt = 0; attempt < ranges.max_retries; ++attempt) {
    WorldScene scene;
    scene.curb_lower = -0.5 * wl;
    scene.curb_upper = 1.5 * wl;
    scene.reference_lane_y = 0.0;
    scene.adjacent_direction = ranges.adjacent_direction;

    scene.ego.x = 0.0;
    scene.ego.y = uniform(rng, -ranges.ego_y_jitter, ranges.ego_y_jitter);
    scene.ego.theta = uniform(rng, -ranges.ego_theta_jitter, ranges.ego_theta_jitter);
    scene.ego.v = std::min(world.v_max, uniform(rng, ranges.ego_v_min, ranges.ego_v_max));

    const bool front_far = unit_from_bits(rng()) < ranges.p_front_far;
    const double gap = uniform(rng, ranges.front_gap_min, ranges.front_gap_max);
    const double front_v = uniform(rng, ranges.front_v_min, ranges.front_v_max);
    const double front_y = uniform(rng, ranges.front_y_min, ranges.front_y_max);
    if (front_far) {
      scene.cars[0] = far_virtual_car(scene.ego, 0.0);
    } else {
      scene.cars[0] = SurroundingCar{scene.ego.x + gap, front_y, front_v, 0.0, false};
    }

    const bool adj_far = unit_from_bits(rng()) < ranges.p_adjacent_far;
    const double adj_dx = uniform(rng, ranges.adj_dx_min, ranges.adj_dx_max);
    const double adj_v_mag = uniform(rng, ranges.adj_v_min, ranges.adj_v_max);
    const double adj_y = wl + uniform(rng, -ranges.adj_y_jitter, ranges.adj_y_jitter);
    const bool no_pass = unit_from_bits(rng()) < ranges.p_no_pass;
    if (adj_far || no_pass) {
      scene.cars[1] = far_virtual_car(scene.ego, wl);
    } else {
      const double adj_v = ranges.adjacent_direction == AdjacentDirection::Oncoming
                               ? -adj_v_mag
                               : adj_v_mag;
      scene.cars[1] = SurroundingCar{scene.ego.x + adj_dx, adj_y, adj_v, 0.0, false};
    }

    scene = apply_decision(scene, no_pass ? DrivingTask::FollowOnly : DrivingTask::Cruise,
                           world);

    bool clear = true;
    for (const auto& car : scene.cars) {
      if (car.is_virtual) continue;
      if (!separation_ok(scene.ego, {car.x, car.y}, world.geom)) clear = false;
    }
    if (!clear) continue;
    scene.validate();
    return scene;
  }
  fail("sample_scenario: could not draw a separation-feasible scene; check ranges");
}

// Multi-lane reduction: pick the two-lane window holding the ego and
// reference lanes, fence it with virtual curbs half a lane beyond the window
// centers (road edges kept where the window touches them), and fill the two
// car slots from the listed cars.
inline WorldScene reduce_to_abstract(const MultiLaneRoad& road, int ego_lane,
                                     int reference_lane,
                                     const VehicleState& ego,
                                     const std::vector<SurroundingCar>& cars,
                                     const LaneWorld& world) {
  road.validate();
  require(ego_lane >= 0 && ego_lane < road.lane_count,
          "reduce_to_abstract: ego lane out of range");
  require(reference_lane >= 0 && reference_lane < road.lane_count,
          "reduce_to_abstract: reference lane out of range");
  require(std::abs(reference_lane - ego_lane) <= 1,
          "reduce_to_abstract: reference lane must be adjacent to the ego lane");

  int low = std::min(ego_lane, reference_lane);
  int high = std::max(ego_lane, reference_lane);
  if (low == high) {  // same lane: take the neighbour above when it exists
    if (high + 1 < road.lane_count) {
      high = high + 1;
    } else {
      low = low - 1;
    }
  }

  WorldScene scene;
  scene.ego = ego;
  scene.curb_lower = road.lane_center(low) - 0.5 * road.lane_width;
  scene.curb_upper = road.lane_center(high) + 0.5 * road.lane_width;
  scene.reference_lane_y = road.lane_center(reference_lane);

  const int ego_window_lane = ego_lane;
  const int other_lane = (ego_window_lane == low) ? high : low;

  // Front slot: nearest car ahead in the ego's lane.
  const SurroundingCar* front = nullptr;
  const SurroundingCar* adjacent = nullptr;
  for (const auto& car : cars) {
    const int lane = static_cast<int>(
        std::floor((car.y - road.curb_lower) / road.lane_width));
    if (lane == ego_window_lane && car.x > ego.x) {
      if (!front || car.x < front->x) front = &car;
    }
    if (lane == other_lane) {
      if (!adjacent || std::abs(car.x - ego.x) < std::abs(adjacent->x - ego.x)) {
        adjacent = &car;
      }
    }
  }
  scene.cars[0] = front ? *front : far_virtual_car(ego, road.lane_center(ego_window_lane));
  scene.cars[1] = adjacent ? *adjacent : far_virtual_car(ego, road.lane_center(other_lane));

  scene = apply_decision(scene, DrivingTask::Cruise, world);
  scene.validate();
  return scene;
}

// No-pass blocking: the adjacent slot becomes a virtual car alongside the
// ego at the adjacent lane center, moving at the ego's speed. Idempotent.
inline WorldScene apply_no_pass_virtual_car(WorldScene scene,
                                            const LaneWorld& world) {
  SurroundingCar blocker;
  blocker.x = scene.ego.x;
  blocker.y = adjacent_lane_y(scene, world);
  blocker.vx = scene.ego.v * std::cos(scene.ego.theta);
  blocker.vy = 0.0;
  blocker.is_virtual = true;
  scene.cars[1] = blocker;
  return scene;
}

}  // namespace hierdrive
