#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hierdrive/mlp.hpp"
#include "hierdrive/scenario.hpp"
#include "hierdrive/sim.hpp"

namespace hierdrive {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "write_text_file: cannot open " + path.string());
  out << content;
  require(out.good(), "write_text_file: write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_text_file: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- scenes ----------------------------------------------------------------

inline json scene_to_json(const WorldScene& scene) {
  json cars = json::array();
  for (const auto& c : scene.cars) {
    cars.push_back({{"x", c.x},
                    {"y", c.y},
                    {"vx", c.vx},
                    {"vy", c.vy},
                    {"virtual", c.is_virtual}});
  }
  return json{{"ego",
               {{"x", scene.ego.x},
                {"y", scene.ego.y},
                {"theta", scene.ego.theta},
                {"v", scene.ego.v}}},
              {"cars", cars},
              {"curb_lower", scene.curb_lower},
              {"curb_upper", scene.curb_upper},
              {"reference_lane_y", scene.reference_lane_y},
              {"goal", {{"x", scene.goal_x}, {"y", scene.goal_y}}},
              {"adjacent_direction",
               scene.adjacent_direction == AdjacentDirection::Same ? "same"
                                                                   : "oncoming"}};
}

inline WorldScene scene_from_json(const json& j) {
  WorldScene scene;
  scene.ego.x = j.at("ego").at("x").get<double>();
  scene.ego.y = j.at("ego").at("y").get<double>();
  scene.ego.theta = j.at("ego").at("theta").get<double>();
  scene.ego.v = j.at("ego").at("v").get<double>();
  const auto& cars = j.at("cars");
  require(cars.size() == 2, "scene_from_json: expected exactly 2 cars");
  for (int i = 0; i < 2; ++i) {
    scene.cars[i].x = cars[i].at("x").get<double>();
    scene.cars[i].y = cars[i].at("y").get<double>();
    scene.cars[i].vx = cars[i].at("vx").get<double>();
    scene.cars[i].vy = cars[i].at("vy").get<double>();
    scene.cars[i].is_virtual = cars[i].at("virtual").get<bool>();
  }
  scene.curb_lower = j.at("curb_lower").get<double>();
  scene.curb_upper = j.at("curb_upper").get<double>();
  scene.reference_lane_y = j.at("reference_lane_y").get<double>();
  scene.goal_x = j.at("goal").at("x").get<double>();
  scene.goal_y = j.at("goal").at("y").get<double>();
  scene.adjacent_direction = j.at("adjacent_direction").get<std::string>() == "same"
                                 ? AdjacentDirection::Same
                                 : AdjacentDirection::Oncoming;
  scene.validate();
  return scene;
}

// ---- horizon plans ---------------------------------------------------------

inline json plan_to_json(const HorizonPlan& plan) {
  json states = json::array();
  for (const auto& s : plan.states) {
    states.push_back({{"x", s.x}, {"y", s.y}, {"theta", s.theta}, {"v", s.v}});
  }
  json controls = json::array();
  for (const auto& u : plan.controls) {
    controls.push_back({{"accel", u.accel}, {"steer", u.steer}});
  }
  return json{{"states", states},
              {"controls", controls},
              {"report",
               {{"objective", plan.report.objective_value},
                {"max_equality_violation", plan.report.max_equality_violation},
                {"max_inequality_violation", plan.report.max_inequality_violation},
                {"stationarity", plan.report.stationarity},
                {"iterations", plan.report.iterations},
                {"converged", plan.report.converged}}},
              {"flagged_infeasible", plan.flagged_infeasible},
              {"max_safety_gap", plan.max_safety_gap}};
}

// ---- policy checkpoints ----------------------------------------------------

namespace detail {

inline void hash_doubles(std::uint64_t& h, const double* data, std::size_t n) {
  h = fnv1a64(data, n * sizeof(double), h);
}

inline std::uint64_t policy_checksum(const MlpPolicy& p) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  hash_doubles(h, p.stats.mean.data(), kFeatureDim);
  hash_doubles(h, p.stats.stddev.data(), kFeatureDim);
  // Row-major traversal for a layout-independent checksum.
  for (int i = 0; i < p.w1.rows(); ++i) {
    for (int j = 0; j < p.w1.cols(); ++j) {
      const double v = p.w1(i, j);
      hash_doubles(h, &v, 1);
    }
  }
  hash_doubles(h, p.b1.data(), p.b1.size());
  for (int i = 0; i < p.w2.rows(); ++i) {
    for (int j = 0; j < p.w2.cols(); ++j) {
      const double v = p.w2(i, j);
      hash_doubles(h, &v, 1);
    }
  }
  hash_doubles(h, p.b2.data(), p.b2.size());
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline void save_policy(const MlpPolicy& policy, const std::filesystem::path& path) {
  require(policy.finite(), "save_policy: non-finite parameters");
  ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["input_dim"] = policy.input_dim;
  j["hidden_dim"] = policy.hidden_dim;
  j["output_dim"] = policy.output_dim;
  j["activation"] = "tanh";
  j["mean"] = std::vector<double>(policy.stats.mean.data(),
                                  policy.stats.mean.data() + kFeatureDim);
  j["std"] = std::vector<double>(policy.stats.stddev.data(),
                                 policy.stats.stddev.data() + kFeatureDim);
  std::vector<double> w1;
  for (int i = 0; i < policy.w1.rows(); ++i) {
    for (int k = 0; k < policy.w1.cols(); ++k) w1.push_back(policy.w1(i, k));
  }
  std::vector<double> w2;
  for (int i = 0; i < policy.w2.rows(); ++i) {
    for (int k = 0; k < policy.w2.cols(); ++k) w2.push_back(policy.w2(i, k));
  }
  j["w1"] = w1;
  j["b1"] = std::vector<double>(policy.b1.data(), policy.b1.data() + policy.b1.size());
  j["w2"] = w2;
  j["b2"] = std::vector<double>(policy.b2.data(), policy.b2.data() + policy.b2.size());
  j["checksum"] = detail::hex64(detail::policy_checksum(policy));
  write_text_file(path, j.dump(2) + "\n");
}

inline MlpPolicy load_policy(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), "load_policy: no such file " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail("load_policy: corrupt checkpoint " + path.string() + ": " + e.what());
  }
  require(j.at("format_version").get<int>() == kCheckpointVersion,
          "load_policy: checkpoint version mismatch in " + path.string());
  MlpPolicy p;
  p.input_dim = j.at("input_dim").get<int>();
  p.hidden_dim = j.at("hidden_dim").get<int>();
  p.output_dim = j.at("output_dim").get<int>();
  require(p.input_dim == kFeatureDim && p.output_dim == kPolicyOutputs,
          "load_policy: unexpected layer sizes");
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  require(mean.size() == kFeatureDim && sd.size() == kFeatureDim,
          "load_policy: bad normalization stats");
  for (int i = 0; i < kFeatureDim; ++i) {
    p.stats.mean[i] = mean[i];
    p.stats.stddev[i] = sd[i];
  }
  const auto w1 = j.at("w1").get<std::vector<double>>();
  const auto b1 = j.at("b1").get<std::vector<double>>();
  const auto w2 = j.at("w2").get<std::vector<double>>();
  const auto b2 = j.at("b2").get<std::vector<double>>();
  require(static_cast<int>(w1.size()) == p.hidden_dim * p.input_dim &&
              static_cast<int>(b1.size()) == p.hidden_dim &&
              static_cast<int>(w2.size()) == p.output_dim * p.hidden_dim &&
              static_cast<int>(b2.size()) == p.output_dim,
          "load_policy: parameter array sizes do not match dims");
  p.w1.resize(p.hidden_dim, p.input_dim);
  p.w2.resize(p.output_dim, p.hidden_dim);
  p.b1.resize(p.hidden_dim);
  p.b2.resize(p.output_dim);
  for (int i = 0; i < p.hidden_dim; ++i) {
    for (int k = 0; k < p.input_dim; ++k) p.w1(i, k) = w1[i * p.input_dim + k];
  }
  for (int i = 0; i < p.hidden_dim; ++i) p.b1[i] = b1[i];
  for (int i = 0; i < p.output_dim; ++i) {
    for (int k = 0; k < p.hidden_dim; ++k) p.w2(i, k) = w2[i * p.hidden_dim + k];
  }
  for (int i = 0; i < p.output_dim; ++i) p.b2[i] = b2[i];
  require(j.at("checksum").get<std::string>() ==
              detail::hex64(detail::policy_checksum(p)),
          "load_policy: checksum mismatch (corrupt checkpoint)");
  return p;
}

// ---- datasets --------------------------------------------------------------

inline std::string provenance_tag(const LabeledSample& s) {
  return s.provenance == SampleProvenance::Bootstrap
             ? "bootstrap"
             : "dagger-" + std::to_string(s.dagger_iteration);
}

inline std::string sample_to_jsonl(const LabeledSample& s) {
  ordered_json j;
  j["features"] = std::vector<double>(s.features.data(), s.features.data() + kFeatureDim);
  j["target"] = std::vector<double>(s.target.data(), s.target.data() + kPolicyOutputs);
  j["provenance"] = provenance_tag(s);
  j["deviation"] = s.deviation_at_capture;
  return j.dump();
}

inline LabeledSample sample_from_jsonl(const std::string& line) {
  const json j = json::parse(line);
  LabeledSample s;
  const auto f = j.at("features").get<std::vector<double>>();
  const auto t = j.at("target").get<std::vector<double>>();
  require(f.size() == kFeatureDim && t.size() == kPolicyOutputs,
          "sample_from_jsonl: bad array sizes");
  for (int i = 0; i < kFeatureDim; ++i) s.features[i] = f[i];
  for (int i = 0; i < kPolicyOutputs; ++i) s.target[i] = t[i];
  const std::string tag = j.at("provenance").get<std::string>();
  if (tag == "bootstrap") {
    s.provenance = SampleProvenance::Bootstrap;
  } else {
    require(tag.rfind("dagger-", 0) == 0, "sample_from_jsonl: bad provenance");
    s.provenance = SampleProvenance::Dagger;
    s.dagger_iteration = std::stoi(tag.substr(7));
  }
  s.deviation_at_capture = j.at("deviation").get<double>();
  return s;
}

inline void append_dataset(const std::filesystem::path& path,
                           const std::vector<LabeledSample>& samples,
                           std::size_t from = 0) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  require(out.good(), "append_dataset: cannot open " + path.string());
  for (std::size_t i = from; i < samples.size(); ++i) {
    out << sample_to_jsonl(samples[i]) << "\n";
  }
}

inline std::vector<LabeledSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_dataset: cannot open " + path.string());
  std::vector<LabeledSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) samples.push_back(sample_from_jsonl(line));
  }
  return samples;
}

// Checksummed manifest covering the dataset file at a given iteration.
inline void write_dataset_manifest(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& dataset_path,
                                   int iteration, std::size_t sample_count) {
  const std::string content = read_text_file(dataset_path);
  ordered_json j;
  j["iteration"] = iteration;
  j["dataset_file"] = dataset_path.filename().string();
  j["samples"] = sample_count;
  j["fnv1a64"] = detail::hex64(fnv1a64(content));
  write_text_file(manifest_path, j.dump(2) + "\n");
}

// ---- episode logs and metrics ----------------------------------------------

// Fixed column order; kept in sync with the README documentation.
inline std::string episode_csv(const EpisodeLog& log) {
  std::ostringstream out;
  out << "step,t,x,y,theta,v,accel,steer,car0_x,car0_y,car0_virtual,"
         "car1_x,car1_y,car1_virtual";
  for (int k = 1; k <= 5; ++k) out << ",ref_x" << k << ",ref_y" << k;
  out << ",tracking_rmse,solver_iterations,fallback,label_event\n";
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const StepRecord& r = log.steps[i];
    out << i << ',' << format_double(r.t) << ',' << format_double(r.ego.x) << ','
        << format_double(r.ego.y) << ',' << format_double(r.ego.theta) << ','
        << format_double(r.ego.v) << ',' << format_double(r.applied.accel) << ','
        << format_double(r.applied.steer);
    for (const auto& car : r.cars) {
      out << ',' << format_double(car.x) << ',' << format_double(car.y) << ','
          << (car.is_virtual ? 1 : 0);
    }
    for (int k = 0; k < 5; ++k) {
      if (k < static_cast<int>(r.reference.waypoints.size())) {
        out << ',' << format_double(r.reference.waypoints[k][0]) << ','
            << format_double(r.reference.waypoints[k][1]);
      } else {
        out << ",,";
      }
    }
    out << ',' << format_double(r.tracking_rmse) << ',' << r.solver_iterations
        << ',' << (r.fallback ? 1 : 0) << ',' << (r.label_event ? 1 : 0) << "\n";
  }
  return out.str();
}

inline ordered_json metrics_to_json(const Metrics& m, EpisodeStatus status) {
  ordered_json j;
  j["status"] = to_string(status);
  j["min_obstacle_distance"] = m.min_obstacle_distance;
  j["min_curb_clearance"] = m.min_curb_clearance;
  j["max_lateral_accel"] = m.max_lateral_accel;
  j["mean_control_delta"] = m.mean_control_delta;
  j["time_to_goal"] = m.time_to_goal;
  j["end_speed"] = m.end_speed;
  return j;
}

}  // namespace hierdrive
