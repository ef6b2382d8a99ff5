#pragma once

#include <string>
#include <vector>

#include "ecut_mppi/dynamics.hpp"
#include "ecut_mppi/planner.hpp"

namespace ecut_mppi {

/// Scenario file errors carry the offending field path in the message.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PlannerKind { kEcut, kMcBaseline };

/// Whether the simulated ground truth samples the agents' disturbance or
/// moves them along the conditional mean only.
struct GroundTruthPolicy {
  bool sample_noise = true;
};

/// Planner-side observation model: beliefs are centered on the true agent
/// positions with this isotropic standard deviation.
struct BeliefPolicy {
  double position_stddev = 0.05;
};

/// Fully resolved description of one benchmark world. All agents share the
/// same hybrid model parameters; their initial positions differ.
struct Scenario {
  int schema_version = 1;
  std::string name = "unnamed";
  double dt = 0.05;
  int episode_steps = 100;
  double goal_tolerance = 0.3;

  RobotModel robot_model = RobotModel::kSingleIntegrator;
  RobotState robot_start;
  double robot_radius = 0.3;
  Vec2 goal{0.0, 0.0};

  std::vector<Obstacle> obstacles;

  std::vector<Vec2> agent_starts;
  double agent_radius = 0.3;
  double sensing_radius = 2.0;
  Vec2 nominal_velocity{3.0, 0.0};
  DisturbanceParams disturbance{80.0, 1.0};
  PotentialFieldParams field{0.5, 2.0, 2.0};
  NoiseScaling noise_scaling = NoiseScaling::kStep;

  GroundTruthPolicy ground_truth;
  BeliefPolicy belief;

  PlannerKind planner_kind = PlannerKind::kEcut;
  PlannerConfig planner;  // dt, robot model/radius and prediction mode are
                          // kept in sync with the fields above on load
};

/// Parses and validates a scenario file (JSON). Unknown keys anywhere in the
/// document are rejected; error messages name the field path.
Scenario load_scenario(const std::string& path);

/// Same, from an in-memory document. The `origin` tag is used in messages.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<inline>");

/// Re-validates a scenario assembled in code (applies the same rules as the
/// file loader) and re-syncs the derived planner fields.
void finalize(Scenario& scenario);

/// Fully resolved scenario as canonical, key-ordered JSON with every default
/// materialized. Byte-stable; used as the reproducibility header of exports
/// and for variant-isolation diffs.
std::string scenario_echo(const Scenario& scenario);

/// The shared hybrid model every agent of the scenario follows.
HybridAgentModel agent_model(const Scenario& scenario);

/// Planning problem with robot, goal, obstacles and one model per agent.
/// Belief means are the agents' initial positions; the simulator overwrites
/// them with the true positions before every planning step.
PlanningProblem base_problem(const Scenario& scenario);

/// Copy with a different switching policy (the aware/unaware/mean-based
/// comparison axis). Only that one field changes.
Scenario with_switching(const Scenario& scenario, SwitchingPolicy policy);

/// Copy switched to the replica-prediction baseline with the given K.
Scenario with_mc_baseline(const Scenario& scenario, int replicas);

}  // namespace ecut_mppi
