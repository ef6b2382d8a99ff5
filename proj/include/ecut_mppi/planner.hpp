#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ecut_mppi/dynamics.hpp"
#include "ecut_mppi/rng.hpp"
#include "ecut_mppi/unscented.hpp"

namespace ecut_mppi {

/// How agent mode switches are resolved inside planner rollouts.
///  kPerSigmaPoint: every sigma point (or replica) picks its own mode.
///  kMeanBased:     the set mean picks one mode for all points of that agent.
///  kUnaware:       agents are assumed inattentive regardless of the robot.
enum class SwitchingPolicy { kPerSigmaPoint, kMeanBased, kUnaware };

/// Uncertainty propagation used for agent prediction inside rollouts.
enum class PredictionMode { kSigmaPoints, kMonteCarlo };

enum class RobotModel { kSingleIntegrator, kUnicycle };

struct ControlBounds {
  Vec2 lower{-1e9, -1e9};
  Vec2 upper{1e9, 1e9};
};

struct PlannerConfig {
  int horizon = 40;                    // H
  int samples = 500;                   // M
  double dt = 0.05;
  Eigen::Matrix2d noise_covariance =  // control perturbation covariance
      4.0 * Eigen::Matrix2d::Identity();
  double lambda = 1.0;                 // weighting temperature
  double control_cost_weight = 0.1;    // in [0, lambda]
  double goal_weight = 1.0;
  double agent_risk_weight = 10.0;
  double obstacle_risk_weight = 10.0;
  double risk_sigma_gain = 1.96;       // clearance penalized at mean - gain*std
  double safety_margin = 0.0;          // extra clearance subtracted in the barrier
  double distance_floor = 0.01;        // barrier saturation distance
  SwitchingPolicy switching = SwitchingPolicy::kPerSigmaPoint;
  PredictionMode prediction = PredictionMode::kSigmaPoints;
  int mc_replicas = 20;                // only used with kMonteCarlo
  RobotModel robot_model = RobotModel::kSingleIntegrator;
  double robot_radius = 0.3;
  std::optional<ControlBounds> control_bounds;
  UtParams ut;
  int threads = 1;                     // 0 = hardware concurrency
  uint64_t seed = 0;
};

/// Throws std::invalid_argument on out-of-range settings.
void validate(const PlannerConfig& cfg);

/// Snapshot of the world a planning step optimizes against. Agent beliefs are
/// position Gaussians, one per model; obstacles here are the ones the robot
/// is penalized for (agents may carry their own obstacle list for the field).
struct PlanningProblem {
  RobotState robot;
  Vec2 goal{0.0, 0.0};
  std::vector<HybridAgentModel> models;
  std::vector<GaussianMoments> beliefs;
  std::vector<Obstacle> obstacles;
};

void validate(const PlanningProblem& problem);

/// Draws samples*horizon control perturbations with covariance noise_cov,
/// stored column-major as a 2 x (samples*horizon) matrix; sample m occupies
/// columns [m*horizon, (m+1)*horizon).
Eigen::MatrixXd sample_perturbations(const Eigen::Matrix2d& noise_cov, int horizon,
                                     int samples, Rng& rng);

/// Unnormalized importance weights exp(-(cost - min_cost) / lambda). The best
/// sample always gets weight one, so the normalizer is at least one.
Eigen::VectorXd mppi_weights(const Eigen::VectorXd& costs, double lambda);

/// Weight-averaged control update: nominal + sum_m w_m eps_m / sum_m w_m.
Eigen::Matrix2Xd update_control(const Eigen::Matrix2Xd& nominal,
                                const Eigen::MatrixXd& perturbations,
                                const Eigen::VectorXd& weights);

double stage_cost_convergence(const Vec2& position, const Vec2& goal, double goal_weight);

/// Reciprocal-barrier risk term from the worst agent clearance and the worst
/// obstacle clearance. Non-finite clearances (no agents / no obstacles)
/// contribute nothing; finite ones are reduced by the safety margin and
/// saturated at the distance floor.
double risk_cost(double min_agent_clearance, double min_obstacle_clearance,
                 const PlannerConfig& cfg);

/// Risk term evaluated on explicit agent sigma-point sets: per agent the
/// clearance is the weighted mean minus risk_sigma_gain times the weighted
/// standard deviation of the center distance less both body radii.
double stage_cost_risk(const PlannerConfig& cfg, const Vec2& robot_position,
                       const std::vector<SigmaPointSet>& agent_sets,
                       const std::vector<double>& agent_radii,
                       const std::vector<Obstacle>& obstacles);

struct RolloutResult {
  double cost = 0.0;
  RobotState final_state;
  std::vector<RobotState> path;  // filled only when requested, [x0 .. xH]
};

/// Simulates one control sample over the horizon, propagating every agent
/// belief with expansion-compression sigma steps (or Monte-Carlo replicas)
/// and accumulating stage, terminal and control costs.
RolloutResult rollout(const PlannerConfig& cfg, const PlanningProblem& problem,
                      const Eigen::Matrix2Xd& nominal, const Eigen::Matrix2Xd& perturbation,
                      bool record_path = false);

/// Agent-belief prediction along a fixed robot path: robot_path[t] is the
/// robot state agents react to during step t. Returns [step][agent] sets for
/// steps 1..steps. Always uses sigma-point propagation.
std::vector<std::vector<SigmaPointSet>> predict_agent_sets(
    const PlannerConfig& cfg, const PlanningProblem& problem,
    const std::vector<RobotState>& robot_path, int steps);

/// Receding-horizon MPPI loop: step() optimizes the control sequence against
/// the given problem, returns the first command, and shifts the sequence by
/// one step (repeating the last entry) as the warm start for the next call.
class MppiPlanner {
 public:
  explicit MppiPlanner(const PlannerConfig& cfg);

  struct StepResult {
    ControlInput command;
    Eigen::Matrix2Xd optimized;  // full updated sequence before the shift
    double min_cost = 0.0;
    double mean_cost = 0.0;
    double expected_cost = 0.0;  // weight-averaged sample cost
    double weight_sum = 0.0;
    int best_sample = 0;
  };

  StepResult step(const PlanningProblem& problem);

  const Eigen::Matrix2Xd& nominal() const { return nominal_; }
  const PlannerConfig& config() const { return cfg_; }

  /// Clears the warm start back to zeros and reseeds the sampling stream.
  void reset();

 private:
  PlannerConfig cfg_;
  Rng rng_;
  Eigen::Matrix2Xd nominal_;
};

}  // namespace ecut_mppi
