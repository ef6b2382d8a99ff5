#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ecut_mppi/planner.hpp"
#include "ecut_mppi/rng.hpp"

namespace ecut_mppi {

/// Empirical clearance statistics of a replica cloud (unbiased stddev).
struct DistanceStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Advances one agent's replica columns a single step and reports the
/// clearance statistics of the pre-advance cloud relative to the robot.
/// Mode switching follows the policy: per replica, from the cloud mean, or
/// pinned to the inattentive mode. The model must be in the two-mode
/// attention form produced by make_attention_model.
DistanceStats mc_agent_step(Eigen::Ref<Eigen::Matrix2Xd> replicas,
                            const HybridAgentModel& model, const RobotState& robot,
                            double robot_radius, SwitchingPolicy switching, double dt,
                            Rng& rng);

/// Replica-based agent prediction along a fixed robot path.
/// stats[t][agent] describes the clearances at time t (t = 0 uses the freshly
/// sampled initial replicas) against robot_path[t].
struct McPredictionBundle {
  int replicas = 0;
  std::vector<std::vector<DistanceStats>> stats;
};

McPredictionBundle mc_agent_rollout(const std::vector<HybridAgentModel>& models,
                                    const std::vector<GaussianMoments>& beliefs,
                                    const std::vector<RobotState>& robot_path, int steps,
                                    int replicas, double robot_radius,
                                    SwitchingPolicy switching, double dt, Rng& rng);

/// Risk barrier evaluated on replica clearance statistics, using the same
/// weights, sigma gain, margin and floor as the sigma-point planner.
double mc_stage_cost_risk(const PlannerConfig& cfg, const Vec2& robot_position,
                          const std::vector<DistanceStats>& agent_stats,
                          const std::vector<Obstacle>& obstacles);

}  // namespace ecut_mppi
