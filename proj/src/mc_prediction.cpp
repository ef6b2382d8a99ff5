#include "ecut_mppi/mc_prediction.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ecut_mppi {
namespace {

void require_attention_form(const HybridAgentModel& model) {
  const bool ok = model.modes.size() == 2 && !model.modes[0].robot_repels &&
                  model.modes[1].robot_repels && !model.modes[0].dynamics &&
                  !model.modes[1].dynamics && model.sensing_radius > 0.0;
  if (!ok)
    throw std::invalid_argument(
        "replica prediction requires the two-mode attention agent form "
        "(inattentive mode first, attentive mode second, built-in dynamics)");
}

}  // namespace

DistanceStats mc_agent_step(Eigen::Ref<Eigen::Matrix2Xd> replicas,
                            const HybridAgentModel& model, const RobotState& robot,
                            double robot_radius, SwitchingPolicy switching, double dt,
                            Rng& rng) {
  require_attention_form(model);
  const auto k = replicas.cols();
  if (k < 2)
    throw std::invalid_argument("replica prediction needs at least 2 replicas, got " +
                                std::to_string(k));

  thread_local std::vector<double> dist;
  dist.resize(static_cast<size_t>(k));
  const double combined_radius = robot_radius + model.radius;

  double clearance_sum = 0.0;
  Vec2 cloud_mean = Vec2::Zero();
  for (Eigen::Index i = 0; i < k; ++i) {
    const double d = (replicas.col(i) - robot.position).norm();
    dist[static_cast<size_t>(i)] = d;
    clearance_sum += d - combined_radius;
    cloud_mean += replicas.col(i);
  }
  cloud_mean /= static_cast<double>(k);

  DistanceStats stats;
  stats.mean = clearance_sum / static_cast<double>(k);
  double ssq = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double dev = dist[static_cast<size_t>(i)] - combined_radius - stats.mean;
    ssq += dev * dev;
  }
  stats.stddev = std::sqrt(std::max(ssq / static_cast<double>(k - 1), 0.0));

  bool pinned = false, pinned_attentive = false;
  if (switching == SwitchingPolicy::kMeanBased) {
    pinned = true;
    pinned_attentive = (cloud_mean - robot.position).norm() <= model.sensing_radius;
  } else if (switching == SwitchingPolicy::kUnaware) {
    pinned = true;
  }

  const double scale =
      model.noise_scaling == NoiseScaling::kStep ? dt * dt : dt;
  for (Eigen::Index i = 0; i < k; ++i) {
    const bool attentive =
        pinned ? pinned_attentive
               : dist[static_cast<size_t>(i)] <= model.sensing_radius;
    Vec2 field = Vec2::Zero();
    if (attentive) add_field_source(replicas.col(i), robot.position, 0.0, model.field, field);
    for (const Obstacle& obs : model.obstacles)
      add_field_source(replicas.col(i), obs.center, obs.radius, model.field, field);
    clip_field(field, model.field.max_speed);

    const Vec2 velocity = model.nominal_velocity + field;
    const double speed = velocity.norm();
    const double variance = speed <= 0.0 ? model.disturbance.alpha
                                         : model.disturbance.alpha *
                                               std::tanh(model.disturbance.beta / speed);
    const double sigma = std::sqrt(variance * scale);
    replicas.col(i) += velocity * dt + sigma * Vec2(rng.normal(), rng.normal());
  }
  return stats;
}

McPredictionBundle mc_agent_rollout(const std::vector<HybridAgentModel>& models,
                                    const std::vector<GaussianMoments>& beliefs,
                                    const std::vector<RobotState>& robot_path, int steps,
                                    int replicas, double robot_radius,
                                    SwitchingPolicy switching, double dt, Rng& rng) {
  if (models.size() != beliefs.size())
    throw std::invalid_argument("mc_agent_rollout: one belief per model required");
  if (replicas < 2)
    throw std::invalid_argument("mc_agent_rollout: needs at least 2 replicas, got " +
                                std::to_string(replicas));
  if (steps < 0 || static_cast<size_t>(steps) > robot_path.size())
    throw std::invalid_argument("mc_agent_rollout: robot path shorter than requested steps");
  for (const HybridAgentModel& m : models) require_attention_form(m);

  const int n_agents = static_cast<int>(models.size());
  Eigen::Matrix2Xd cloud(2, static_cast<Eigen::Index>(replicas) * n_agents);
  for (int a = 0; a < n_agents; ++a) {
    if (beliefs[a].mean.size() != 2)
      throw std::invalid_argument("mc_agent_rollout: agent beliefs must be planar");
    const Eigen::Matrix2d root = cholesky_2x2_psd(beliefs[a].covariance);
    for (int i = 0; i < replicas; ++i) {
      const Vec2 z(rng.normal(), rng.normal());
      cloud.col(static_cast<Eigen::Index>(a) * replicas + i) =
          Vec2(beliefs[a].mean) + root * z;
    }
  }

  McPredictionBundle bundle;
  bundle.replicas = replicas;
  bundle.stats.resize(static_cast<size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    bundle.stats[static_cast<size_t>(t)].resize(static_cast<size_t>(n_agents));
    for (int a = 0; a < n_agents; ++a) {
      bundle.stats[static_cast<size_t>(t)][static_cast<size_t>(a)] = mc_agent_step(
          cloud.middleCols(static_cast<Eigen::Index>(a) * replicas, replicas), models[a],
          robot_path[static_cast<size_t>(t)], robot_radius, switching, dt, rng);
    }
  }
  return bundle;
}

double mc_stage_cost_risk(const PlannerConfig& cfg, const Vec2& robot_position,
                          const std::vector<DistanceStats>& agent_stats,
                          const std::vector<Obstacle>& obstacles) {
  double min_agent = std::numeric_limits<double>::infinity();
  for (const DistanceStats& s : agent_stats)
    min_agent = std::min(min_agent, s.mean - cfg.risk_sigma_gain * s.stddev);
  double min_obstacle = std::numeric_limits<double>::infinity();
  for (const Obstacle& obs : obstacles)
    min_obstacle =
        std::min(min_obstacle, distance_to_obstacle(robot_position, cfg.robot_radius, obs));
  return risk_cost(min_agent, min_obstacle, cfg);
}

}  // namespace ecut_mppi
