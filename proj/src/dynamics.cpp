#include "ecut_mppi/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ecut_mppi {

double wrap_angle(double angle) {
  angle = std::remainder(angle, 2.0 * std::numbers::pi);
  if (angle <= -std::numbers::pi) angle += 2.0 * std::numbers::pi;
  return angle;
}

RobotState single_integrator_step(const RobotState& state, const ControlInput& u, double dt) {
  RobotState next = state;
  next.position.x() += u.u1 * dt;
  next.position.y() += u.u2 * dt;
  return next;
}

RobotState unicycle_step(const RobotState& state, const ControlInput& u, double dt) {
  RobotState next = state;
  next.position.x() += u.u1 * std::cos(state.heading) * dt;
  next.position.y() += u.u1 * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + u.u2 * dt);
  return next;
}

Vec2 potential_field(const Vec2& agent, const std::optional<Vec2>& robot,
                     const std::vector<Vec2>& other_agents,
                     const std::vector<Obstacle>& obstacles,
                     const PotentialFieldParams& params) {
  Vec2 field = Vec2::Zero();
  if (robot) add_field_source(agent, *robot, 0.0, params, field);
  for (const Vec2& other : other_agents) add_field_source(agent, other, 0.0, params, field);
  for (const Obstacle& obs : obstacles)
    add_field_source(agent, obs.center, obs.radius, params, field);
  clip_field(field, params.max_speed);
  return field;
}

double disturbance_variance(const Vec2& commanded_velocity, const DisturbanceParams& params) {
  const double speed = commanded_velocity.norm();
  if (speed <= 0.0) return params.alpha;  // tanh saturates as |u| -> 0
  return params.alpha * std::tanh(params.beta / speed);
}

Eigen::Matrix2d disturbance_covariance(const Vec2& commanded_velocity,
                                       const DisturbanceParams& params) {
  return disturbance_variance(commanded_velocity, params) * Eigen::Matrix2d::Identity();
}

int active_mode(const HybridAgentModel& model, const AgentState& agent,
                const RobotState& robot) {
  if (model.modes.empty())
    throw std::runtime_error("active_mode: model has no modes");
  int found = -1;
  for (int i = 0; i < static_cast<int>(model.modes.size()); ++i) {
    bool active = true;
    for (const ActivationPredicate& pred : model.modes[i].activations) {
      const double g = pred.guard(agent, robot);
      if (pred.strict ? (g >= 0.0) : (g > 0.0)) {
        active = false;
        break;
      }
    }
    if (!active) continue;
    if (found >= 0)
      throw std::runtime_error("active_mode: modes " + std::to_string(model.modes[found].id) +
                               " and " + std::to_string(model.modes[i].id) +
                               " are both active; guards must partition the state space");
    found = i;
  }
  if (found < 0)
    throw std::runtime_error("active_mode: no mode active; guards must partition the state space");
  return found;
}

GaussianMoments agent_conditional_moments(const HybridAgentModel& model, int mode_index,
                                          const AgentState& agent, const RobotState& robot,
                                          double dt) {
  if (mode_index < 0 || mode_index >= static_cast<int>(model.modes.size()))
    throw std::invalid_argument("agent_conditional_moments: mode index " +
                                std::to_string(mode_index) + " out of range");
  const ModeSpec& mode = model.modes[mode_index];
  if (mode.dynamics) return mode.dynamics(agent, robot, dt);

  const std::optional<Vec2> robot_source =
      mode.robot_repels ? std::optional<Vec2>(robot.position) : std::nullopt;
  const Vec2 velocity = model.nominal_velocity +
                        potential_field(agent, robot_source, {}, model.obstacles, model.field);
  const double variance = disturbance_variance(velocity, model.disturbance);
  const double scale = model.noise_scaling == NoiseScaling::kStep ? dt * dt : dt;

  GaussianMoments out;
  out.mean = agent + velocity * dt;
  out.covariance = variance * scale * Eigen::Matrix2d::Identity();
  return out;
}

HybridAgentModel make_attention_model(double sensing_radius, const Vec2& nominal_velocity,
                                      const DisturbanceParams& disturbance,
                                      const PotentialFieldParams& field,
                                      NoiseScaling noise_scaling, std::vector<Obstacle> obstacles,
                                      double radius) {
  HybridAgentModel model;
  model.sensing_radius = sensing_radius;
  model.nominal_velocity = nominal_velocity;
  model.disturbance = disturbance;
  model.field = field;
  model.noise_scaling = noise_scaling;
  model.obstacles = std::move(obstacles);
  model.radius = radius;

  ModeSpec inattentive;
  inattentive.id = 1;
  inattentive.robot_repels = false;
  inattentive.activations.push_back(
      {[sensing_radius](const AgentState& a, const RobotState& r) {
         return sensing_radius - (a - r.position).norm();
       },
       /*strict=*/true});

  ModeSpec attentive;
  attentive.id = 2;
  attentive.robot_repels = true;
  attentive.activations.push_back(
      {[sensing_radius](const AgentState& a, const RobotState& r) {
         return (a - r.position).norm() - sensing_radius;
       },
       /*strict=*/false});

  model.modes = {std::move(inattentive), std::move(attentive)};
  return model;
}

double distance_to_agent(const Vec2& robot_position, double robot_radius,
                         const Vec2& agent_position, double agent_radius) {
  return (robot_position - agent_position).norm() - robot_radius - agent_radius;
}

double distance_to_obstacle(const Vec2& robot_position, double robot_radius,
                            const Obstacle& obstacle) {
  return (robot_position - obstacle.center).norm() - obstacle.radius - robot_radius;
}

}  // namespace ecut_mppi
