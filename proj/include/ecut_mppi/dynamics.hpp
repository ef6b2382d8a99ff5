#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "ecut_mppi/unscented.hpp"

namespace ecut_mppi {

using Vec2 = Eigen::Vector2d;

/// Planar agent state: agents are modelled as moving points.
using AgentState = Vec2;

struct RobotState {
  Vec2 position{0.0, 0.0};
  double heading = 0.0;  // radians, only meaningful for the unicycle model
};

/// Velocity command. Single integrator: (vx, vy). Unicycle: (v, omega).
struct ControlInput {
  double u1 = 0.0;
  double u2 = 0.0;
};

struct Obstacle {
  Vec2 center{0.0, 0.0};
  double radius = 0.0;
};

/// Repulsive potential field shaping. A source contributes
/// gain * (1/d - 1/cutoff) / d^2 along the direction away from it while
/// d < cutoff; the summed field is clipped to max_speed.
struct PotentialFieldParams {
  double gain = 0.5;
  double cutoff = 2.0;
  double max_speed = 2.0;
};

/// Speed-dependent velocity disturbance: variance alpha * tanh(beta / |u|),
/// saturating to alpha as the commanded speed drops to zero.
struct DisturbanceParams {
  double alpha = 80.0;
  double beta = 1.0;
};

/// How the per-step velocity disturbance enters the position covariance:
/// kStep uses variance * dt^2 (velocity noise held over the step), kSqrtStep
/// uses variance * dt (Brownian-style accumulation).
enum class NoiseScaling { kStep, kSqrtStep };

/// Mode guard: active when guard(agent, robot) <= 0, or strictly < 0 when
/// `strict` is set. Mixing strict and non-strict guards lets neighbouring
/// modes share a boundary without overlap.
struct ActivationPredicate {
  std::function<double(const AgentState&, const RobotState&)> guard;
  bool strict = false;
};

/// Conditional next-state distribution of an agent over one step of dt.
using ConditionalDynamics =
    std::function<GaussianMoments(const AgentState&, const RobotState&, double dt)>;

/// One discrete mode of a hybrid agent. When `dynamics` is empty, the
/// built-in field-following dynamics of the owning model apply, with the
/// robot included as a repulsion source iff `robot_repels` is set.
struct ModeSpec {
  int id = 0;
  std::vector<ActivationPredicate> activations;
  ConditionalDynamics dynamics;
  bool robot_repels = false;
};

/// Agent with mode-switching stochastic dynamics. The mode guards must
/// partition the state space: exactly one mode is active for every
/// (agent, robot) pair.
struct HybridAgentModel {
  std::vector<ModeSpec> modes;
  double sensing_radius = 2.0;
  Vec2 nominal_velocity{3.0, 0.0};
  DisturbanceParams disturbance;
  PotentialFieldParams field;
  NoiseScaling noise_scaling = NoiseScaling::kStep;
  std::vector<Obstacle> obstacles;  // static repulsion sources seen by the agent
  double radius = 0.3;              // body radius for clearance computations
};

/// Two-mode pedestrian-style model: agents drift with `nominal_velocity`
/// while avoiding obstacles, and additionally steer away from the robot once
/// it comes within `sensing_radius` (attentive mode, boundary inclusive).
HybridAgentModel make_attention_model(double sensing_radius, const Vec2& nominal_velocity,
                                      const DisturbanceParams& disturbance,
                                      const PotentialFieldParams& field,
                                      NoiseScaling noise_scaling,
                                      std::vector<Obstacle> obstacles,
                                      double radius = 0.3);

RobotState single_integrator_step(const RobotState& state, const ControlInput& u, double dt);

/// Forward-Euler unicycle: the position advances along the current heading,
/// then the heading integrates omega and is normalized to (-pi, pi].
RobotState unicycle_step(const RobotState& state, const ControlInput& u, double dt);

double wrap_angle(double angle);

/// Adds one repulsive source's contribution to `field` (no speed clipping).
/// Shared by the batch potential_field and the planners' inlined loops so
/// every caller agrees bit-for-bit on the field shape. A surface_offset
/// shifts the effective distance to the source's boundary; distances are
/// floored at 1e-6 and a source closer than 1e-12 to the agent center has no
/// defined direction and is skipped.
inline void add_field_source(const Vec2& agent, const Vec2& source_center,
                             double surface_offset, const PotentialFieldParams& p,
                             Vec2& field) {
  const Vec2 diff = agent - source_center;
  const double center_dist = diff.norm();
  if (center_dist < 1e-12) return;
  const double d = std::max(center_dist - surface_offset, 1e-6);
  if (d >= p.cutoff) return;
  const double magnitude = p.gain * (1.0 / d - 1.0 / p.cutoff) / (d * d);
  field += (magnitude / center_dist) * diff;
}

/// Clips a summed field to the configured speed limit.
inline void clip_field(Vec2& field, double max_speed) {
  const double speed = field.norm();
  if (speed > max_speed) field *= max_speed / speed;
}

/// Summed repulsive field at `agent` from an optional robot source, other
/// agents (point sources) and circular obstacles (surface distance). The
/// result is clipped to params.max_speed.
Vec2 potential_field(const Vec2& agent, const std::optional<Vec2>& robot,
                     const std::vector<Vec2>& other_agents,
                     const std::vector<Obstacle>& obstacles,
                     const PotentialFieldParams& params);

double disturbance_variance(const Vec2& commanded_velocity, const DisturbanceParams& params);

Eigen::Matrix2d disturbance_covariance(const Vec2& commanded_velocity,
                                       const DisturbanceParams& params);

/// Index into model.modes of the unique active mode. Throws
/// std::runtime_error when zero or several modes activate, since that means
/// the guards do not partition the state space.
int active_mode(const HybridAgentModel& model, const AgentState& agent,
                const RobotState& robot);

/// Conditional next-state Gaussian of `agent` in the given mode: mean is the
/// Euler step along the deterministic velocity, covariance is the scaled
/// isotropic disturbance (or whatever a custom mode dynamics returns).
GaussianMoments agent_conditional_moments(const HybridAgentModel& model, int mode_index,
                                          const AgentState& agent, const RobotState& robot,
                                          double dt);

/// Center distance minus both body radii (negative means overlap).
double distance_to_agent(const Vec2& robot_position, double robot_radius,
                         const Vec2& agent_position, double agent_radius);

/// Surface clearance between a robot disc and a circular obstacle.
double distance_to_obstacle(const Vec2& robot_position, double robot_radius,
                            const Obstacle& obstacle);

}  // namespace ecut_mppi
