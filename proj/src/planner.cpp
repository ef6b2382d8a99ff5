#include "ecut_mppi/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

#include "ecut_mppi/mc_prediction.hpp"
#include "ecut_mppi/parallel.hpp"

namespace ecut_mppi {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct UtWeights2 {
  double w0 = 0.0;  // center weight
  double wi = 0.0;  // each of the four spread weights
  double spread = 0.0;  // n + kappa
};

UtWeights2 ut_weights2(const UtParams& ut) {
  const double kappa = ut.kappa_for(2);
  const double denom = 2.0 + kappa;
  return {kappa / denom, 0.5 / denom, denom};
}

void require_attention_form(const HybridAgentModel& model) {
  const bool ok = model.modes.size() == 2 && !model.modes[0].robot_repels &&
                  model.modes[1].robot_repels && !model.modes[0].dynamics &&
                  !model.modes[1].dynamics && model.sensing_radius > 0.0;
  if (!ok)
    throw std::invalid_argument(
        "rollouts require the two-mode attention agent form "
        "(inattentive mode first, attentive mode second, built-in dynamics)");
}

// Per-agent constants hoisted out of the rollout loops. Obstacle pointers
// alias the problem's model storage, which outlives any single step.
struct FastAgent {
  Eigen::Matrix<double, 2, 5> init_pts;
  Eigen::Matrix2d belief_root;
  Vec2 belief_mean{0.0, 0.0};
  Vec2 u_nom{0.0, 0.0};
  PotentialFieldParams field;
  double ds = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double combined_radius = 0.0;
  double noise_scale = 0.0;
  const Obstacle* obs = nullptr;
  int n_obs = 0;
};

struct Compiled {
  std::vector<FastAgent> agents;
  UtWeights2 w;
  Eigen::Matrix2d noise_inv;
};

Compiled compile(const PlannerConfig& cfg, const PlanningProblem& problem) {
  Compiled c;
  c.w = ut_weights2(cfg.ut);
  c.noise_inv = cfg.noise_covariance.inverse();
  c.agents.reserve(problem.models.size());
  for (size_t a = 0; a < problem.models.size(); ++a) {
    const HybridAgentModel& m = problem.models[a];
    require_attention_form(m);
    const GaussianMoments& belief = problem.beliefs[a];
    FastAgent fa;
    fa.init_pts = generate_ut_points(belief, cfg.ut).points;
    fa.belief_root = cholesky_2x2_psd(belief.covariance);
    fa.belief_mean = Vec2(belief.mean);
    fa.u_nom = m.nominal_velocity;
    fa.field = m.field;
    fa.ds = m.sensing_radius;
    fa.alpha = m.disturbance.alpha;
    fa.beta = m.disturbance.beta;
    fa.combined_radius = cfg.robot_radius + m.radius;
    fa.noise_scale = m.noise_scaling == NoiseScaling::kStep ? cfg.dt * cfg.dt : cfg.dt;
    fa.obs = m.obstacles.data();
    fa.n_obs = static_cast<int>(m.obstacles.size());
    c.agents.push_back(std::move(fa));
  }
  return c;
}

// Fused per-agent update: clearance statistics of the current set, mode
// decision per the switching policy, one expansion-compression step via the
// mixture moments (children never materialized), canonical regeneration.
// Column 0 of a canonical set is its mean, which the mean-based policy uses.
DistanceStats fast_agent_step(const FastAgent& a, const UtWeights2& w, SwitchingPolicy pol,
                              const Vec2& robot, double dt,
                              Eigen::Matrix<double, 2, 5>& pts) {
  double d[5];
  for (int i = 0; i < 5; ++i) d[i] = (pts.col(i) - robot).norm();

  DistanceStats stats;
  stats.mean = w.w0 * d[0] + w.wi * (d[1] + d[2] + d[3] + d[4]) - a.combined_radius;
  double var = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double dev = d[i] - a.combined_radius - stats.mean;
    var += (i == 0 ? w.w0 : w.wi) * dev * dev;
  }
  stats.stddev = std::sqrt(std::max(var, 0.0));

  bool attentive[5];
  if (pol == SwitchingPolicy::kPerSigmaPoint) {
    for (int i = 0; i < 5; ++i) attentive[i] = d[i] <= a.ds;
  } else if (pol == SwitchingPolicy::kMeanBased) {
    const bool from_mean = d[0] <= a.ds;
    for (int i = 0; i < 5; ++i) attentive[i] = from_mean;
  } else {
    for (int i = 0; i < 5; ++i) attentive[i] = false;
  }

  Vec2 mu[5];
  double child_var[5];
  for (int i = 0; i < 5; ++i) {
    Vec2 field = Vec2::Zero();
    if (attentive[i]) add_field_source(pts.col(i), robot, 0.0, a.field, field);
    for (int o = 0; o < a.n_obs; ++o)
      add_field_source(pts.col(i), a.obs[o].center, a.obs[o].radius, a.field, field);
    clip_field(field, a.field.max_speed);
    const Vec2 velocity = a.u_nom + field;
    const double speed = velocity.norm();
    const double variance =
        speed <= 0.0 ? a.alpha : a.alpha * std::tanh(a.beta / speed);
    mu[i] = pts.col(i) + velocity * dt;
    child_var[i] = variance * a.noise_scale;
  }

  const Vec2 mbar = w.w0 * mu[0] + w.wi * (mu[1] + mu[2] + mu[3] + mu[4]);
  double p00 = 0.0, p01 = 0.0, p11 = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double wg = i == 0 ? w.w0 : w.wi;
    const Vec2 dev = mu[i] - mbar;
    p00 += wg * (dev.x() * dev.x() + child_var[i]);
    p01 += wg * dev.x() * dev.y();
    p11 += wg * (dev.y() * dev.y() + child_var[i]);
  }

  const double a00 = w.spread * p00;
  const double a01 = w.spread * p01;
  const double a11 = w.spread * p11;
  const double l00 = std::sqrt(std::max(a00, 0.0));
  const double l10 = l00 > 0.0 ? a01 / l00 : 0.0;
  const double l11 = std::sqrt(std::max(a11 - l10 * l10, 0.0));
  pts.col(0) = mbar;
  pts.col(1) = mbar + Vec2(l00, l10);
  pts.col(2) = mbar + Vec2(0.0, l11);
  pts.col(3) = mbar - Vec2(l00, l10);
  pts.col(4) = mbar - Vec2(0.0, l11);
  return stats;
}

double min_obstacle_clearance(const Vec2& position, double robot_radius,
                              const std::vector<Obstacle>& obstacles) {
  double h = kInf;
  for (const Obstacle& o : obstacles)
    h = std::min(h, distance_to_obstacle(position, robot_radius, o));
  return h;
}

RobotState advance_robot(const PlannerConfig& cfg, const RobotState& x, const Vec2& u) {
  const ControlInput cmd{u.x(), u.y()};
  return cfg.robot_model == RobotModel::kSingleIntegrator
             ? single_integrator_step(x, cmd, cfg.dt)
             : unicycle_step(x, cmd, cfg.dt);
}

struct Workspace {
  std::vector<Eigen::Matrix<double, 2, 5>> pts;
  Eigen::Matrix2Xd replicas;
};

// Cost of one control sample. `eps` holds all samples; sample m occupies
// columns [m*H, (m+1)*H). Bounds are expected to be already folded into eps.
double rollout_cost(const PlannerConfig& cfg, const Compiled& comp,
                    const PlanningProblem& problem, const Eigen::Matrix2Xd& nominal,
                    const Eigen::MatrixXd& eps, int m, uint64_t mc_seed, Workspace& ws,
                    RobotState* final_state, std::vector<RobotState>* path) {
  const int h = cfg.horizon;
  const int n_agents = static_cast<int>(comp.agents.size());
  const bool mc = cfg.prediction == PredictionMode::kMonteCarlo;
  const Eigen::Index k = cfg.mc_replicas;

  Rng rng(mc_seed);
  if (mc) {
    ws.replicas.resize(2, k * n_agents);
    for (int a = 0; a < n_agents; ++a) {
      const FastAgent& fa = comp.agents[a];
      for (Eigen::Index i = 0; i < k; ++i)
        ws.replicas.col(a * k + i) =
            fa.belief_mean + fa.belief_root * Vec2(rng.normal(), rng.normal());
    }
  } else {
    ws.pts.resize(static_cast<size_t>(n_agents));
    for (int a = 0; a < n_agents; ++a) ws.pts[static_cast<size_t>(a)] = comp.agents[a].init_pts;
  }

  RobotState x = problem.robot;
  if (path) {
    path->clear();
    path->push_back(x);
  }

  double total = 0.0;
  for (int t = 0; t < h; ++t) {
    const Vec2 u = Vec2(nominal.col(t)) + Vec2(eps.col(static_cast<Eigen::Index>(m) * h + t));

    double q = stage_cost_convergence(x.position, problem.goal, cfg.goal_weight);
    double min_agent = kInf;
    for (int a = 0; a < n_agents; ++a) {
      const DistanceStats s =
          mc ? mc_agent_step(ws.replicas.middleCols(a * k, k), problem.models[a], x,
                             cfg.robot_radius, cfg.switching, cfg.dt, rng)
             : fast_agent_step(comp.agents[a], comp.w, cfg.switching, x.position, cfg.dt,
                               ws.pts[static_cast<size_t>(a)]);
      min_agent = std::min(min_agent, s.mean - cfg.risk_sigma_gain * s.stddev);
    }
    q += risk_cost(min_agent,
                   min_obstacle_clearance(x.position, cfg.robot_radius, problem.obstacles),
                   cfg);

    total += q + cfg.control_cost_weight * nominal.col(t).dot(comp.noise_inv * u);
    x = advance_robot(cfg, x, u);
    if (path) path->push_back(x);
  }
  total += stage_cost_convergence(x.position, problem.goal, cfg.goal_weight);
  if (final_state) *final_state = x;
  return total;
}

void clamp_perturbations(const PlannerConfig& cfg, const Eigen::Matrix2Xd& nominal,
                         Eigen::MatrixXd& eps, int samples) {
  if (!cfg.control_bounds) return;
  const ControlBounds& b = *cfg.control_bounds;
  const int h = cfg.horizon;
  for (int m = 0; m < samples; ++m) {
    auto block = eps.middleCols(static_cast<Eigen::Index>(m) * h, h);
    for (int t = 0; t < h; ++t) {
      const Vec2 u =
          (Vec2(nominal.col(t)) + Vec2(block.col(t))).cwiseMax(b.lower).cwiseMin(b.upper);
      block.col(t) = u - nominal.col(t);
    }
  }
}

int resolve_threads(int configured, int tasks) {
  int n = configured > 0 ? configured
                         : static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(n, tasks));
}

}  // namespace

void validate(const PlannerConfig& cfg) {
  if (cfg.horizon < 1) throw std::invalid_argument("planner: horizon must be >= 1");
  if (cfg.samples < 1) throw std::invalid_argument("planner: samples must be >= 1");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("planner: dt must be positive");
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("planner: lambda must be positive");
  if (cfg.control_cost_weight < 0.0 || cfg.control_cost_weight > cfg.lambda)
    throw std::invalid_argument("planner: control_cost_weight must lie in [0, lambda]");
  const Eigen::Matrix2d& s = cfg.noise_covariance;
  if (std::abs(s(0, 1) - s(1, 0)) > 1e-12 || s(0, 0) <= 0.0 || s.determinant() <= 0.0)
    throw std::invalid_argument("planner: noise covariance must be symmetric positive definite");
  if (cfg.goal_weight < 0.0 || cfg.agent_risk_weight < 0.0 || cfg.obstacle_risk_weight < 0.0)
    throw std::invalid_argument("planner: cost weights must be non-negative");
  if (cfg.risk_sigma_gain < 0.0)
    throw std::invalid_argument("planner: risk_sigma_gain must be non-negative");
  if (cfg.safety_margin < 0.0)
    throw std::invalid_argument("planner: safety_margin must be non-negative");
  if (!(cfg.distance_floor > 0.0))
    throw std::invalid_argument("planner: distance_floor must be positive");
  if (cfg.prediction == PredictionMode::kMonteCarlo && cfg.mc_replicas < 2)
    throw std::invalid_argument("planner: Monte-Carlo prediction needs at least 2 replicas");
  if (2.0 + cfg.ut.kappa_for(2) <= 0.0)
    throw std::invalid_argument("planner: 2 + kappa must be positive");
  if (cfg.robot_radius < 0.0)
    throw std::invalid_argument("planner: robot_radius must be non-negative");
  if (cfg.threads < 0) throw std::invalid_argument("planner: threads must be non-negative");
  if (cfg.control_bounds) {
    const ControlBounds& b = *cfg.control_bounds;
    if (b.lower.x() > b.upper.x() || b.lower.y() > b.upper.y())
      throw std::invalid_argument("planner: control bounds are inverted");
  }
}

void validate(const PlanningProblem& problem) {
  if (problem.models.size() != problem.beliefs.size())
    throw std::invalid_argument("planner: one belief per agent model required");
  for (const GaussianMoments& b : problem.beliefs) {
    if (b.mean.size() != 2 || b.covariance.rows() != 2 || b.covariance.cols() != 2)
      throw std::invalid_argument("planner: agent beliefs must be planar Gaussians");
    if (!b.mean.allFinite() || !b.covariance.allFinite())
      throw std::invalid_argument("planner: agent beliefs must be finite");
  }
  for (const Obstacle& o : problem.obstacles)
    if (o.radius < 0.0) throw std::invalid_argument("planner: negative obstacle radius");
  if (!problem.goal.allFinite() || !problem.robot.position.allFinite())
    throw std::invalid_argument("planner: robot state and goal must be finite");
}

Eigen::MatrixXd sample_perturbations(const Eigen::Matrix2d& noise_cov, int horizon,
                                     int samples, Rng& rng) {
  if (horizon < 1 || samples < 1)
    throw std::invalid_argument("sample_perturbations: horizon and samples must be >= 1");
  const Eigen::Matrix2d root = cholesky_2x2_psd(noise_cov);
  Eigen::MatrixXd eps(2, static_cast<Eigen::Index>(samples) * horizon);
  for (Eigen::Index c = 0; c < eps.cols(); ++c) {
    const Vec2 z(rng.normal(), rng.normal());
    eps.col(c) = root * z;
  }
  return eps;
}

Eigen::VectorXd mppi_weights(const Eigen::VectorXd& costs, double lambda) {
  if (costs.size() == 0) throw std::invalid_argument("mppi_weights: empty cost vector");
  if (!(lambda > 0.0)) throw std::invalid_argument("mppi_weights: lambda must be positive");
  if (!costs.allFinite()) throw std::invalid_argument("mppi_weights: non-finite costs");
  const double baseline = costs.minCoeff();
  return ((costs.array() - baseline) * (-1.0 / lambda)).exp();
}

Eigen::Matrix2Xd update_control(const Eigen::Matrix2Xd& nominal,
                                const Eigen::MatrixXd& perturbations,
                                const Eigen::VectorXd& weights) {
  const Eigen::Index h = nominal.cols();
  const Eigen::Index m = weights.size();
  if (perturbations.rows() != 2 || perturbations.cols() != m * h)
    throw std::invalid_argument("update_control: perturbation layout mismatch");
  Eigen::Matrix2Xd acc = Eigen::Matrix2Xd::Zero(2, h);
  double weight_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    acc += weights(i) * perturbations.middleCols(i * h, h);
    weight_sum += weights(i);
  }
  if (!(weight_sum > 0.0))
    throw std::runtime_error("update_control: weights sum to zero");
  return nominal + acc / weight_sum;
}

double stage_cost_convergence(const Vec2& position, const Vec2& goal, double goal_weight) {
  return goal_weight * (position - goal).squaredNorm();
}

double risk_cost(double min_agent_clearance, double min_obstacle_clearance,
                 const PlannerConfig& cfg) {
  double q = 0.0;
  if (std::isfinite(min_agent_clearance))
    q += cfg.agent_risk_weight /
         std::max(min_agent_clearance - cfg.safety_margin, cfg.distance_floor);
  if (std::isfinite(min_obstacle_clearance))
    q += cfg.obstacle_risk_weight /
         std::max(min_obstacle_clearance - cfg.safety_margin, cfg.distance_floor);
  return q;
}

double stage_cost_risk(const PlannerConfig& cfg, const Vec2& robot_position,
                       const std::vector<SigmaPointSet>& agent_sets,
                       const std::vector<double>& agent_radii,
                       const std::vector<Obstacle>& obstacles) {
  if (agent_sets.size() != agent_radii.size())
    throw std::invalid_argument("stage_cost_risk: one body radius per agent set required");
  double min_agent = kInf;
  for (size_t a = 0; a < agent_sets.size(); ++a) {
    const SigmaPointSet& set = agent_sets[a];
    validate(set);
    if (set.dimension() != 2)
      throw std::invalid_argument("stage_cost_risk: agent sets must be planar");
    const double combined = cfg.robot_radius + agent_radii[a];
    double mean = 0.0;
    for (int i = 0; i < set.count(); ++i)
      mean += set.weights(i) * ((Vec2(set.points.col(i)) - robot_position).norm() - combined);
    double var = 0.0;
    for (int i = 0; i < set.count(); ++i) {
      const double dev =
          (Vec2(set.points.col(i)) - robot_position).norm() - combined - mean;
      var += set.weights(i) * dev * dev;
    }
    min_agent =
        std::min(min_agent, mean - cfg.risk_sigma_gain * std::sqrt(std::max(var, 0.0)));
  }
  return risk_cost(min_agent,
                   min_obstacle_clearance(robot_position, cfg.robot_radius, obstacles), cfg);
}

RolloutResult rollout(const PlannerConfig& cfg, const PlanningProblem& problem,
                      const Eigen::Matrix2Xd& nominal, const Eigen::Matrix2Xd& perturbation,
                      bool record_path) {
  validate(cfg);
  validate(problem);
  if (nominal.cols() != cfg.horizon || perturbation.cols() != cfg.horizon)
    throw std::invalid_argument("rollout: nominal and perturbation must span the horizon");
  const Compiled comp = compile(cfg, problem);
  Eigen::MatrixXd eps = perturbation;
  clamp_perturbations(cfg, nominal, eps, 1);

  Workspace ws;
  RolloutResult result;
  result.cost = rollout_cost(cfg, comp, problem, nominal, eps, 0, cfg.seed, ws,
                             &result.final_state, record_path ? &result.path : nullptr);
  return result;
}

std::vector<std::vector<SigmaPointSet>> predict_agent_sets(
    const PlannerConfig& cfg, const PlanningProblem& problem,
    const std::vector<RobotState>& robot_path, int steps) {
  validate(cfg);
  validate(problem);
  if (steps < 0 || static_cast<size_t>(steps) > robot_path.size())
    throw std::invalid_argument("predict_agent_sets: robot path shorter than steps");
  const Compiled comp = compile(cfg, problem);
  const int n_agents = static_cast<int>(comp.agents.size());

  Eigen::VectorXd weights(5);
  weights << comp.w.w0, comp.w.wi, comp.w.wi, comp.w.wi, comp.w.wi;

  std::vector<Eigen::Matrix<double, 2, 5>> pts(static_cast<size_t>(n_agents));
  for (int a = 0; a < n_agents; ++a) pts[static_cast<size_t>(a)] = comp.agents[a].init_pts;

  std::vector<std::vector<SigmaPointSet>> out(static_cast<size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    out[static_cast<size_t>(t)].resize(static_cast<size_t>(n_agents));
    for (int a = 0; a < n_agents; ++a) {
      fast_agent_step(comp.agents[a], comp.w, cfg.switching,
                      robot_path[static_cast<size_t>(t)].position, cfg.dt,
                      pts[static_cast<size_t>(a)]);
      SigmaPointSet set;
      set.points = pts[static_cast<size_t>(a)];
      set.weights = weights;
      out[static_cast<size_t>(t)][static_cast<size_t>(a)] = std::move(set);
    }
  }
  return out;
}

MppiPlanner::MppiPlanner(const PlannerConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  validate(cfg_);
  nominal_ = Eigen::Matrix2Xd::Zero(2, cfg_.horizon);
}

void MppiPlanner::reset() {
  nominal_.setZero();
  rng_ = Rng(cfg_.seed);
}

MppiPlanner::StepResult MppiPlanner::step(const PlanningProblem& problem) {
  validate(problem);
  const Compiled comp = compile(cfg_, problem);
  const int h = cfg_.horizon;
  const int m = cfg_.samples;

  Eigen::MatrixXd eps = sample_perturbations(cfg_.noise_covariance, h, m, rng_);
  clamp_perturbations(cfg_, nominal_, eps, m);

  // Per-sample seeds are drawn up front so replica noise is identical no
  // matter how rollouts are distributed over workers.
  std::vector<uint64_t> seeds(static_cast<size_t>(m), 0);
  if (cfg_.prediction == PredictionMode::kMonteCarlo)
    for (auto& s : seeds) s = rng_.next_u64();

  Eigen::VectorXd costs(m);
  const int workers = resolve_threads(cfg_.threads, m);
  std::vector<Workspace> spaces(static_cast<size_t>(workers));
  parallel_for(m, workers, [&](int begin, int end, int worker) {
    Workspace& ws = spaces[static_cast<size_t>(worker)];
    for (int i = begin; i < end; ++i)
      costs(i) = rollout_cost(cfg_, comp, problem, nominal_, eps, i,
                              seeds[static_cast<size_t>(i)], ws, nullptr, nullptr);
  });

  const Eigen::VectorXd weights = mppi_weights(costs, cfg_.lambda);
  const Eigen::Matrix2Xd optimized = update_control(nominal_, eps, weights);

  StepResult result;
  Eigen::Index best = 0;
  result.min_cost = costs.minCoeff(&best);
  result.best_sample = static_cast<int>(best);
  result.mean_cost = costs.mean();
  result.weight_sum = weights.sum();
  result.expected_cost = weights.dot(costs) / result.weight_sum;
  result.command = ControlInput{optimized(0, 0), optimized(1, 0)};
  result.optimized = optimized;

  nominal_.leftCols(h - 1) = optimized.rightCols(h - 1);
  nominal_.col(h - 1) = optimized.col(h - 1);
  return result;
}

}  // namespace ecut_mppi
