#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ecut_mppi/mc_prediction.hpp"
#include "ecut_mppi/planner.hpp"
#include "ecut_mppi/rng.hpp"

using namespace ecut_mppi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

HybridAgentModel test_model(std::vector<Obstacle> obstacles = {}) {
  return make_attention_model(2.0, Vec2(3.0, 0.0), DisturbanceParams{80.0, 1.0},
                              PotentialFieldParams{0.5, 2.0, 2.0}, NoiseScaling::kStep,
                              std::move(obstacles));
}

GaussianMoments planar_belief(double x, double y, double var_x, double var_y) {
  GaussianMoments b;
  b.mean = Eigen::Vector2d(x, y);
  b.covariance = Eigen::Vector2d(var_x, var_y).asDiagonal();
  return b;
}

// Reference prediction built from the generic building blocks: one stochastic
// map per step composed of mode lookup plus conditional moments, pushed
// through the generic expansion-compression step.
std::vector<SigmaPointSet> generic_predict(const PlannerConfig& cfg,
                                           const HybridAgentModel& model,
                                           const GaussianMoments& belief,
                                           const std::vector<RobotState>& path, int steps) {
  SigmaPointSet set = generate_ut_points(belief, cfg.ut);
  std::vector<SigmaPointSet> out;
  for (int t = 0; t < steps; ++t) {
    const RobotState robot = path[static_cast<size_t>(t)];
    StochasticMap map;
    if (cfg.switching == SwitchingPolicy::kPerSigmaPoint) {
      map = [&model, robot, &cfg](const Eigen::VectorXd& x, GaussianMoments& next) {
        const Vec2 p(x);
        next = agent_conditional_moments(model, active_mode(model, p, robot), p, robot, cfg.dt);
      };
    } else if (cfg.switching == SwitchingPolicy::kMeanBased) {
      const Vec2 mean(empirical_moments(set).mean);
      const int mode = active_mode(model, mean, robot);
      map = [&model, robot, &cfg, mode](const Eigen::VectorXd& x, GaussianMoments& next) {
        next = agent_conditional_moments(model, mode, Vec2(x), robot, cfg.dt);
      };
    } else {
      map = [&model, robot, &cfg](const Eigen::VectorXd& x, GaussianMoments& next) {
        next = agent_conditional_moments(model, 0, Vec2(x), robot, cfg.dt);
      };
    }
    set = ecut_step(map, set, cfg.ut);
    out.push_back(set);
  }
  return out;
}

}  // namespace

TEST_CASE("perturbation samples carry the requested covariance") {
  Eigen::Matrix2d cov;
  cov << 4.0, 1.0, 1.0, 2.0;
  Rng rng(555);
  const int n = 100000;
  const Eigen::MatrixXd eps = sample_perturbations(cov, 1, n, rng);
  REQUIRE(eps.cols() == n);

  const Eigen::Vector2d mean = eps.rowwise().mean();
  CHECK(std::abs(mean(0)) < 0.03);
  CHECK(std::abs(mean(1)) < 0.03);

  const Eigen::MatrixXd centered = eps.colwise() - mean;
  const Eigen::Matrix2d emp = centered * centered.transpose() / (n - 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(emp(i, j) - cov(i, j)) <= 0.05 * std::abs(cov(i, j)));

  Rng rng_a(99), rng_b(99);
  const Eigen::MatrixXd a = sample_perturbations(cov, 7, 13, rng_a);
  const Eigen::MatrixXd b = sample_perturbations(cov, 7, 13, rng_b);
  CHECK(a == b);
}

TEST_CASE("importance weights are exponential in the cost gap to the best sample") {
  Eigen::VectorXd costs(3);
  costs << 5.0, 7.0, 17.0;
  const Eigen::VectorXd w = mppi_weights(costs, 2.0);
  CHECK(w(0) == 1.0);
  CHECK(w(1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(w(2) == doctest::Approx(std::exp(-6.0)).epsilon(1e-15));

  CHECK_THROWS_AS(mppi_weights(Eigen::VectorXd(), 1.0), std::invalid_argument);
  Eigen::VectorXd bad(1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(mppi_weights(bad, 1.0), std::invalid_argument);
}

TEST_CASE("control update is the weight-averaged sampled control") {
  Eigen::Matrix2Xd nominal = Eigen::Matrix2Xd::Zero(2, 1);
  Eigen::MatrixXd eps(2, 2);
  eps.col(0) = Eigen::Vector2d(1.0, 0.0);
  eps.col(1) = Eigen::Vector2d(0.0, 1.0);
  Eigen::VectorXd costs(2);
  costs << 0.0, 1.0;
  const Eigen::Matrix2Xd updated = update_control(nominal, eps, mppi_weights(costs, 1.0));
  CHECK(updated(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(updated(1, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
}

TEST_CASE("control update algebra: shift invariance, convex hull, unit best weight") {
  Rng rng(8123);
  const int m = 32, h = 8;
  Eigen::Matrix2Xd nominal(2, h);
  for (int t = 0; t < h; ++t)
    nominal.col(t) = Eigen::Vector2d(rng.normal(), rng.normal());
  Eigen::MatrixXd eps(2, m * h);
  for (Eigen::Index c = 0; c < eps.cols(); ++c)
    eps.col(c) = Eigen::Vector2d(rng.normal(), rng.normal());
  Eigen::VectorXd costs(m);
  for (int i = 0; i < m; ++i) costs(i) = 50.0 * rng.uniform01();

  const Eigen::VectorXd w = mppi_weights(costs, 0.7);
  Eigen::Index best = 0;
  costs.minCoeff(&best);
  CHECK(w(best) == 1.0);

  const Eigen::Matrix2Xd updated = update_control(nominal, eps, w);
  const Eigen::Matrix2Xd shifted =
      update_control(nominal, eps, mppi_weights(costs.array() + 1234.5, 0.7));
  CHECK((updated - shifted).cwiseAbs().maxCoeff() <= 1e-12);

  for (int t = 0; t < h; ++t) {
    for (int r = 0; r < 2; ++r) {
      double lo = kInf, hi = -kInf;
      for (int i = 0; i < m; ++i) {
        const double u = nominal(r, t) + eps(r, static_cast<Eigen::Index>(i) * h + t);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
      }
      CHECK(updated(r, t) >= lo - 1e-12);
      CHECK(updated(r, t) <= hi + 1e-12);
    }
  }
}

TEST_CASE("stage costs match their closed forms") {
  CHECK(stage_cost_convergence(Vec2(1.0, 2.0), Vec2(4.0, 6.0), 2.0) ==
        doctest::Approx(50.0).epsilon(1e-12));

  PlannerConfig cfg;
  cfg.agent_risk_weight = 10.0;
  cfg.obstacle_risk_weight = 5.0;
  cfg.distance_floor = 0.01;
  CHECK(risk_cost(0.5, 2.0, cfg) == doctest::Approx(10.0 / 0.5 + 5.0 / 2.0).epsilon(1e-12));
  CHECK(risk_cost(-1.0, kInf, cfg) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(risk_cost(kInf, kInf, cfg) == 0.0);

  cfg.safety_margin = 0.2;
  CHECK(risk_cost(0.5, kInf, cfg) == doctest::Approx(10.0 / 0.3).epsilon(1e-12));
}

TEST_CASE("sigma-set risk uses the weighted clearance mean minus scaled deviation") {
  PlannerConfig cfg;
  cfg.agent_risk_weight = 10.0;
  cfg.obstacle_risk_weight = 0.0;
  cfg.robot_radius = 0.3;
  cfg.risk_sigma_gain = 1.0;

  SigmaPointSet set;
  set.points.resize(2, 2);
  set.points.col(0) = Eigen::Vector2d(1.0, 0.0);
  set.points.col(1) = Eigen::Vector2d(3.0, 0.0);
  set.weights = Eigen::Vector2d(0.5, 0.5);

  // clearances {0.4, 2.4}: mean 1.4, stddev 1 -> barrier at 0.4
  const double got = stage_cost_risk(cfg, Vec2(0.0, 0.0), {set}, {0.3}, {});
  CHECK(got == doctest::Approx(10.0 / 0.4).epsilon(1e-12));

  cfg.risk_sigma_gain = 1.96;
  // 1.4 - 1.96 < 0 saturates at the floor
  const double saturated = stage_cost_risk(cfg, Vec2(0.0, 0.0), {set}, {0.3}, {});
  CHECK(saturated == doctest::Approx(10.0 / 0.01).epsilon(1e-12));
}

TEST_CASE("rollout accumulates stage, control and terminal costs in order") {
  PlannerConfig cfg;
  cfg.horizon = 3;
  cfg.samples = 1;
  cfg.dt = 0.1;
  cfg.lambda = 1.0;
  cfg.control_cost_weight = 0.1;
  cfg.goal_weight = 1.0;
  cfg.obstacle_risk_weight = 5.0;
  cfg.agent_risk_weight = 10.0;

  PlanningProblem problem;
  problem.robot.position = Vec2(0.0, 0.0);
  problem.goal = Vec2(1.0, 0.0);
  problem.obstacles = {{Vec2(0.0, 1.5), 0.5}};

  Eigen::Matrix2Xd nominal(2, 3);
  nominal << 1.0, 0.5, 0.25, 0.0, 0.2, -0.1;
  const Eigen::Matrix2Xd eps = Eigen::Matrix2Xd::Zero(2, 3);

  const RolloutResult r = rollout(cfg, problem, nominal, eps, true);
  REQUIRE(r.path.size() == 4);

  const Eigen::Matrix2d inv = cfg.noise_covariance.inverse();
  double expected = 0.0;
  Vec2 x(0.0, 0.0);
  for (int t = 0; t < 3; ++t) {
    expected += stage_cost_convergence(x, problem.goal, cfg.goal_weight);
    expected += risk_cost(kInf, distance_to_obstacle(x, cfg.robot_radius, problem.obstacles[0]),
                          cfg);
    const Vec2 u = nominal.col(t);
    expected += cfg.control_cost_weight * nominal.col(t).dot(inv * u);
    x += u * cfg.dt;
    CHECK((r.path[static_cast<size_t>(t + 1)].position - x).norm() <= 1e-14);
  }
  expected += stage_cost_convergence(x, problem.goal, cfg.goal_weight);
  CHECK(r.cost == doctest::Approx(expected).epsilon(1e-12));
  CHECK((r.final_state.position - x).norm() <= 1e-14);
}

TEST_CASE("control bounds clamp every applied command") {
  PlannerConfig cfg;
  cfg.horizon = 5;
  cfg.dt = 0.1;
  cfg.control_bounds = ControlBounds{Vec2(-0.5, -0.5), Vec2(0.5, 0.5)};

  PlanningProblem problem;
  problem.goal = Vec2(3.0, 0.0);

  const Eigen::Matrix2Xd nominal = Eigen::Matrix2Xd::Zero(2, 5);
  Eigen::Matrix2Xd eps(2, 5);
  eps.setConstant(10.0);

  const RolloutResult r = rollout(cfg, problem, nominal, eps, true);
  for (size_t t = 1; t < r.path.size(); ++t) {
    const Vec2 delta = r.path[t].position - r.path[t - 1].position;
    CHECK(std::abs(delta.x()) <= 0.5 * cfg.dt + 1e-12);
    CHECK(std::abs(delta.y()) <= 0.5 * cfg.dt + 1e-12);
  }
}

TEST_CASE("fast prediction equals the generic expansion-compression reference") {
  const std::vector<Obstacle> obstacles = {{Vec2(1.5, 0.5), 0.4}};
  const HybridAgentModel model = test_model(obstacles);

  std::vector<RobotState> path;
  Rng rng(4242);
  RobotState robot;
  robot.position = Vec2(0.5, -0.5);
  for (int t = 0; t < 6; ++t) {
    robot.position += Vec2(0.2 * rng.normal(), 0.2 * rng.normal());
    path.push_back(robot);
  }

  for (const SwitchingPolicy pol :
       {SwitchingPolicy::kPerSigmaPoint, SwitchingPolicy::kMeanBased,
        SwitchingPolicy::kUnaware}) {
    PlannerConfig cfg;
    cfg.dt = 0.05;
    cfg.switching = pol;

    PlanningProblem problem;
    problem.robot = path[0];
    problem.goal = Vec2(5.0, 0.0);
    problem.models = {model};
    problem.beliefs = {planar_belief(1.0, 0.0, 0.3, 0.2)};

    const auto fast = predict_agent_sets(cfg, problem, path, 6);
    const auto generic = generic_predict(cfg, model, problem.beliefs[0], path, 6);
    REQUIRE(fast.size() == 6);
    for (int t = 0; t < 6; ++t) {
      const auto& fs = fast[static_cast<size_t>(t)][0];
      const auto& gs = generic[static_cast<size_t>(t)];
      CHECK((fs.points - gs.points).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((fs.weights - gs.weights).cwiseAbs().maxCoeff() <= 1e-12);
      const GaussianMoments fm = empirical_moments(fs);
      const GaussianMoments gm = empirical_moments(gs);
      CHECK((fm.mean - gm.mean).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((fm.covariance - gm.covariance).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("per-point switching differs from mean-based switching near the sensing edge") {
  // Belief spread along x puts one sigma point inside the sensing radius
  // while the mean stays outside.
  PlanningProblem problem;
  problem.robot.position = Vec2(2.5, 3.0);
  problem.goal = Vec2(0.0, 0.0);
  problem.models = {test_model()};
  problem.beliefs = {planar_belief(0.0, 3.0, 1.0, 0.01)};

  PlannerConfig per_point;
  per_point.switching = SwitchingPolicy::kPerSigmaPoint;
  PlannerConfig mean_based;
  mean_based.switching = SwitchingPolicy::kMeanBased;

  const std::vector<RobotState> path = {problem.robot};
  const auto a = predict_agent_sets(per_point, problem, path, 1);
  const auto b = predict_agent_sets(mean_based, problem, path, 1);
  const double gap =
      (empirical_moments(a[0][0]).mean - empirical_moments(b[0][0]).mean).norm();
  CHECK(gap > 1e-6);

  // With the robot far away, no point can switch and both policies coincide.
  problem.robot.position = Vec2(100.0, 3.0);
  const std::vector<RobotState> far = {problem.robot};
  const auto c = predict_agent_sets(per_point, problem, far, 1);
  const auto d = predict_agent_sets(mean_based, problem, far, 1);
  CHECK((c[0][0].points - d[0][0].points).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("unaware prediction ignores the robot entirely") {
  PlannerConfig cfg;
  cfg.switching = SwitchingPolicy::kUnaware;

  PlanningProblem problem;
  problem.goal = Vec2(0.0, 0.0);
  problem.models = {test_model()};
  problem.beliefs = {planar_belief(0.0, 0.0, 0.2, 0.2)};

  RobotState near;
  near.position = Vec2(0.3, 0.0);
  RobotState far;
  far.position = Vec2(50.0, 0.0);
  problem.robot = near;
  const auto a = predict_agent_sets(cfg, problem, {near, near}, 2);
  problem.robot = far;
  const auto b = predict_agent_sets(cfg, problem, {far, far}, 2);
  CHECK((a[1][0].points - b[1][0].points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("planner steps are deterministic and thread-count independent") {
  for (const PredictionMode mode :
       {PredictionMode::kSigmaPoints, PredictionMode::kMonteCarlo}) {
    PlannerConfig cfg;
    cfg.horizon = 6;
    cfg.samples = 24;
    cfg.seed = 7;
    cfg.prediction = mode;
    cfg.mc_replicas = 8;

    PlanningProblem problem;
    problem.robot.position = Vec2(0.0, 0.0);
    problem.goal = Vec2(3.0, 1.0);
    problem.models = {test_model()};
    problem.beliefs = {planar_belief(1.5, 0.5, 0.05, 0.05)};
    problem.obstacles = {{Vec2(1.0, -1.0), 0.4}};

    MppiPlanner p1(cfg);
    cfg.threads = 4;
    MppiPlanner p2(cfg);
    const auto r1 = p1.step(problem);
    const auto r2 = p2.step(problem);
    CHECK(r1.command.u1 == r2.command.u1);
    CHECK(r1.command.u2 == r2.command.u2);
    CHECK(r1.optimized == r2.optimized);
    CHECK(r1.min_cost == r2.min_cost);

    // a second step continues the deterministic stream
    const auto r1b = p1.step(problem);
    const auto r2b = p2.step(problem);
    CHECK(r1b.optimized == r2b.optimized);
  }
}

TEST_CASE("the warm start shifts the optimized sequence by one step") {
  PlannerConfig cfg;
  cfg.horizon = 5;
  cfg.samples = 16;
  cfg.seed = 3;

  PlanningProblem problem;
  problem.goal = Vec2(2.0, 0.0);
  problem.models = {test_model()};
  problem.beliefs = {planar_belief(1.0, 1.0, 0.05, 0.05)};

  MppiPlanner planner(cfg);
  const auto r = planner.step(problem);
  const Eigen::Matrix2Xd& nominal = planner.nominal();
  CHECK((nominal.leftCols(4) - r.optimized.rightCols(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((nominal.col(4) - r.optimized.col(4)).cwiseAbs().maxCoeff() == 0.0);

  planner.reset();
  CHECK(planner.nominal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("receding-horizon planning drives the robot toward the goal") {
  PlannerConfig cfg;
  cfg.horizon = 10;
  cfg.samples = 64;
  cfg.dt = 0.1;
  cfg.noise_covariance = Eigen::Matrix2d::Identity();
  cfg.seed = 11;

  PlanningProblem problem;
  problem.robot.position = Vec2(0.0, 0.0);
  problem.goal = Vec2(2.0, 0.0);

  MppiPlanner planner(cfg);
  for (int i = 0; i < 25; ++i) {
    const auto r = planner.step(problem);
    problem.robot =
        single_integrator_step(problem.robot, r.command, cfg.dt);
  }
  CHECK((problem.robot.position - problem.goal).norm() < 0.25);
}

TEST_CASE("replica propagation matches the analytic far-field distribution") {
  // Far from the robot the agent never switches: each step adds an exact
  // N(u_nom*dt, alpha*tanh(beta/|u_nom|)*dt^2 I) increment.
  const HybridAgentModel model = test_model();
  RobotState robot;
  robot.position = Vec2(1000.0, 0.0);

  const int k = 100000;
  Eigen::Matrix2Xd replicas = Eigen::Matrix2Xd::Zero(2, k);
  Rng rng(321);
  const int steps = 4;
  const double dt = 0.05;
  for (int t = 0; t < steps; ++t)
    mc_agent_step(replicas, model, robot, 0.3, SwitchingPolicy::kPerSigmaPoint, dt, rng);

  const double var_step = 80.0 * std::tanh(1.0 / 3.0) * dt * dt;
  const Eigen::Vector2d mean = replicas.rowwise().mean();
  CHECK(std::abs(mean(0) - 3.0 * dt * steps) <= 3.5 * std::sqrt(var_step * steps / k));
  CHECK(std::abs(mean(1)) <= 3.5 * std::sqrt(var_step * steps / k));

  const Eigen::MatrixXd centered = replicas.colwise() - mean;
  const Eigen::Matrix2d cov = centered * centered.transpose() / (k - 1.0);
  CHECK(std::abs(cov(0, 0) - var_step * steps) <= 0.03 * var_step * steps);
  CHECK(std::abs(cov(1, 1) - var_step * steps) <= 0.03 * var_step * steps);
}

TEST_CASE("replica clearance statistics are exact for a degenerate cloud") {
  const HybridAgentModel model = test_model();
  RobotState robot;
  robot.position = Vec2(4.0, 0.0);
  Eigen::Matrix2Xd replicas = Eigen::Matrix2Xd::Zero(2, 16);  // all at the origin
  Rng rng(1);
  const DistanceStats s =
      mc_agent_step(replicas, model, robot, 0.3, SwitchingPolicy::kPerSigmaPoint, 0.05, rng);
  CHECK(s.mean == doctest::Approx(4.0 - 0.6).epsilon(1e-12));
  CHECK(s.stddev <= 1e-12);
}

TEST_CASE("replica rollouts validate their inputs and report initial spread") {
  const std::vector<HybridAgentModel> models = {test_model()};
  const std::vector<GaussianMoments> beliefs = {planar_belief(1.0, 0.0, 0.04, 0.04)};
  const std::vector<RobotState> path(3);

  Rng rng(5);
  CHECK_THROWS_AS(mc_agent_rollout(models, beliefs, path, 3, 1, 0.3,
                                   SwitchingPolicy::kPerSigmaPoint, 0.05, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(mc_agent_rollout(models, beliefs, path, 5, 20, 0.3,
                                   SwitchingPolicy::kPerSigmaPoint, 0.05, rng),
                  std::invalid_argument);

  const McPredictionBundle bundle = mc_agent_rollout(
      models, beliefs, path, 3, 50, 0.3, SwitchingPolicy::kPerSigmaPoint, 0.05, rng);
  CHECK(bundle.replicas == 50);
  REQUIRE(bundle.stats.size() == 3);
  REQUIRE(bundle.stats[0].size() == 1);
  CHECK(bundle.stats[0][0].stddev > 0.0);  // initial replicas are resampled

  PlannerConfig cfg;
  cfg.agent_risk_weight = 10.0;
  cfg.obstacle_risk_weight = 0.0;
  const double q = mc_stage_cost_risk(cfg, Vec2(0.0, 0.0), bundle.stats[0], {});
  const double r =
      bundle.stats[0][0].mean - cfg.risk_sigma_gain * bundle.stats[0][0].stddev;
  CHECK(q == doctest::Approx(10.0 / std::max(r, cfg.distance_floor)).epsilon(1e-12));
}

TEST_CASE("planner configuration validation rejects out-of-range settings") {
  PlannerConfig cfg;
  CHECK_NOTHROW(validate(cfg));

  PlannerConfig bad = cfg;
  bad.control_cost_weight = bad.lambda * 1.5;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = cfg;
  bad.noise_covariance << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = cfg;
  bad.prediction = PredictionMode::kMonteCarlo;
  bad.mc_replicas = 1;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = cfg;
  bad.ut.kappa = -2.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  bad = cfg;
  bad.control_bounds = ControlBounds{Vec2(1.0, 0.0), Vec2(-1.0, 0.0)};
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);

  PlanningProblem problem;
  problem.models = {test_model()};
  CHECK_THROWS_AS(validate(problem), std::invalid_argument);  // missing belief
}

TEST_CASE("rollouts reject models outside the two-mode attention form") {
  PlannerConfig cfg;
  PlanningProblem problem;
  HybridAgentModel custom = test_model();
  custom.modes[0].dynamics = [](const AgentState& a, const RobotState&, double) {
    GaussianMoments m;
    m.mean = a;
    m.covariance = Eigen::Matrix2d::Identity();
    return m;
  };
  problem.models = {custom};
  problem.beliefs = {planar_belief(0.0, 0.0, 0.1, 0.1)};
  const Eigen::Matrix2Xd zeros = Eigen::Matrix2Xd::Zero(2, cfg.horizon);
  CHECK_THROWS_AS(rollout(cfg, problem, zeros, zeros), std::invalid_argument);
}
