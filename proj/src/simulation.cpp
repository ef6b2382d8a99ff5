#include "ecut_mppi/simulation.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ecut_mppi/parallel.hpp"
#include "ecut_mppi/rng.hpp"
#include "ecut_mppi/unscented.hpp"

namespace ecut_mppi {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Shortest decimal representation that round-trips the exact double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(int v) { return std::to_string(v); }

double min_agent_clearance(const Vec2& robot, double robot_radius,
                           const std::vector<Vec2>& agents, double agent_radius) {
  double best = kInf;
  for (const Vec2& a : agents) {
    best = std::min(best, distance_to_agent(robot, robot_radius, a, agent_radius));
  }
  return best;
}

double min_obstacle_clearance(const Vec2& robot, double robot_radius,
                              const std::vector<Obstacle>& obstacles) {
  double best = kInf;
  for (const Obstacle& ob : obstacles) {
    best = std::min(best, distance_to_obstacle(robot, robot_radius, ob));
  }
  return best;
}

double series_min(const std::vector<double>& v) {
  double best = kInf;
  for (double x : v) best = std::min(best, x);
  return best;
}

void append_flag(std::string& out, const char* key, bool value) {
  out += "  ";
  out += key;
  out += ": ";
  out += value ? "true" : "false";
  out += "\n";
}

void append_value(std::string& out, const char* key, const std::string& value) {
  out += "  ";
  out += key;
  out += ": ";
  out += value;
  out += "\n";
}

}  // namespace

void mean_ci(const std::vector<double>& values, double& mean, double& half_width) {
  const int n = static_cast<int>(values.size());
  mean = 0.0;
  half_width = 0.0;
  if (n == 0) return;
  bool constant = true;
  for (double v : values) constant = constant && v == values.front();
  if (constant) {  // exact, and well-defined even for infinite clearances
    mean = values.front();
    return;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  mean = sum / n;
  if (n < 2) return;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  half_width = 1.96 * sd / std::sqrt(static_cast<double>(n));
}

double lower_band_min(const SeriesStats& series) {
  double best = kInf;
  for (std::size_t t = 0; t < series.mean.size(); ++t) {
    best = std::min(best, series.mean[t] - series.ci95_half_width[t]);
  }
  return best;
}

double band_violation_fraction(const SeriesStats& series) {
  if (series.mean.empty()) return 0.0;
  int violations = 0;
  for (std::size_t t = 0; t < series.mean.size(); ++t) {
    if (series.mean[t] - series.ci95_half_width[t] <= 0.0) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(series.mean.size());
}

EpisodeLog simulate_episode(const Scenario& scenario, uint64_t seed) {
  EpisodeLog log;
  log.dt = scenario.dt;
  log.has_heading = scenario.robot_model == RobotModel::kUnicycle;

  PlanningProblem problem = base_problem(scenario);
  const HybridAgentModel model = agent_model(scenario);
  MppiPlanner planner(scenario.planner);
  Rng world(seed);

  RobotState x = scenario.robot_start;
  std::vector<Vec2> agents = scenario.agent_starts;
  const int steps = scenario.episode_steps;
  const double dt = scenario.dt;
  double cum = 0.0;

  log.robot.reserve(steps);
  log.control.reserve(steps);
  log.agent_states.reserve(steps);
  log.q_c.reserve(steps);
  log.cum_cost.reserve(steps);
  log.min_agent_dist.reserve(steps);
  log.min_obstacle_dist.reserve(steps);
  log.iter_time_ms.reserve(steps);

  for (int t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < agents.size(); ++i) problem.beliefs[i].mean = agents[i];
    problem.robot = x;

    MppiPlanner::StepResult res;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      res = planner.step(problem);
    } catch (const std::exception& e) {
      log.failed = true;
      log.error = e.what();
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double iter_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    const double q = stage_cost_convergence(x.position, scenario.goal,
                                            scenario.planner.goal_weight);
    const double agent_dist =
        min_agent_clearance(x.position, scenario.robot_radius, agents, scenario.agent_radius);
    const double obstacle_dist =
        min_obstacle_clearance(x.position, scenario.robot_radius, scenario.obstacles);
    cum += q + risk_cost(agent_dist, obstacle_dist, scenario.planner);

    log.robot.push_back(x);
    log.control.push_back(res.command);
    log.agent_states.push_back(agents);
    log.q_c.push_back(q);
    log.cum_cost.push_back(cum);
    log.min_agent_dist.push_back(agent_dist);
    log.min_obstacle_dist.push_back(obstacle_dist);
    log.iter_time_ms.push_back(iter_ms);

    if (agent_dist <= 0.0 || obstacle_dist <= 0.0) log.collision = true;
    if ((x.position - scenario.goal).norm() <= scenario.goal_tolerance) log.goal_reached = true;

    // The true agents move first, with their modes evaluated against the
    // robot state they actually observed, then the robot applies its command.
    for (Vec2& a : agents) {
      const int mode = active_mode(model, a, x);
      const GaussianMoments m = agent_conditional_moments(model, mode, a, x, dt);
      Vec2 next = m.mean;
      if (scenario.ground_truth.sample_noise) {
        const Eigen::Matrix2d root = cholesky_2x2_psd(m.covariance);
        next += root * Vec2(world.normal(), world.normal());
      }
      a = next;
    }
    x = scenario.robot_model == RobotModel::kUnicycle ? unicycle_step(x, res.command, dt)
                                                      : single_integrator_step(x, res.command, dt);
  }

  if (!log.failed && (x.position - scenario.goal).norm() <= scenario.goal_tolerance) {
    log.goal_reached = true;
  }
  return log;
}

AggregateStats run_monte_carlo(const Scenario& scenario, int n_runs, uint64_t seed0,
                               int episode_workers) {
  if (n_runs < 1) throw std::invalid_argument("run_monte_carlo: n_runs must be >= 1");

  std::vector<EpisodeLog> logs(n_runs);
  Scenario worker_scenario = scenario;
  if (episode_workers != 1) worker_scenario.planner.threads = 1;
  parallel_for(n_runs, episode_workers, [&](int begin, int end, int) {
    for (int i = begin; i < end; ++i) {
      logs[i] = simulate_episode(worker_scenario, seed0 + static_cast<uint64_t>(i));
    }
  });

  AggregateStats stats;
  stats.runs = n_runs;
  stats.dt = scenario.dt;

  int collisions = 0;
  int goals = 0;
  double time_sum = 0.0;
  int time_count = 0;
  for (const EpisodeLog& log : logs) {
    if (log.collision) ++collisions;
    if (log.goal_reached) ++goals;
    if (log.failed) {
      stats.errors.push_back(log.error);
    } else {
      ++stats.completed;
      if (log.steps() > 0) {
        stats.run_min_agent_dist.push_back(series_min(log.min_agent_dist));
        stats.run_final_cum_cost.push_back(log.cum_cost.back());
      }
      for (double ms : log.iter_time_ms) {
        time_sum += ms;
        ++time_count;
      }
    }
  }
  stats.collision_rate = static_cast<double>(collisions) / n_runs;
  stats.goal_reach_rate = static_cast<double>(goals) / n_runs;
  stats.mean_iteration_ms = time_count > 0 ? time_sum / time_count : 0.0;

  if (stats.completed > 0) {
    const int steps = scenario.episode_steps;
    stats.cum_cost.mean.resize(steps);
    stats.cum_cost.ci95_half_width.resize(steps);
    stats.min_agent_dist.mean.resize(steps);
    stats.min_agent_dist.ci95_half_width.resize(steps);
    stats.min_obstacle_dist.mean.resize(steps);
    stats.min_obstacle_dist.ci95_half_width.resize(steps);
    std::vector<double> column;
    column.reserve(stats.completed);
    const auto fill = [&](const std::vector<double> EpisodeLog::* series, SeriesStats& out) {
      for (int t = 0; t < steps; ++t) {
        column.clear();
        for (const EpisodeLog& log : logs) {
          if (!log.failed) column.push_back((log.*series)[t]);
        }
        mean_ci(column, out.mean[t], out.ci95_half_width[t]);
      }
    };
    fill(&EpisodeLog::cum_cost, stats.cum_cost);
    fill(&EpisodeLog::min_agent_dist, stats.min_agent_dist);
    fill(&EpisodeLog::min_obstacle_dist, stats.min_obstacle_dist);
  }
  return stats;
}

std::string episode_csv(const EpisodeLog& log, bool measured_timing) {
  std::string out = log.has_heading
                        ? "step,time_s,robot_x,robot_y,robot_theta,u1,u2,q_c,cum_cost,"
                          "min_agent_dist_m,min_obs_dist_m,iter_time_ms\n"
                        : "step,time_s,robot_x,robot_y,u1,u2,q_c,cum_cost,"
                          "min_agent_dist_m,min_obs_dist_m,iter_time_ms\n";
  for (int t = 0; t < log.steps(); ++t) {
    out += fmt(t);
    out += ',' + fmt(t * log.dt);
    out += ',' + fmt(log.robot[t].position.x());
    out += ',' + fmt(log.robot[t].position.y());
    if (log.has_heading) out += ',' + fmt(log.robot[t].heading);
    out += ',' + fmt(log.control[t].u1);
    out += ',' + fmt(log.control[t].u2);
    out += ',' + fmt(log.q_c[t]);
    out += ',' + fmt(log.cum_cost[t]);
    out += ',' + fmt(log.min_agent_dist[t]);
    out += ',' + fmt(log.min_obstacle_dist[t]);
    out += ',' + fmt(measured_timing ? log.iter_time_ms[t] : 0.0);
    out += '\n';
  }
  return out;
}

std::string aggregate_csv(const AggregateStats& stats) {
  std::string out = "metric,step,time_s,mean,ci95_half_width\n";
  const auto block = [&](const char* name, const SeriesStats& series) {
    for (std::size_t t = 0; t < series.mean.size(); ++t) {
      out += name;
      out += ',' + fmt(static_cast<int>(t));
      out += ',' + fmt(static_cast<double>(t) * stats.dt);
      out += ',' + fmt(series.mean[t]);
      out += ',' + fmt(series.ci95_half_width[t]);
      out += '\n';
    }
  };
  block("cum_cost", stats.cum_cost);
  block("min_agent_dist_m", stats.min_agent_dist);
  block("min_obs_dist_m", stats.min_obstacle_dist);
  return out;
}

std::string episode_summary(const Scenario& scenario, const EpisodeLog& log,
                            bool measured_timing) {
  std::string out = "episode summary\n";
  append_value(out, "steps", fmt(log.steps()));
  append_flag(out, "goal_reached", log.goal_reached);
  append_flag(out, "collision", log.collision);
  append_flag(out, "failed", log.failed);
  if (log.failed) append_value(out, "error", log.error);
  if (log.steps() > 0) {
    append_value(out, "final_cum_cost", fmt(log.cum_cost.back()));
    append_value(out, "min_agent_dist_m", fmt(series_min(log.min_agent_dist)));
    append_value(out, "min_obs_dist_m", fmt(series_min(log.min_obstacle_dist)));
  }
  if (measured_timing && !log.iter_time_ms.empty()) {
    double mean = 0.0;
    double hw = 0.0;
    mean_ci(log.iter_time_ms, mean, hw);
    append_value(out, "mean_iter_time_ms", fmt(mean));
  }
  out += "scenario:\n";
  out += scenario_echo(scenario);
  return out;
}

std::string aggregate_summary(const Scenario& scenario, const AggregateStats& stats,
                              bool measured_timing) {
  std::string out = "aggregate summary\n";
  append_value(out, "runs", fmt(stats.runs));
  append_value(out, "completed", fmt(stats.completed));
  append_value(out, "collision_rate", fmt(stats.collision_rate));
  append_value(out, "goal_reach_rate", fmt(stats.goal_reach_rate));
  if (!stats.cum_cost.mean.empty()) {
    append_value(out, "final_cum_cost_mean", fmt(stats.cum_cost.mean.back()));
    append_value(out, "final_cum_cost_ci95", fmt(stats.cum_cost.ci95_half_width.back()));
    append_value(out, "min_agent_dist_lower_band_m", fmt(lower_band_min(stats.min_agent_dist)));
  }
  if (measured_timing) append_value(out, "mean_iteration_ms", fmt(stats.mean_iteration_ms));
  for (const std::string& err : stats.errors) append_value(out, "run_error", err);
  out += "scenario:\n";
  out += scenario_echo(scenario);
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

}  // namespace ecut_mppi
