#pragma once

#include <string>
#include <vector>

#include "ecut_mppi/scenario.hpp"

namespace ecut_mppi {

/// Per-step record of one closed-loop episode. Every series has exactly
/// `steps()` entries; a planner failure leaves a shorter, partial log with
/// `failed` set and the diagnostic in `error`.
struct EpisodeLog {
  double dt = 0.0;
  bool has_heading = false;  // unicycle scenarios add a heading column

  std::vector<RobotState> robot;               // state the step was planned from
  std::vector<ControlInput> control;           // control applied at that state
  std::vector<std::vector<Vec2>> agent_states; // true agent positions, per step
  std::vector<double> q_c;                     // instantaneous convergence cost
  std::vector<double> cum_cost;                // running total of realized stage cost
  std::vector<double> min_agent_dist;          // clearance incl. body radii
  std::vector<double> min_obstacle_dist;
  std::vector<double> iter_time_ms;            // measured planner wall time

  bool goal_reached = false;
  bool collision = false;
  bool failed = false;
  std::string error;

  int steps() const { return static_cast<int>(robot.size()); }
};

/// Mean and symmetric 95% confidence half-width per timestep, over runs.
struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> ci95_half_width;
};

/// Summary of a batch of independently seeded episodes.
struct AggregateStats {
  int runs = 0;       // episodes attempted
  int completed = 0;  // episodes that produced a full-length log
  double dt = 0.0;

  double collision_rate = 0.0;
  double goal_reach_rate = 0.0;
  double mean_iteration_ms = 0.0;

  SeriesStats cum_cost;
  SeriesStats min_agent_dist;
  SeriesStats min_obstacle_dist;

  // Per completed run, in seed order: episode minimum agent clearance and
  // final cumulative cost. Feed these to mean_ci for run-level confidence
  // bands (e.g. the 95% lower band of the closest approach).
  std::vector<double> run_min_agent_dist;
  std::vector<double> run_final_cum_cost;

  std::vector<std::string> errors;  // diagnostics of failed runs, if any
};

/// Sample mean and 95% normal-approximation confidence half-width
/// (1.96 * sd / sqrt(n), unbiased sd; zero for n < 2).
void mean_ci(const std::vector<double>& values, double& mean, double& half_width);

/// Smallest value of (mean - half_width) across the series; +inf if empty.
double lower_band_min(const SeriesStats& series);

/// Fraction of timesteps whose 95% lower band touches or crosses zero.
double band_violation_fraction(const SeriesStats& series);

/// Runs one closed-loop episode: plan, apply the first control, advance the
/// true agents by sampling their active mode, refresh beliefs from the true
/// states, repeat for the configured number of steps. Deterministic in
/// (scenario, seed); the seed drives only the simulated world, the planner's
/// sampling stream is seeded from the scenario itself.
EpisodeLog simulate_episode(const Scenario& scenario, uint64_t seed);

/// Runs `n_runs` episodes with seeds seed0, seed0+1, ... and aggregates them.
/// `episode_workers` <= 0 uses the hardware thread count; results do not
/// depend on the worker count.
AggregateStats run_monte_carlo(const Scenario& scenario, int n_runs, uint64_t seed0,
                               int episode_workers = 1);

/// One CSV row per timestep with a fixed, documented column order. The
/// timing column is written as zero unless `measured_timing` is set, so that
/// repeated identical runs produce byte-identical files.
std::string episode_csv(const EpisodeLog& log, bool measured_timing = false);

/// Aggregate time series as CSV: one block of `steps` rows per metric.
std::string aggregate_csv(const AggregateStats& stats);

/// Human-readable summary: terminal flags or rates, final costs and the full
/// scenario echo. Timing lines are included only when `measured_timing` is
/// set, keeping the text byte-stable across reruns.
std::string episode_summary(const Scenario& scenario, const EpisodeLog& log,
                            bool measured_timing = false);
std::string aggregate_summary(const Scenario& scenario, const AggregateStats& stats,
                              bool measured_timing = false);

/// Writes `text` to `path` (binary, overwrite). Throws on I/O failure.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace ecut_mppi
