// Command-line front end: simulate single episodes, Monte-Carlo batches, or
// the full planner-variant comparison, and export the logs as CSV/summaries.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ecut_mppi/simulation.hpp"

namespace {

using namespace ecut_mppi;

struct CommonOptions {
  std::string scenario;
  std::string out_dir;
  int threads = 0;  // 0: hardware concurrency
  bool measured_timing = false;
};

std::string default_out_dir() {
  const char* env = std::getenv("ECUT_MPPI_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path path(dir);
  std::filesystem::create_directories(path);
  return path;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

/// One row of the comparison table; `timing` is appended only on stdout.
std::string table_row(const std::string& variant, const AggregateStats& stats) {
  char buf[256];
  const double final_cum = stats.cum_cost.mean.empty() ? 0.0 : stats.cum_cost.mean.back();
  const double final_ci =
      stats.cum_cost.ci95_half_width.empty() ? 0.0 : stats.cum_cost.ci95_half_width.back();
  double min_mean = 0.0;
  double min_hw = 0.0;
  mean_ci(stats.run_min_agent_dist, min_mean, min_hw);
  std::snprintf(buf, sizeof(buf), "%-12s %14s %10s %15s %15s %15s %15s", variant.c_str(),
                fixed(stats.collision_rate).c_str(), fixed(stats.goal_reach_rate).c_str(),
                fixed(final_cum, 3).c_str(), fixed(final_ci, 3).c_str(),
                fixed(min_mean).c_str(), fixed(min_mean - min_hw).c_str());
  return buf;
}

const char* kTableHeader =
    "variant      collision_rate  goal_rate  final_cum_mean   final_cum_ci95  min_agent_mean   "
    "min_agent_lband";

int cmd_validate(const CommonOptions& opts) {
  const Scenario scenario = load_scenario(opts.scenario);
  std::cout << "OK: " << opts.scenario << "\n" << scenario_echo(scenario);
  return 0;
}

int cmd_run(const CommonOptions& opts, uint64_t seed) {
  const Scenario scenario = load_scenario(opts.scenario);
  // The thread override is an execution detail: it never enters the echoed
  // configuration, and the outputs are identical for every thread count.
  Scenario exec = scenario;
  if (opts.threads != 0) exec.planner.threads = opts.threads;
  const EpisodeLog log = simulate_episode(exec, seed);

  const auto dir = prepare_out_dir(opts.out_dir);
  const auto csv_path = dir / "episode.csv";
  const auto summary_path = dir / "episode_summary.txt";
  write_text_file(csv_path.string(), episode_csv(log, opts.measured_timing));
  write_text_file(summary_path.string(),
                  episode_summary(scenario, log, opts.measured_timing));

  double mean_ms = 0.0;
  double hw = 0.0;
  mean_ci(log.iter_time_ms, mean_ms, hw);
  std::cout << "episode: steps=" << log.steps() << " goal_reached=" << std::boolalpha
            << log.goal_reached << " collision=" << log.collision << " failed=" << log.failed
            << "\nfinal_cum_cost=" << (log.steps() > 0 ? log.cum_cost.back() : 0.0)
            << " mean_iter_time_ms=" << fixed(mean_ms, 2) << "\nwrote " << csv_path.string()
            << "\nwrote " << summary_path.string() << "\n";
  if (log.failed) {
    std::cerr << "error: planner failed mid-episode: " << log.error << "\n";
    return 1;
  }
  return 0;
}

int cmd_mc(const CommonOptions& opts, int runs, uint64_t seed0) {
  Scenario scenario = load_scenario(opts.scenario);
  const AggregateStats stats = run_monte_carlo(scenario, runs, seed0, opts.threads);

  const auto dir = prepare_out_dir(opts.out_dir);
  const auto csv_path = dir / "aggregate.csv";
  const auto summary_path = dir / "aggregate_summary.txt";
  write_text_file(csv_path.string(), aggregate_csv(stats));
  write_text_file(summary_path.string(),
                  aggregate_summary(scenario, stats, opts.measured_timing));

  std::cout << "runs=" << stats.runs << " completed=" << stats.completed
            << " collision_rate=" << fixed(stats.collision_rate)
            << " goal_reach_rate=" << fixed(stats.goal_reach_rate)
            << " mean_iteration_ms=" << fixed(stats.mean_iteration_ms, 2) << "\nwrote "
            << csv_path.string() << "\nwrote " << summary_path.string() << "\n";
  if (stats.completed < stats.runs) {
    std::cerr << "error: " << stats.runs - stats.completed << " of " << stats.runs
              << " runs failed\n";
    return 1;
  }
  return 0;
}

int cmd_compare(const CommonOptions& opts, int runs, uint64_t seed0,
                const std::vector<int>& mc_replicas) {
  const Scenario base = load_scenario(opts.scenario);

  Scenario aware = base;
  aware.planner_kind = PlannerKind::kEcut;
  aware.planner.switching = SwitchingPolicy::kPerSigmaPoint;
  finalize(aware);

  std::vector<std::pair<std::string, Scenario>> variants;
  variants.emplace_back("aware", aware);
  variants.emplace_back("unaware", with_switching(aware, SwitchingPolicy::kUnaware));
  variants.emplace_back("mean_based", with_switching(aware, SwitchingPolicy::kMeanBased));
  for (int k : mc_replicas) {
    variants.emplace_back("mc_k" + std::to_string(k), with_mc_baseline(aware, k));
  }

  const auto dir = prepare_out_dir(opts.out_dir);
  std::string table = "comparative study: " + base.name + "\n";
  table += "runs_per_variant: " + std::to_string(runs) + "\n";
  table += "seed0: " + std::to_string(seed0) + "\n";
  table += kTableHeader;
  table += "\n";

  for (const auto& [name, scenario] : variants) {
    const AggregateStats stats = run_monte_carlo(scenario, runs, seed0, opts.threads);
    write_text_file((dir / (name + ".csv")).string(), aggregate_csv(stats));
    write_text_file((dir / (name + "_summary.txt")).string(),
                    aggregate_summary(scenario, stats, opts.measured_timing));
    table += table_row(name, stats);
    table += "\n";
    std::cout << table_row(name, stats) << "  mean_iter_ms=" << fixed(stats.mean_iteration_ms, 2)
              << "\n";
  }
  const auto table_path = dir / "comparison.txt";
  write_text_file(table_path.string(), table);
  std::cout << "wrote " << table_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-aware sampling-based planner among mode-switching agents"};
  app.require_subcommand(1);

  CommonOptions opts;
  opts.out_dir = default_out_dir();
  uint64_t seed = 0;
  int runs = 50;
  uint64_t seed0 = 1;
  std::vector<int> mc_replicas;

  const auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--scenario", opts.scenario, "Scenario file (JSON)")->required();
    if (with_out) {
      cmd->add_option("--out", opts.out_dir,
                      "Output directory (default: $ECUT_MPPI_OUT_DIR or '.')");
      cmd->add_option("--threads", opts.threads,
                      "Worker threads (0 = hardware concurrency); outputs are identical "
                      "for every thread count");
      cmd->add_flag("--measured-timing", opts.measured_timing,
                    "Write measured per-step planner times into the exports instead of "
                    "zeros (makes files differ between reruns)");
    }
  };

  CLI::App* run = app.add_subcommand("run", "Simulate one episode and export its log");
  add_common(run, true);
  run->add_option("--seed", seed, "World seed for the episode");

  CLI::App* mc = app.add_subcommand("mc", "Aggregate independently seeded episodes");
  add_common(mc, true);
  mc->add_option("--runs", runs, "Number of episodes");
  mc->add_option("--seed0", seed0, "First world seed; episode i uses seed0 + i");

  CLI::App* compare = app.add_subcommand(
      "compare", "Run the switching-aware, unaware, mean-based and replica-baseline "
                 "variants side by side");
  add_common(compare, true);
  compare->add_option("--runs", runs, "Episodes per variant");
  compare->add_option("--seed0", seed0, "First world seed; episode i uses seed0 + i");
  compare->add_option("--mc-k", mc_replicas,
                      "Replica counts for the Monte-Carlo baseline (default: 20 100)");

  CLI::App* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  add_common(validate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(opts, seed);
    if (mc->parsed()) return cmd_mc(opts, runs, seed0);
    if (compare->parsed()) {
      if (mc_replicas.empty()) mc_replicas = {20, 100};
      return cmd_compare(opts, runs, seed0, mc_replicas);
    }
    if (validate->parsed()) return cmd_validate(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
