// tipsim: run, sweep and re-analyze behavioral tipping-point experiments.
#include <fmt/format.h>

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "tipping/cli_io.hpp"
#include "tipping/scenario_json.hpp"

namespace {

using namespace tipping;

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::optional<int> jobs;
  std::string endpoint_config;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "output root (overrides the config)");
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--replications", args.replications, "replication count (overrides the config)");
  cmd->add_option("--jobs", args.jobs, "worker threads");
  cmd->add_option("--endpoint-config", args.endpoint_config, "endpoint settings (JSON)")
      ->check(CLI::ExistingFile);
}

nlohmann::json error_details(const Error& e) {
  nlohmann::json details{{"code", std::string(to_string(e.code()))}};
  if (const auto* v = dynamic_cast<const ValidationFailure*>(&e)) {
    details["issues"] = nlohmann::json::array();
    for (const auto& issue : v->issues()) {
      details["issues"].push_back(
          {{"code", std::string(to_string(issue.code))}, {"message", issue.message}});
    }
  }
  return details;
}

int run_command(const std::string& subcommand, const RunArgs& args) {
  std::filesystem::path error_dir = args.out.empty() ? "out" : args.out;
  try {
    auto config = load_config(args.config);
    CliOverrides overrides;
    if (!args.out.empty()) overrides.out = args.out;
    overrides.seed = args.seed;
    overrides.replications = args.replications;
    overrides.jobs = args.jobs;
    if (!args.endpoint_config.empty()) overrides.endpoint_config = args.endpoint_config;
    apply_overrides(config, overrides);
    error_dir = config.output_dir / config.run_id;

    const auto summary = run_experiment(subcommand, config);
    fmt::print("{}: {} replications, {} failed, {:.2f}s -> {}\n", config.run_id,
               summary.replications, summary.failed, summary.wall_clock_seconds,
               summary.run_dir.string());
    return exit_status(summary);
  } catch (const Error& e) {
    fmt::print(stderr, "tipsim {}: {}: {}\n", subcommand, to_string(e.code()), e.what());
    try {
      write_error_summary(error_dir, subcommand, e.what(), error_details(e));
    } catch (const std::exception&) {
    }
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "tipsim {}: {}\n", subcommand, e.what());
    try {
      write_error_summary(error_dir, subcommand, e.what());
    } catch (const std::exception&) {
    }
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavioral tipping-point simulations for agent populations"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  RunArgs single, tool, multi, sweep;
  add_run_options(app.add_subcommand("run-single", "role-play compliance evolution"), single);
  add_run_options(app.add_subcommand("run-tool", "tool-use protocol"), tool);
  add_run_options(app.add_subcommand("run-multi", "n-agent coordination game"), multi);
  add_run_options(app.add_subcommand("sweep", "coordination game over a (t, k) grid"), sweep);

  std::string run_dir, analyze_out;
  auto* analyze = app.add_subcommand("analyze", "recompute metrics from a run directory");
  analyze->add_option("run_dir", run_dir, "directory holding manifest.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  analyze->add_option("--out", analyze_out, "write metrics here instead of <run_dir>");

  CLI11_PARSE(app, argc, argv);

  if (analyze->parsed()) {
    try {
      std::optional<std::filesystem::path> out;
      if (!analyze_out.empty()) out = analyze_out;
      analyze_run(run_dir, out);
      fmt::print("metrics written to {}\n", (out.value_or(run_dir) / "metrics").string());
      return 0;
    } catch (const std::exception& e) {
      fmt::print(stderr, "tipsim analyze: {}\n", e.what());
      return 2;
    }
  }
  for (auto* cmd : app.get_subcommands()) {
    const std::string name = cmd->get_name();
    if (name == "run-single") return run_command(name, single);
    if (name == "run-tool") return run_command(name, tool);
    if (name == "run-multi") return run_command(name, multi);
    if (name == "sweep") return run_command(name, sweep);
  }
  return 2;
}
