#ifndef TIPPING_CLI_IO_HPP
#define TIPPING_CLI_IO_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tipping/llm_adapter.hpp"
#include "tipping/metrics.hpp"
#include "tipping/policy.hpp"
#include "tipping/rng.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct SweepSettings {
  std::vector<int> t_values{2, 4, 6, 8};
  std::vector<double> k_values{0.25, 0.5, 1.0, 2.0, 4.0};
};

struct RunConfig {
  std::string run_id;
  Seed master_seed = 0;
  int replications = 1;
  EnvironmentFamily family = EnvironmentFamily::RolePlay;
  std::filesystem::path scenario_path;
  std::optional<Validated<RolePlayScenario>> role_play;
  std::optional<Validated<ToolTaskModel>> tool;
  std::optional<Validated<CoordinationGameSpec>> game;
  // One entry for solo runs, n entries for the coordination game.
  std::vector<PolicySpec> policies;
  std::optional<int> rounds;
  std::filesystem::path output_dir = "out";
  std::optional<EndpointConfig> endpoint;
  SweepSettings sweep;
  bool conditional_holdout = false;
  int jobs = 1;
  // Resolved config document; loading it again reproduces this RunConfig.
  nlohmann::json echo;

  int effective_rounds() const;
};

// Throws ParseError (syntax, unknown or mistyped fields) or ValidationFailure.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

struct CliOverrides {
  std::optional<std::filesystem::path> out;
  std::optional<Seed> seed;
  std::optional<int> replications;
  std::optional<int> jobs;
  std::optional<std::filesystem::path> endpoint_config;
};

void apply_overrides(RunConfig& config, const CliOverrides& overrides);

EndpointConfig endpoint_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EndpointConfig& cfg);

struct RunSummary {
  std::filesystem::path run_dir;
  long replications = 0;
  long failed = 0;
  std::vector<int> failed_replications;
  std::vector<Seed> seeds;
  double wall_clock_seconds = 0.0;
};

// run-single | run-tool | run-multi | sweep. Writes
// <out>/<run_id>/{manifest.json, transcripts/*.jsonl, metrics/*.csv}.
RunSummary run_experiment(std::string_view subcommand, const RunConfig& config);

void write_manifest(const RunConfig& config, std::string_view subcommand,
                    const RunSummary& summary, const nlohmann::json& extra = {});

// Rebuilds metrics/*.csv for a run directory from its manifest and transcripts.
// Writes into <out>/metrics, defaulting to <run_dir>/metrics.
void analyze_run(const std::filesystem::path& run_dir,
                 const std::optional<std::filesystem::path>& out = std::nullopt);

// CSV renderers shared by live runs and analyze.
std::string rates_csv(const std::string& run_id, std::string_view environment,
                      const std::string& policy, const RateSeries& series, long failed);
std::string conditional_csv_header();
std::string conditional_csv_row(const std::string& run_id, int t, double k,
                                const ConditionalStat& stat);
std::string sweep_csv(const SweepGrid& grid);

std::string policy_label(const std::vector<PolicySpec>& policies);
std::string format_number(double value);

// Used as the exit-status contract of the CLI: 0 only if nothing failed.
int exit_status(const RunSummary& summary);

// Machine-readable error summary at <dir>/error.json.
void write_error_summary(const std::filesystem::path& dir, std::string_view subcommand,
                         const std::string& message, const nlohmann::json& details = {});

}  // namespace tipping

#endif
