#include "tipping/cli_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "json_reader.hpp"
#include "tipping/engine_multi.hpp"
#include "tipping/engine_single.hpp"
#include "tipping/scenario_json.hpp"
#include "tipping/transcript_io.hpp"

namespace tipping {

namespace fs = std::filesystem;
using detail::StrictReader;
using nlohmann::json;
using nlohmann::ordered_json;

int RunConfig::effective_rounds() const {
  if (rounds) return *rounds;
  switch (family) {
    case EnvironmentFamily::RolePlay: return kDefaultRolePlayRounds;
    case EnvironmentFamily::ToolUse: return kDefaultToolRounds;
    case EnvironmentFamily::Coordination: return game ? game->value().r_max : 3;
  }
  return 1;
}

std::string format_number(double value) { return fmt::format("{}", value); }

// ---- config ----

namespace {

void add(std::vector<Issue>& issues, std::string message) {
  issues.push_back({ErrorCode::ValidationError, std::move(message)});
}

double tool_aligned_value(const ToolTaskModel& m) {
  return m.q_tool_complex * m.reward_correct - m.cost_tool;
}

PolicySpec policy_from_json(const json& doc, const std::string& where, double aligned_value) {
  StrictReader in(doc, where);
  PolicySpec spec;
  spec.kind = policy_kind_from_string(in.get<std::string>("kind"));
  spec.prior = default_prior_experience(aligned_value);
  if (in.has("params")) {
    StrictReader p(in.raw("params"), where + ".params");
    switch (spec.kind) {
      case PolicyKind::PriorExperience: {
        spec.prior.kappa = p.get_or<double>("kappa", spec.prior.kappa);
        spec.prior.q0_aligned = p.get_or<double>("q0_aligned", spec.prior.q0_aligned);
        spec.prior.q0_deviant =
            p.get_or<double>("q0_deviant", spec.prior.q0_aligned - kDefaultDeviantPriorGap);
        spec.prior.tau = p.get_or<double>("tau", spec.prior.tau);
        break;
      }
      case PolicyKind::SocialProof: {
        spec.social.p0 = p.get_or<double>("p0", spec.social.p0);
        spec.social.alpha = p.get_or<double>("alpha", spec.social.alpha);
        spec.social.tau = p.get_or<double>("tau", spec.social.tau);
        spec.social.epsilon = p.get_or<double>("epsilon", spec.social.epsilon);
        spec.social.stochastic_init = p.get_or<bool>("stochastic_init", spec.social.stochastic_init);
        break;
      }
      default:
        break;  // parameterless kinds: any key is unknown
    }
    p.finish();
  }
  in.finish();
  return spec;
}

bool valid_run_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace

EndpointConfig endpoint_from_json(const json& doc) {
  StrictReader in(doc, "endpoint");
  EndpointConfig cfg;
  cfg.base_url = in.get<std::string>("base_url");
  cfg.model_name = in.get<std::string>("model_name");
  cfg.auth_env_var = in.get_or<std::string>("auth_env_var", "");
  cfg.temperature = in.get_or<double>("temperature", cfg.temperature);
  cfg.max_tokens = in.get_or<int>("max_tokens", cfg.max_tokens);
  cfg.timeout_ms = in.get_or<int>("timeout_ms", cfg.timeout_ms);
  cfg.retry_budget = in.get_or<int>("retry_budget", cfg.retry_budget);
  cfg.max_concurrency = in.get_or<int>("max_concurrency", cfg.max_concurrency);
  cfg.initial_backoff_ms = in.get_or<int>("initial_backoff_ms", cfg.initial_backoff_ms);
  in.finish();
  auto issues = check(cfg);
  if (!issues.empty()) throw ValidationFailure(std::move(issues), ErrorCode::ValidationError);
  return cfg;
}

json to_json(const EndpointConfig& cfg) {
  return json{{"base_url", cfg.base_url},
              {"model_name", cfg.model_name},
              {"auth_env_var", cfg.auth_env_var},
              {"temperature", cfg.temperature},
              {"max_tokens", cfg.max_tokens},
              {"timeout_ms", cfg.timeout_ms},
              {"retry_budget", cfg.retry_budget},
              {"max_concurrency", cfg.max_concurrency},
              {"initial_backoff_ms", cfg.initial_backoff_ms}};
}

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
  StrictReader in(doc, "config");
  RunConfig cfg;
  std::vector<Issue> issues;

  cfg.run_id = in.get<std::string>("run_id");
  if (!valid_run_id(cfg.run_id)) {
    add(issues, fmt::format("run_id \"{}\" must be non-empty [A-Za-z0-9_.-]", cfg.run_id));
  }
  {
    const auto& seed = in.raw("master_seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
      throw Error(ErrorCode::ParseError, "config: field \"master_seed\" must be an unsigned integer");
    }
    cfg.master_seed = seed.get<Seed>();
  }
  cfg.replications = in.get<int>("replications");
  if (cfg.replications < 1) add(issues, fmt::format("replications = {} must be >= 1", cfg.replications));
  cfg.family = family_from_string(in.get<std::string>("environment_family"));

  // Scenario: a path relative to the config file, or an inline document.
  const auto& scenario_field = in.raw("scenario");
  json scenario_doc;
  if (scenario_field.is_string()) {
    cfg.scenario_path = base_dir / scenario_field.get<std::string>();
    scenario_doc = load_json_file(cfg.scenario_path);
  } else if (scenario_field.is_object()) {
    scenario_doc = scenario_field;
  } else {
    throw Error(ErrorCode::ParseError, "config: field \"scenario\" must be a path or an object");
  }

  double aligned_value = 0.0;
  int agents = 1;
  json scenario_echo;
  try {
    switch (cfg.family) {
      case EnvironmentFamily::RolePlay:
        cfg.role_play = validate_scenario(role_play_from_json(scenario_doc));
        aligned_value = cfg.role_play->value().aligned_reward;
        scenario_echo = to_json(cfg.role_play->value());
        break;
      case EnvironmentFamily::ToolUse:
        cfg.tool = validate_scenario(tool_model_from_json(scenario_doc));
        aligned_value = tool_aligned_value(cfg.tool->value());
        scenario_echo = to_json(cfg.tool->value());
        break;
      case EnvironmentFamily::Coordination:
        cfg.game = validate_scenario(coordination_from_json(scenario_doc));
        agents = cfg.game->value().n;
        scenario_echo = to_json(cfg.game->value());
        break;
    }
  } catch (const ValidationFailure& e) {
    for (const auto& issue : e.issues()) issues.push_back(issue);
  }

  // Policies: "policy" (solo, or broadcast to all n agents) or "policies".
  const bool has_one = in.has("policy");
  const bool has_many = in.has("policies");
  if (has_one == has_many) {
    throw Error(ErrorCode::ParseError, "config: exactly one of \"policy\" or \"policies\" is required");
  }
  if (has_one) {
    const auto spec = policy_from_json(in.raw("policy"), "config.policy", aligned_value);
    cfg.policies.assign(static_cast<std::size_t>(std::max(agents, 1)), spec);
  } else {
    const auto& list = in.raw("policies");
    if (!list.is_array()) throw Error(ErrorCode::ParseError, "config: \"policies\" must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.policies.push_back(
          policy_from_json(list[i], fmt::format("config.policies[{}]", i), aligned_value));
    }
    if (static_cast<int>(cfg.policies.size()) != agents) {
      add(issues, fmt::format("{} policies assigned for {} agents", cfg.policies.size(), agents));
    }
  }
  for (const auto& spec : cfg.policies) {
    const bool multi = cfg.family == EnvironmentFamily::Coordination;
    if (spec.kind == PolicyKind::PriorExperience && multi) {
      add(issues, "prior_experience policies cannot play the coordination game");
    }
    if (spec.kind == PolicyKind::SocialProof && !multi) {
      add(issues, "social_proof policies only play the coordination game");
    }
    auto p = spec.kind == PolicyKind::PriorExperience ? check(spec.prior)
             : spec.kind == PolicyKind::SocialProof   ? check(spec.social)
                                                      : std::vector<Issue>{};
    issues.insert(issues.end(), p.begin(), p.end());
  }

  if (in.has("rounds")) {
    cfg.rounds = in.get<int>("rounds");
    if (*cfg.rounds < 1) add(issues, fmt::format("rounds = {} must be >= 1", *cfg.rounds));
  }
  cfg.output_dir = in.get_or<std::string>("output_dir", "out");
  if (in.has("endpoint")) cfg.endpoint = endpoint_from_json(in.raw("endpoint"));
  if (in.has("sweep")) {
    StrictReader sw(in.raw("sweep"), "config.sweep");
    cfg.sweep.t_values = sw.get_or<std::vector<int>>("t_values", cfg.sweep.t_values);
    cfg.sweep.k_values = sw.get_or<std::vector<double>>("k_values", cfg.sweep.k_values);
    sw.finish();
    if (cfg.sweep.t_values.empty() || cfg.sweep.k_values.empty()) {
      add(issues, "sweep grids must be non-empty");
    }
    for (double k : cfg.sweep.k_values) {
      if (!(k > 0.0)) add(issues, fmt::format("sweep k = {} must be positive", k));
    }
    if (cfg.game) {
      for (int t : cfg.sweep.t_values) {
        if (t < 1 || t > cfg.game->value().n) {
          add(issues, fmt::format("sweep t = {} outside [1, n]", t));
        }
      }
    }
  }
  cfg.conditional_holdout = in.get_or<bool>("conditional_holdout", false);
  cfg.jobs = in.get_or<int>("jobs", 1);
  if (cfg.jobs < 1) add(issues, "jobs must be >= 1");
  in.finish();

  if (!issues.empty()) throw ValidationFailure(std::move(issues), ErrorCode::ValidationError);

  json echo;
  echo["run_id"] = cfg.run_id;
  echo["master_seed"] = cfg.master_seed;
  echo["replications"] = cfg.replications;
  echo["environment_family"] = std::string(to_string(cfg.family));
  echo["scenario"] = scenario_echo;
  echo["policies"] = json::array();
  for (const auto& spec : cfg.policies) echo["policies"].push_back(to_json(spec));
  if (cfg.rounds) echo["rounds"] = *cfg.rounds;
  echo["output_dir"] = cfg.output_dir.string();
  if (cfg.endpoint) echo["endpoint"] = to_json(*cfg.endpoint);
  echo["sweep"] = {{"t_values", cfg.sweep.t_values}, {"k_values", cfg.sweep.k_values}};
  echo["conditional_holdout"] = cfg.conditional_holdout;
  echo["jobs"] = cfg.jobs;
  cfg.echo = std::move(echo);
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  const auto doc = load_json_file(path);
  return config_from_json(doc, path.parent_path());
}

void apply_overrides(RunConfig& config, const CliOverrides& o) {
  if (o.out) {
    config.output_dir = *o.out;
    config.echo["output_dir"] = o.out->string();
  }
  if (o.seed) {
    config.master_seed = *o.seed;
    config.echo["master_seed"] = *o.seed;
  }
  if (o.replications) {
    if (*o.replications < 1) {
      throw ValidationFailure({{ErrorCode::ValidationError, "--replications must be >= 1"}},
                              ErrorCode::ValidationError);
    }
    config.replications = *o.replications;
    config.echo["replications"] = *o.replications;
  }
  if (o.jobs) {
    if (*o.jobs < 1) {
      throw ValidationFailure({{ErrorCode::ValidationError, "--jobs must be >= 1"}},
                              ErrorCode::ValidationError);
    }
    config.jobs = *o.jobs;
    config.echo["jobs"] = *o.jobs;
  }
  if (o.endpoint_config) {
    config.endpoint = endpoint_from_json(load_json_file(*o.endpoint_config));
    config.echo["endpoint"] = to_json(*config.endpoint);
  }
}

std::string policy_label(const std::vector<PolicySpec>& policies) {
  if (policies.empty()) return "none";
  const auto kind = policies.front().kind;
  const bool same = std::all_of(policies.begin(), policies.end(),
                                [kind](const PolicySpec& p) { return p.kind == kind; });
  return same ? std::string(to_string(kind)) : "mixed";
}

// ---- CSV ----

std::string rates_csv(const std::string& run_id, std::string_view environment,
                      const std::string& policy, const RateSeries& series, long failed) {
  std::string out = "run_id,environment,policy,round,numerator,denominator,rate,failed\n";
  for (const auto& e : series) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", run_id, environment, policy, e.round,
                       e.numerator, e.denominator, format_number(e.rate), failed);
  }
  return out;
}

std::string conditional_csv_header() { return "run_id,t,k,numerator,denominator,probability\n"; }

std::string conditional_csv_row(const std::string& run_id, int t, double k,
                                const ConditionalStat& stat) {
  return fmt::format("{},{},{},{},{},{}\n", run_id, t, format_number(k), stat.numerator,
                     stat.denominator, stat.probability ? format_number(*stat.probability) : "NA");
}

std::string sweep_csv(const SweepGrid& grid) {
  std::string out = "t,k,round,collusion_rate\n";
  for (const auto& cell : grid.cells) {
    for (const auto& e : cell.collusion) {
      out += fmt::format("{},{},{},{}\n", cell.t, format_number(cell.k), e.round,
                         format_number(e.rate));
    }
  }
  return out;
}

int exit_status(const RunSummary& summary) { return summary.failed == 0 ? 0 : 1; }

void write_error_summary(const fs::path& dir, std::string_view subcommand,
                         const std::string& message, const json& details) {
  ordered_json doc;
  doc["status"] = "error";
  doc["subcommand"] = std::string(subcommand);
  doc["message"] = message;
  if (!details.is_null()) doc["details"] = details;
  write_file_atomic(dir / "error.json", doc.dump(2) + "\n");
}

// ---- running ----

namespace {

// Everything the metric writers need; recoverable from a manifest.
struct RunMeta {
  std::string run_id;
  EnvironmentFamily family = EnvironmentFamily::RolePlay;
  std::string policy;
  int rounds = 1;
  bool conditional_holdout = false;
  std::optional<CoordinationGameSpec> game;
};

template <class T>
bool any_completed(const std::vector<T>& transcripts) {
  return std::any_of(transcripts.begin(), transcripts.end(),
                     [](const T& t) { return !t.failed(); });
}

void write_role_play_metrics(const fs::path& dir, const RunMeta& meta,
                             const std::vector<Transcript>& transcripts) {
  RateSeries series;
  if (any_completed(transcripts)) series = violation_rates(transcripts, meta.rounds);
  write_file_atomic(dir / "rates.csv", rates_csv(meta.run_id, to_string(meta.family), meta.policy,
                                                 series, failed_count(transcripts)));
}

void write_tool_metrics(const fs::path& dir, const RunMeta& meta,
                        const std::vector<ToolTranscript>& transcripts) {
  RateSeries usage, accuracy;
  if (any_completed(transcripts)) {
    for (const auto& m : tool_metrics(transcripts)) {
      usage.push_back({m.round, m.tool_count, m.complex_count, m.tool_usage_rate});
      accuracy.push_back({m.round, m.correct_count, m.complex_count, m.complex_accuracy});
    }
  }
  const long failed = failed_count(transcripts);
  write_file_atomic(dir / "rates.csv",
                    rates_csv(meta.run_id, to_string(meta.family), meta.policy, usage, failed));
  write_file_atomic(dir / "accuracy.csv",
                    rates_csv(meta.run_id, to_string(meta.family), meta.policy, accuracy, failed));
}

void write_multi_metrics(const fs::path& dir, const RunMeta& meta,
                         const std::vector<MultiTranscript>& transcripts) {
  RateSeries series;
  if (any_completed(transcripts)) series = collusion_rates(transcripts, meta.rounds);
  write_file_atomic(dir / "rates.csv", rates_csv(meta.run_id, to_string(meta.family), meta.policy,
                                                 series, failed_count(transcripts)));
  const int t = meta.game->t;
  const double k = incentive_ratio(meta.game->rewards);
  write_file_atomic(dir / "conditional.csv",
                    conditional_csv_header() +
                        conditional_csv_row(meta.run_id, t, k, conditional_recollusion(transcripts)));
  if (meta.conditional_holdout) {
    write_file_atomic(
        dir / "conditional_holdout.csv",
        conditional_csv_header() +
            conditional_csv_row(meta.run_id, t, k, conditional_recollusion(transcripts, true)));
  }
}

std::string cell_dir_name(int t, double k) { return fmt::format("t{}_k{}", t, format_number(k)); }

void write_sweep_summary(const fs::path& dir, const std::string& run_id, const SweepGrid& grid,
                         bool holdout) {
  write_file_atomic(dir / "sweep.csv", sweep_csv(grid));
  std::string conditional = conditional_csv_header();
  std::string holdouts = conditional_csv_header();
  for (const auto& cell : grid.cells) {
    conditional += conditional_csv_row(run_id, cell.t, cell.k, cell.conditional);
    holdouts += conditional_csv_row(run_id, cell.t, cell.k, cell.conditional_holdout);
  }
  write_file_atomic(dir / "conditional.csv", conditional);
  if (holdout) write_file_atomic(dir / "conditional_holdout.csv", holdouts);
}

template <class T>
void write_transcripts(const fs::path& dir, const std::vector<T>& transcripts) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    write_file_atomic(dir / transcript_file_name(static_cast<int>(i)),
                      to_jsonl(transcripts[i], static_cast<int>(i)));
  }
}

template <class T>
void record_failures(RunSummary& summary, const std::vector<T>& transcripts, int offset = 0) {
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    ++summary.replications;
    if (transcripts[i].failed()) {
      ++summary.failed;
      summary.failed_replications.push_back(offset + static_cast<int>(i));
    }
  }
}

RunMeta meta_of(const RunConfig& config) {
  RunMeta meta;
  meta.run_id = config.run_id;
  meta.family = config.family;
  meta.policy = policy_label(config.policies);
  meta.rounds = config.effective_rounds();
  meta.conditional_holdout = config.conditional_holdout;
  if (config.game) meta.game = config.game->value();
  return meta;
}

EnvironmentFamily family_for(std::string_view subcommand) {
  if (subcommand == "run-single") return EnvironmentFamily::RolePlay;
  if (subcommand == "run-tool") return EnvironmentFamily::ToolUse;
  if (subcommand == "run-multi" || subcommand == "sweep") return EnvironmentFamily::Coordination;
  throw Error(ErrorCode::ValidationError, fmt::format("unknown subcommand \"{}\"", subcommand));
}

}  // namespace

void write_manifest(const RunConfig& config, std::string_view subcommand,
                    const RunSummary& summary, const json& extra) {
  ordered_json m;
  m["run_id"] = config.run_id;
  m["subcommand"] = std::string(subcommand);
  m["environment_family"] = std::string(to_string(config.family));
  m["policy"] = policy_label(config.policies);
  m["rounds"] = config.effective_rounds();
  m["master_seed"] = config.master_seed;
  m["replications"] = config.replications;
  m["seeds"] = summary.seeds;
  m["failed_count"] = summary.failed;
  m["failed_replications"] = summary.failed_replications;
  m["wall_clock_seconds"] = summary.wall_clock_seconds;
  m["config_hash"] = fnv1a_hex(config.echo.dump());
  m["config"] = config.echo;
  m["versions"] = {{"tipsim", std::string(kToolVersion)},
                   {"compiler", __VERSION__},
                   {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                 NLOHMANN_JSON_VERSION_MINOR,
                                                 NLOHMANN_JSON_VERSION_PATCH)},
                   {"fmt", FMT_VERSION}};
  if (config.game) {
    m["n"] = config.game->value().n;
    m["t"] = config.game->value().t;
    m["k"] = incentive_ratio(config.game->value().rewards);
  }
  for (const auto& [key, value] : extra.items()) m[key] = value;
  write_file_atomic(summary.run_dir / "manifest.json", m.dump(2) + "\n");
}

RunSummary run_experiment(std::string_view subcommand, const RunConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  if (family_for(subcommand) != config.family) {
    throw Error(ErrorCode::ValidationError,
                fmt::format("{} cannot run a {} configuration", subcommand, to_string(config.family)));
  }
  const bool needs_endpoint =
      std::any_of(config.policies.begin(), config.policies.end(),
                  [](const PolicySpec& p) { return p.kind == PolicyKind::EndpointBacked; });
  if (needs_endpoint && !config.endpoint) {
    throw Error(ErrorCode::ValidationError,
                "endpoint_backed policies need an endpoint (config \"endpoint\" or --endpoint-config)");
  }
  std::shared_ptr<ChatClient> client =
      needs_endpoint ? std::make_shared<ChatClient>(*config.endpoint) : nullptr;

  RunSummary summary;
  summary.run_dir = config.output_dir / config.run_id;
  fs::create_directories(summary.run_dir);
  const auto meta = meta_of(config);
  const int reps = config.replications;
  const int rounds = config.effective_rounds();
  const auto transcripts_dir = summary.run_dir / "transcripts";
  const auto metrics_dir = summary.run_dir / "metrics";
  json extra;

  if (subcommand == "sweep") {
    SweepRequest request;
    request.t_values = config.sweep.t_values;
    request.k_values = config.sweep.k_values;
    request.base = config.game->value();
    if (config.rounds) request.base.r_max = *config.rounds;
    request.policies = config.policies;
    request.replications = reps;
    request.master_seed = config.master_seed;
    request.jobs = config.jobs;
    request.client = client;
    const auto grid = run_sweep(request);

    extra["cells"] = json::array();
    for (std::size_t c = 0; c < grid.cells.size(); ++c) {
      const auto& cell = grid.cells[c];
      const auto dir = summary.run_dir / "cells" / cell_dir_name(cell.t, cell.k);
      write_transcripts(dir / "transcripts", cell.transcripts);
      RunMeta cell_meta = meta;
      cell_meta.game = cell.transcripts.front().game;
      write_multi_metrics(dir / "metrics", cell_meta, cell.transcripts);
      record_failures(summary, cell.transcripts, static_cast<int>(c) * reps);
      summary.seeds.insert(summary.seeds.end(), cell.seeds.begin(), cell.seeds.end());
      extra["cells"].push_back({{"t", cell.t},
                                {"k", cell.k},
                                {"rewards", to_json(cell.rewards)},
                                {"dir", fs::path("cells") / cell_dir_name(cell.t, cell.k)},
                                {"failed", cell.failed}});
    }
    write_sweep_summary(metrics_dir, config.run_id, grid, config.conditional_holdout);
  } else {
    for (int i = 0; i < reps; ++i) {
      summary.seeds.push_back(derive_seed(config.master_seed, {static_cast<std::uint64_t>(i)}));
    }
    if (config.family == EnvironmentFamily::RolePlay) {
      std::vector<Transcript> transcripts(reps);
      parallel_for(reps, config.jobs, [&](int i) {
        auto policy = make_policy(config.policies.front(), client);
        transcripts[i] = run_single_evolution(*config.role_play, *policy, rounds, summary.seeds[i]);
      });
      write_transcripts(transcripts_dir, transcripts);
      write_role_play_metrics(metrics_dir, meta, transcripts);
      record_failures(summary, transcripts);
    } else if (config.family == EnvironmentFamily::ToolUse) {
      std::vector<ToolTranscript> transcripts(reps);
      parallel_for(reps, config.jobs, [&](int i) {
        auto policy = make_policy(config.policies.front(), client);
        transcripts[i] = run_tool_protocol(*config.tool, *policy, rounds, summary.seeds[i]);
      });
      write_transcripts(transcripts_dir, transcripts);
      write_tool_metrics(metrics_dir, meta, transcripts);
      record_failures(summary, transcripts);
    } else {
      auto game = config.game->value();
      if (config.rounds) game.r_max = *config.rounds;
      const auto validated = validate_scenario(game);
      std::vector<MultiTranscript> transcripts(reps);
      parallel_for(reps, config.jobs, [&](int i) {
        std::vector<std::unique_ptr<Policy>> agents;
        for (const auto& spec : config.policies) agents.push_back(make_policy(spec, client));
        MultiRunOptions options;
        options.parallel_agents = needs_endpoint;
        transcripts[i] = run_multi_evolution(validated, agents, summary.seeds[i], options);
      });
      write_transcripts(transcripts_dir, transcripts);
      write_multi_metrics(metrics_dir, meta, transcripts);
      record_failures(summary, transcripts);
    }
  }

  summary.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_manifest(config, subcommand, summary, extra);
  return summary;
}

// ---- analyze ----

namespace {

std::vector<std::vector<json>> read_transcript_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::IoError, fmt::format("no transcript directory at {}", dir.string()));
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::vector<json>> out;
  for (const auto& f : files) out.push_back(parse_jsonl(read_file(f), f.string()));
  return out;
}

std::vector<MultiTranscript> read_multi_dir(const fs::path& dir, const CoordinationGameSpec& game) {
  std::vector<MultiTranscript> out;
  for (const auto& records : read_transcript_dir(dir)) out.push_back(multi_from_records(records, game));
  return out;
}

}  // namespace

void analyze_run(const fs::path& run_dir, const std::optional<fs::path>& out) {
  const auto manifest = load_json_file(run_dir / "manifest.json");
  const fs::path target = out.value_or(run_dir);
  const auto config = config_from_json(manifest.at("config"), run_dir);

  RunMeta meta = meta_of(config);
  meta.rounds = manifest.at("rounds").get<int>();
  const std::string subcommand = manifest.at("subcommand").get<std::string>();

  if (subcommand == "sweep") {
    SweepGrid grid;
    for (const auto& cell_doc : manifest.at("cells")) {
      SweepCell cell;
      cell.t = cell_doc.at("t").get<int>();
      cell.k = cell_doc.at("k").get<double>();
      cell.rewards = rewards_from_json(cell_doc.at("rewards"));
      CoordinationGameSpec game = config.game->value();
      game.t = cell.t;
      game.rewards = cell.rewards;
      game.r_max = meta.rounds;
      const fs::path rel = cell_doc.at("dir").get<std::string>();
      cell.transcripts = read_multi_dir(run_dir / rel / "transcripts", game);
      cell.failed = failed_count(cell.transcripts);
      if (any_completed(cell.transcripts)) cell.collusion = collusion_rates(cell.transcripts, meta.rounds);
      cell.conditional = conditional_recollusion(cell.transcripts);
      cell.conditional_holdout = conditional_recollusion(cell.transcripts, true);
      RunMeta cell_meta = meta;
      cell_meta.game = game;
      write_multi_metrics(target / rel / "metrics", cell_meta, cell.transcripts);
      grid.cells.push_back(std::move(cell));
    }
    write_sweep_summary(target / "metrics", meta.run_id, grid, meta.conditional_holdout);
    return;
  }

  const auto transcripts_dir = run_dir / "transcripts";
  const auto metrics_dir = target / "metrics";
  switch (meta.family) {
    case EnvironmentFamily::RolePlay: {
      std::vector<Transcript> transcripts;
      for (const auto& records : read_transcript_dir(transcripts_dir)) {
        transcripts.push_back(role_play_from_records(records));
      }
      write_role_play_metrics(metrics_dir, meta, transcripts);
      break;
    }
    case EnvironmentFamily::ToolUse: {
      std::vector<ToolTranscript> transcripts;
      for (const auto& records : read_transcript_dir(transcripts_dir)) {
        transcripts.push_back(tool_from_records(records));
      }
      write_tool_metrics(metrics_dir, meta, transcripts);
      break;
    }
    case EnvironmentFamily::Coordination: {
      CoordinationGameSpec game = config.game->value();
      game.r_max = meta.rounds;
      meta.game = game;
      write_multi_metrics(metrics_dir, meta, read_multi_dir(transcripts_dir, game));
      break;
    }
  }
}

}  // namespace tipping
