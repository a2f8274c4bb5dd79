#include <atomic>
#include <filesystem>
#include <map>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "tipping/cli_io.hpp"
#include "tipping/scenario_json.hpp"
#include "tipping/transcript_io.hpp"

using namespace tipping;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = TIPPING_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "tipsim_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json base_config(const std::string& run_id, const std::string& family, const std::string& scenario,
                 json policy) {
  return {{"run_id", run_id},
          {"master_seed", 17},
          {"replications", 6},
          {"environment_family", family},
          {"scenario", (kSource / "scenarios" / scenario).string()},
          {"policy", std::move(policy)}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("shipped configs load") {
  const auto cfg = load_config(kSource / "configs/coordination_t4.json");
  REQUIRE(cfg.game);
  CHECK(cfg.game->value().n == 8);
  CHECK(cfg.game->value().t == 4);
  CHECK(cfg.effective_rounds() == 3);
  CHECK(cfg.policies.size() == 8);

  const auto taxi = load_config(kSource / "configs/role_play_taxi.json");
  REQUIRE(taxi.role_play);
  CHECK(taxi.replications == 500);
  CHECK(taxi.policies.front().prior == default_prior_experience(12.0));

  CHECK_NOTHROW(load_config(kSource / "configs/tool_use.json"));
  CHECK(load_config(kSource / "configs/sweep_appendix.json").sweep.t_values.size() == 4);
  CHECK(load_config(kSource / "configs/role_play_endpoint.example.json").policies.front().kind ==
        PolicyKind::EndpointBacked);
  CHECK(endpoint_from_json(load_json_file(kSource / "configs/endpoint.example.json")).max_concurrency == 4);
}

TEST_CASE("config validation") {
  auto doc = base_config("v", "coordination", "coordination_n8_t4.json", {{"kind", "social_proof"}});
  doc["replications"] = 0;
  try {
    config_from_json(doc, ".");
    FAIL("expected ValidationFailure");
  } catch (const ValidationFailure& e) {
    CHECK(e.code() == ErrorCode::ValidationError);
  }

  doc["replications"] = 2;
  doc["foo"] = true;
  try {
    config_from_json(doc, ".");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("\"foo\"") != std::string::npos);
  }
  doc.erase("foo");

  auto bad_policy = doc;
  bad_policy["policy"] = {{"kind", "prior_experience"}};
  CHECK(code_of([&] { config_from_json(bad_policy, "."); }) == ErrorCode::ValidationError);

  auto bad_param = doc;
  bad_param["policy"] = {{"kind", "social_proof"}, {"params", {{"p0", 0.3}, {"beta", 1}}}};
  CHECK(code_of([&] { config_from_json(bad_param, "."); }) == ErrorCode::ParseError);

  auto wrong_count = doc;
  wrong_count.erase("policy");
  wrong_count["policies"] = json::array({{{"kind", "always_deviant"}}});
  CHECK(code_of([&] { config_from_json(wrong_count, "."); }) == ErrorCode::ValidationError);

  auto bad_game = doc;
  bad_game["scenario"] = {{"n", 8}, {"t", 9}, {"rewards", {{"r_high", 1.2}, {"r_normal", 1.0}, {"r_low", 0.8}}}};
  try {
    config_from_json(bad_game, ".");
    FAIL("expected ValidationFailure");
  } catch (const ValidationFailure& e) {
    CHECK(e.has(ErrorCode::InvalidThreshold));
  }

  CHECK(code_of([] { load_config(kSource / "tests/fixtures/bad_config_unknown_field.json"); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { load_config(kSource / "no/such/config.json"); }) == ErrorCode::IoError);

  // Subcommand and family must agree.
  const auto cfg = config_from_json(doc, ".");
  CHECK(code_of([&] { run_experiment("run-single", cfg); }) == ErrorCode::ValidationError);
}

TEST_CASE("overrides") {
  auto cfg = load_config(kSource / "configs/coordination_t4.json");
  CliOverrides o;
  o.seed = 5;
  o.replications = 7;
  o.out = "/tmp/x";
  apply_overrides(cfg, o);
  CHECK(cfg.master_seed == 5);
  CHECK(cfg.replications == 7);
  CHECK(cfg.echo["master_seed"] == 5);
  CHECK(config_from_json(cfg.echo, ".").replications == 7);
  o.jobs = 0;
  CHECK_THROWS_AS(apply_overrides(cfg, o), ValidationFailure);
}

TEST_CASE("run-multi with scripted colluders") {
  const auto out = scratch("multi");
  auto doc = base_config("all_in", "coordination", "coordination_n8_t4.json", {{"kind", "always_deviant"}});
  doc["output_dir"] = out.string();
  const auto cfg = config_from_json(doc, ".");
  const auto summary = run_experiment("run-multi", cfg);
  CHECK(summary.failed == 0);
  CHECK(exit_status(summary) == 0);
  const auto run = out / "all_in";
  CHECK(fs::exists(run / "manifest.json"));
  CHECK(fs::exists(run / "transcripts" / "replication_00005.jsonl"));
  const auto rates = read_file(run / "metrics" / "rates.csv");
  CHECK(rates ==
        "run_id,environment,policy,round,numerator,denominator,rate,failed\n"
        "all_in,coordination,always_deviant,1,48,48,1,0\n"
        "all_in,coordination,always_deviant,2,48,48,1,0\n"
        "all_in,coordination,always_deviant,3,48,48,1,0\n");
  CHECK(read_file(run / "metrics" / "conditional.csv") ==
        "run_id,t,k,numerator,denominator,probability\nall_in,4,1,48,48,1\n");

  const auto manifest = load_json_file(run / "manifest.json");
  CHECK(manifest["master_seed"] == 17);
  CHECK(manifest["failed_count"] == 0);
  CHECK(manifest["seeds"].size() == 6);
  CHECK(manifest["seeds"][2] == derive_seed(17, {2}));

  // analyze reproduces the metrics byte for byte.
  analyze_run(run, out / "re");
  CHECK(tree(out / "re" / "metrics") == tree(run / "metrics"));

  // Capital identities hold in the written transcripts.
  const auto records = parse_jsonl(read_file(run / "transcripts" / "replication_00000.jsonl"), "t");
  for (const auto& rec : records) {
    if (!rec.contains("agent_id")) continue;
    CHECK(rec["capital_after"].get<double>() ==
          doctest::Approx(std::pow(1.2, rec["round"].get<int>())).epsilon(1e-12));
  }
}

TEST_CASE("role-play runs are reproducible and the CSV matches the transcripts") {
  const auto out = scratch("single");
  auto doc = base_config("taxi", "role_play", "taxi.json", {{"kind", "prior_experience"}});
  doc["replications"] = 40;
  doc["jobs"] = 3;
  doc["output_dir"] = (out / "a").string();
  const auto cfg = config_from_json(doc, ".");
  run_experiment("run-single", cfg);

  // Re-run from the manifest's echoed config into a second directory.
  auto echoed = load_json_file(out / "a" / "taxi" / "manifest.json")["config"];
  echoed["output_dir"] = (out / "b").string();
  run_experiment("run-single", config_from_json(echoed, "."));
  CHECK(tree(out / "a" / "taxi" / "transcripts") == tree(out / "b" / "taxi" / "transcripts"));
  CHECK(tree(out / "a" / "taxi" / "metrics") == tree(out / "b" / "taxi" / "metrics"));

  auto reseeded = doc;
  reseeded["master_seed"] = 18;
  reseeded["output_dir"] = (out / "c").string();
  run_experiment("run-single", config_from_json(reseeded, "."));
  CHECK(tree(out / "a" / "taxi" / "transcripts") != tree(out / "c" / "taxi" / "transcripts"));

  // Independent recount from raw JSONL.
  std::map<int, std::pair<int, int>> counts;
  for (const auto& [name, text] : tree(out / "a" / "taxi" / "transcripts")) {
    for (const auto& rec : parse_jsonl(text, name)) {
      auto& [dev, total] = counts[rec["round"].get<int>()];
      ++total;
      dev += rec["decision_role"] == "deviant";
    }
  }
  std::string expected = "run_id,environment,policy,round,numerator,denominator,rate,failed\n";
  for (const auto& [round, c] : counts) {
    expected += "taxi,role_play,prior_experience," + std::to_string(round) + "," +
                std::to_string(c.first) + "," + std::to_string(c.second) + "," +
                format_number(static_cast<double>(c.first) / c.second) + ",0\n";
  }
  CHECK(read_file(out / "a" / "taxi" / "metrics" / "rates.csv") == expected);

  analyze_run(out / "a" / "taxi", out / "re");
  CHECK(tree(out / "re" / "metrics") == tree(out / "a" / "taxi" / "metrics"));
}

TEST_CASE("tool runs and analysis") {
  const auto out = scratch("tool");
  auto doc = base_config("tools", "tool_use", "math_tools.json", {{"kind", "prior_experience"}});
  doc["output_dir"] = out.string();
  doc["rounds"] = 3;
  run_experiment("run-tool", config_from_json(doc, "."));
  const auto run = out / "tools";
  CHECK(fs::exists(run / "metrics" / "accuracy.csv"));
  analyze_run(run, out / "re");
  CHECK(tree(out / "re" / "metrics") == tree(run / "metrics"));
}

TEST_CASE("sweep writes twenty cells") {
  const auto out = scratch("sweep");
  auto doc = base_config("grid", "coordination", "coordination_n8_t4.json", {{"kind", "social_proof"}});
  doc["replications"] = 4;
  doc["output_dir"] = out.string();
  doc["sweep"] = {{"t_values", {2, 4, 6, 8}}, {"k_values", {0.25, 0.5, 1, 2, 4}}};
  doc["conditional_holdout"] = true;
  doc["jobs"] = 2;
  run_experiment("sweep", config_from_json(doc, "."));
  const auto run = out / "grid";
  int cells = 0;
  for (const auto& e : fs::directory_iterator(run / "cells")) {
    cells += e.is_directory();
    CHECK(fs::exists(e.path() / "metrics" / "rates.csv"));
  }
  CHECK(cells == 20);
  CHECK(fs::exists(run / "cells" / "t4_k0.25" / "transcripts" / "replication_00003.jsonl"));
  const auto csv = read_file(run / "metrics" / "sweep.csv");
  CHECK(csv.rfind("t,k,round,collusion_rate\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 20 * 3);
  const auto manifest = load_json_file(run / "manifest.json");
  REQUIRE(manifest["cells"].size() == 20);
  CHECK(manifest["cells"][7]["t"] == 4);
  CHECK(manifest["cells"][7]["k"] == 1.0);
  CHECK(manifest["cells"][7]["rewards"]["r_low"] == 0.8);
  analyze_run(run, out / "re");
  CHECK(tree(out / "re" / "metrics") == tree(run / "metrics"));
  CHECK(tree(out / "re" / "cells" / "t8_k4" / "metrics") == tree(run / "cells" / "t8_k4" / "metrics"));
}

TEST_CASE("failed replications are counted, not fatal") {
  std::atomic<int> calls{0};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int call = ++calls;
    // Replications 1 and 2 (calls 7..10) never produce a decision.
    const std::string content =
        call >= 7 && call <= 10 ? "no idea" : "{\"choice\": \"Route B\"}";
    res.set_content(json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto out = scratch("failures");
  auto doc = base_config("flaky", "role_play", "taxi.json", {{"kind", "endpoint_backed"}});
  doc["replications"] = 4;
  doc["output_dir"] = out.string();
  doc["endpoint"] = {{"base_url", "http://127.0.0.1:" + std::to_string(port) + "/v1"},
                     {"model_name", "mock"},
                     {"initial_backoff_ms", 1}};
  const auto summary = run_experiment("run-single", config_from_json(doc, "."));
  server.stop();
  thread.join();

  CHECK(summary.failed == 2);
  CHECK(summary.failed_replications == std::vector<int>{1, 2});
  CHECK(exit_status(summary) == 1);
  const auto manifest = load_json_file(out / "flaky" / "manifest.json");
  CHECK(manifest["failed_count"] == 2);
  const auto rates = read_file(out / "flaky" / "metrics" / "rates.csv");
  CHECK(rates.find("flaky,role_play,endpoint_backed,1,0,2,0,2\n") != std::string::npos);
  const auto failed = parse_jsonl(read_file(out / "flaky" / "transcripts" / "replication_00001.jsonl"), "f");
  REQUIRE(failed.size() == 1);
  CHECK(failed[0]["failed"] == true);
}

TEST_CASE("error summaries and CSV helpers") {
  const auto out = scratch("errors");
  write_error_summary(out, "run-multi", "broken", {{"code", "ParseError"}});
  const auto doc = load_json_file(out / "error.json");
  CHECK(doc["status"] == "error");
  CHECK(doc["details"]["code"] == "ParseError");

  ConditionalStat undefined;
  CHECK(conditional_csv_row("r", 8, 0.25, undefined) == "r,8,0.25,0,0,NA\n");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0) == "1");
}
