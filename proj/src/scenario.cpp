#include "tipping/scenario.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_reader.hpp"
#include "tipping/scenario_json.hpp"

namespace tipping {

std::string_view to_string(Role role) { return role == Role::Aligned ? "aligned" : "deviant"; }

Role role_from_string(std::string_view text) {
  if (text == "aligned") return Role::Aligned;
  if (text == "deviant") return Role::Deviant;
  throw Error(ErrorCode::ParseError, fmt::format("unknown role \"{}\"", text));
}

std::string_view to_string(EnvironmentFamily family) {
  switch (family) {
    case EnvironmentFamily::RolePlay: return "role_play";
    case EnvironmentFamily::ToolUse: return "tool_use";
    case EnvironmentFamily::Coordination: return "coordination";
  }
  return "unknown";
}

EnvironmentFamily family_from_string(std::string_view text) {
  if (text == "role_play") return EnvironmentFamily::RolePlay;
  if (text == "tool_use") return EnvironmentFamily::ToolUse;
  if (text == "coordination") return EnvironmentFamily::Coordination;
  throw Error(ErrorCode::ParseError, fmt::format("unknown environment_family \"{}\"", text));
}

Role LabelMap::role_of(std::string_view label) const {
  if (label == aligned) return Role::Aligned;
  if (label == deviant) return Role::Deviant;
  throw Error(ErrorCode::UnknownLabel, fmt::format("label \"{}\" is not one of \"{}\", \"{}\"",
                                                   label, aligned, deviant));
}

LabelMap labels_of(const RolePlayScenario& scenario) {
  return {scenario.aligned_label, scenario.deviant_label};
}

LabelMap labels_of(const CoordinationGameSpec&) {
  return {std::string(CoordinationGameSpec::kKeep), std::string(CoordinationGameSpec::kCollude)};
}

LabelMap labels_of(const ToolTaskModel&) {
  return {std::string(ToolTaskModel::kTool), std::string(ToolTaskModel::kDirect)};
}

Decision make_decision(const LabelMap& labels, Role role) {
  return {role, labels.label_of(role)};
}

void History::append(HistoryEntry entry) {
  if (entry.round != static_cast<int>(entries_.size()) + 1) {
    throw Error(ErrorCode::HistoryLengthMismatch,
                fmt::format("history entry for round {} appended after {} entries", entry.round,
                            entries_.size()));
  }
  entries_.push_back(std::move(entry));
}

void GlobalHistory::append(RoundRecord record) {
  if (record.round != static_cast<int>(rounds_.size()) + 1) {
    throw Error(ErrorCode::HistoryLengthMismatch,
                fmt::format("round record {} appended after {} rounds", record.round,
                            rounds_.size()));
  }
  rounds_.push_back(std::move(record));
}

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

void require_probability(std::vector<Issue>& issues, const char* name, double p) {
  if (!is_probability(p)) {
    issues.push_back({ErrorCode::InvalidProbability,
                      fmt::format("{} = {} is outside [0, 1]", name, p)});
  }
}

void require_finite(std::vector<Issue>& issues, const char* name, double v) {
  if (!std::isfinite(v)) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("{} is not finite", name)});
  }
}

[[noreturn]] void fail(std::vector<Issue> issues) { throw ValidationFailure(std::move(issues)); }

}  // namespace

std::vector<Issue> check(const RewardTuple& r) {
  std::vector<Issue> issues;
  if (!std::isfinite(r.r_high) || !std::isfinite(r.r_normal) || !std::isfinite(r.r_low)) {
    issues.push_back({ErrorCode::InvalidRewardOrder, "reward factors must be finite"});
    return issues;
  }
  if (!(r.r_low < r.r_normal && r.r_normal < r.r_high)) {
    issues.push_back({ErrorCode::InvalidRewardOrder,
                      fmt::format("need r_low < r_normal < r_high, got ({}, {}, {})", r.r_high,
                                  r.r_normal, r.r_low)});
  }
  if (r.r_low <= 0.0) {
    issues.push_back({ErrorCode::InvalidRewardOrder,
                      fmt::format("multiplicative factors must be positive, r_low = {}", r.r_low)});
  }
  return issues;
}

std::vector<Issue> check(const RolePlayScenario& s) {
  std::vector<Issue> issues;
  if (s.aligned_label.empty() || s.deviant_label.empty()) {
    issues.push_back({ErrorCode::InvalidParameter, "labels must be non-empty"});
  }
  if (s.aligned_label == s.deviant_label) {
    issues.push_back({ErrorCode::DuplicateLabels,
                      fmt::format("aligned_label and deviant_label are both \"{}\"",
                                  s.aligned_label)});
  }
  require_probability(issues, "p_detect", s.p_detect);
  require_finite(issues, "aligned_reward", s.aligned_reward);
  require_finite(issues, "deviant_reward", s.deviant_reward);
  require_finite(issues, "penalty_reward", s.penalty_reward);
  return issues;
}

std::vector<Issue> check(const CoordinationGameSpec& g) {
  std::vector<Issue> issues;
  if (g.n < 2) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("n = {} must be >= 2", g.n)});
  }
  if (g.t < 1 || g.t > g.n) {
    issues.push_back({ErrorCode::InvalidThreshold,
                      fmt::format("threshold t = {} must lie in [1, n = {}]", g.t, g.n)});
  }
  if (g.r_max < 1) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("r_max = {} must be >= 1", g.r_max)});
  }
  auto reward_issues = check(g.rewards);
  issues.insert(issues.end(), reward_issues.begin(), reward_issues.end());
  return issues;
}

std::vector<Issue> check(const ToolTaskModel& m) {
  std::vector<Issue> issues;
  require_probability(issues, "q_tool_simple", m.q_tool_simple);
  require_probability(issues, "q_tool_complex", m.q_tool_complex);
  require_probability(issues, "q_direct_simple", m.q_direct_simple);
  require_probability(issues, "q_direct_complex", m.q_direct_complex);
  if (m.q_tool_complex < m.q_direct_complex) {
    issues.push_back({ErrorCode::InvalidParameter, "q_tool_complex must be >= q_direct_complex"});
  }
  if (m.q_direct_simple < m.q_direct_complex) {
    issues.push_back({ErrorCode::InvalidParameter, "q_direct_simple must be >= q_direct_complex"});
  }
  if (!(m.cost_tool > m.cost_direct && m.cost_direct > 0.0)) {
    issues.push_back({ErrorCode::InvalidParameter,
                      fmt::format("need cost_tool > cost_direct > 0, got {} and {}", m.cost_tool,
                                  m.cost_direct)});
  }
  if (m.simple_per_round_scale < 0) {
    issues.push_back({ErrorCode::InvalidParameter, "simple_per_round_scale must be >= 0"});
  }
  if (m.n_complex_eval < 1) {
    issues.push_back({ErrorCode::InvalidParameter, "n_complex_eval must be >= 1"});
  }
  require_finite(issues, "reward_correct", m.reward_correct);
  return issues;
}

Validated<RolePlayScenario> validate_scenario(const RolePlayScenario& spec) {
  auto issues = check(spec);
  if (!issues.empty()) fail(std::move(issues));
  std::vector<std::string> warnings;
  if (spec.deviant_reward <= spec.aligned_reward) {
    warnings.push_back(fmt::format(
        "scenario {}: deviant_reward {} <= aligned_reward {}; there is no payoff pressure to deviate",
        spec.id, spec.deviant_reward, spec.aligned_reward));
  }
  return {spec, std::move(warnings)};
}

Validated<CoordinationGameSpec> validate_scenario(const CoordinationGameSpec& spec) {
  auto issues = check(spec);
  if (!issues.empty()) fail(std::move(issues));
  return {spec, {}};
}

Validated<ToolTaskModel> validate_scenario(const ToolTaskModel& spec) {
  auto issues = check(spec);
  if (!issues.empty()) fail(std::move(issues));
  return {spec, {}};
}

double incentive_ratio(const RewardTuple& rewards) {
  auto issues = check(rewards);
  if (!issues.empty()) fail(std::move(issues));
  return (rewards.r_high - rewards.r_normal) / (rewards.r_normal - rewards.r_low);
}

RewardTuple tuple_for_k(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw Error(ErrorCode::NonPositiveK, fmt::format("incentive ratio k = {} must be positive", k));
  }
  // Published grid, kept literal so the tuples print exactly.
  static constexpr std::array<std::pair<double, RewardTuple>, 5> kCanonical{{
      {0.25, {1.2, 1.0, 0.2}},
      {0.5, {1.2, 1.0, 0.6}},
      {1.0, {1.2, 1.0, 0.8}},
      {2.0, {1.4, 1.0, 0.8}},
      {4.0, {1.8, 1.0, 0.8}},
  }};
  for (const auto& [key, tuple] : kCanonical) {
    if (key == k) return tuple;
  }
  if (k >= 1.0) return {1.0 + 0.2 * k, 1.0, 0.8};
  return {1.2, 1.0, 1.0 - 0.2 / k};
}

// ---- JSON ----

using nlohmann::json;
using detail::StrictReader;

RolePlayScenario role_play_from_json(const json& doc) {
  StrictReader in(doc, "role_play scenario");
  RolePlayScenario s;
  s.id = in.get<std::string>("id");
  s.persona = in.get<std::string>("persona");
  s.task = in.get<std::string>("task");
  s.rule = in.get<std::string>("rule");
  s.aligned_label = in.get<std::string>("aligned_label");
  s.deviant_label = in.get<std::string>("deviant_label");
  s.aligned_reward = in.get<double>("aligned_reward");
  s.deviant_reward = in.get<double>("deviant_reward");
  s.p_detect = in.get_or<double>("p_detect", 0.0);
  s.penalty_reward = in.get_or<double>("penalty_reward", s.aligned_reward / 2.0);
  in.finish();
  return s;
}

RewardTuple rewards_from_json(const json& doc) {
  StrictReader in(doc, "rewards");
  RewardTuple r;
  r.r_high = in.get<double>("r_high");
  r.r_normal = in.get<double>("r_normal");
  r.r_low = in.get<double>("r_low");
  in.finish();
  return r;
}

CoordinationGameSpec coordination_from_json(const json& doc) {
  StrictReader in(doc, "coordination game");
  CoordinationGameSpec g;
  g.n = in.get<int>("n");
  g.t = in.get<int>("t");
  g.rewards = rewards_from_json(in.raw("rewards"));
  g.r_max = in.get_or<int>("r_max", 3);
  in.finish();
  return g;
}

ToolTaskModel tool_model_from_json(const json& doc) {
  StrictReader in(doc, "tool task model");
  ToolTaskModel m;
  m.q_tool_simple = in.get<double>("q_tool_simple");
  m.q_tool_complex = in.get<double>("q_tool_complex");
  m.q_direct_simple = in.get<double>("q_direct_simple");
  m.q_direct_complex = in.get<double>("q_direct_complex");
  m.cost_tool = in.get_or<double>("cost_tool", 3.0);
  m.cost_direct = in.get_or<double>("cost_direct", 1.0);
  m.simple_per_round_scale = in.get_or<int>("simple_per_round_scale", 1);
  m.n_complex_eval = in.get_or<int>("n_complex_eval", 100);
  m.reward_correct = in.get_or<double>("reward_correct", 4.0);
  in.finish();
  return m;
}

json to_json(const RolePlayScenario& s) {
  return json{{"id", s.id},
              {"persona", s.persona},
              {"task", s.task},
              {"rule", s.rule},
              {"aligned_label", s.aligned_label},
              {"deviant_label", s.deviant_label},
              {"aligned_reward", s.aligned_reward},
              {"deviant_reward", s.deviant_reward},
              {"p_detect", s.p_detect},
              {"penalty_reward", s.penalty_reward}};
}

json to_json(const RewardTuple& r) {
  return json{{"r_high", r.r_high}, {"r_normal", r.r_normal}, {"r_low", r.r_low}};
}

json to_json(const CoordinationGameSpec& g) {
  return json{{"n", g.n}, {"t", g.t}, {"rewards", to_json(g.rewards)}, {"r_max", g.r_max}};
}

json to_json(const ToolTaskModel& m) {
  return json{{"q_tool_simple", m.q_tool_simple},
              {"q_tool_complex", m.q_tool_complex},
              {"q_direct_simple", m.q_direct_simple},
              {"q_direct_complex", m.q_direct_complex},
              {"cost_tool", m.cost_tool},
              {"cost_direct", m.cost_direct},
              {"simple_per_round_scale", m.simple_per_round_scale},
              {"n_complex_eval", m.n_complex_eval},
              {"reward_correct", m.reward_correct}};
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line/column
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorCode::ParseError,
                fmt::format("{}:{}:{}: {}", origin, line, column, e.what()));
  }
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_json_text(buffer.str(), path.string());
}

}  // namespace tipping
