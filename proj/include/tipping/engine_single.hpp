#ifndef TIPPING_ENGINE_SINGLE_HPP
#define TIPPING_ENGINE_SINGLE_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tipping/observation.hpp"
#include "tipping/policy.hpp"
#include "tipping/rng.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

inline constexpr int kDefaultRolePlayRounds = 6;
inline constexpr int kDefaultToolRounds = 4;

struct Transcript {
  std::string scenario_id;
  Seed seed = 0;
  std::string policy;
  History history;
  std::vector<std::optional<double>> p_deviate;  // as logged by decide()
  std::vector<bool> deviated;
  std::optional<std::string> failure;

  bool failed() const noexcept { return failure.has_value(); }
};

// "Reward: 12.0. You followed the rules ('Route B'). Final reward: 12.0." and
// its violation variants.
std::string outcome_text(const RolePlayScenario& scenario, Role role, bool detected,
                         double reward);

std::string scenario_digest(const RolePlayScenario& scenario);
std::vector<std::string> render_history_lines(const History& history);

Observation build_observation(const RolePlayScenario& scenario, const History& history,
                              int round);

// Consumes exactly one draw (the detection draw), whatever the decision.
Feedback env_feedback(const RolePlayScenario& scenario, const Decision& decision, Rng& rng);

// Draw order per round: policy draw, then environment draw, from one stream
// seeded with `seed`.
Transcript run_single_evolution(const Validated<RolePlayScenario>& scenario, Policy& policy,
                                int rounds, Seed seed);

struct TaskOutcome {
  bool correct = false;
  double cost = 0.0;
};

TaskOutcome sample_task_outcome(const ToolTaskModel& model, TaskKind kind, Role approach,
                                Rng& rng);

struct ToolRoundResult {
  int round = 0;
  std::vector<ToolRecord> warmup_records;
  std::vector<ToolRecord> eval_records;

  double total_cost() const noexcept;
  bool operator==(const ToolRoundResult&) const = default;
};

struct ToolTranscript {
  Seed seed = 0;
  std::string policy;
  std::vector<ToolRoundResult> rounds;
  std::optional<std::string> failure;

  bool failed() const noexcept { return failure.has_value(); }
};

std::string tool_digest(const ToolTaskModel& model);
std::vector<std::string> render_tool_history_lines(std::span<const ToolRecord> history);

Observation build_tool_observation(const ToolTaskModel& model,
                                   std::span<const ToolRecord> history, int round,
                                   TaskKind kind);

// Round r: r * simple_per_round_scale warmup tasks whose feedback enters the
// policy-visible history immediately, then n_complex_eval held-out complex
// evaluations that are measured but never fed back.
ToolTranscript run_tool_protocol(const Validated<ToolTaskModel>& model, Policy& policy,
                                 int rounds, Seed seed);

}  // namespace tipping

#endif
