#ifndef TIPPING_OBSERVATION_HPP
#define TIPPING_OBSERVATION_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tipping/scenario.hpp"

namespace tipping {

// (role, reward) pair as seen by value learners.
struct Experience {
  Role role = Role::Aligned;
  double reward = 0.0;
};

enum class TaskKind { Simple, Complex };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view text);

// One solved task in the tool protocol. The decision's role is aligned for
// "tool" and deviant for "direct".
struct ToolRecord {
  int round = 0;
  TaskKind kind = TaskKind::Simple;
  Decision decision;
  bool correct = false;
  double cost = 0.0;
  double reward = 0.0;
  std::optional<double> p_deviate;

  bool operator==(const ToolRecord&) const = default;
};

// What a single agent sees before deciding in round `round`. The structured
// views point into engine-owned data and are only valid during decide().
struct Observation {
  EnvironmentFamily family = EnvironmentFamily::RolePlay;
  int round = 1;
  std::string scenario_digest;
  std::vector<std::string> history_view;
  LabelMap labels;
  std::vector<Experience> experience;
  std::optional<TaskKind> task;

  const RolePlayScenario* role_play = nullptr;
  const History* history = nullptr;
  const ToolTaskModel* tool = nullptr;
  std::span<const ToolRecord> tool_history;
};

struct OutcomeRecord {
  int colluder_count = 0;
  bool success = false;
  std::vector<double> per_agent_multiplier;
  std::vector<double> per_agent_delta;

  bool operator==(const OutcomeRecord&) const = default;
};

struct RoundRecord {
  int round = 0;
  std::vector<Decision> joint;
  OutcomeRecord outcome;
  std::vector<double> capital_after;

  bool operator==(const RoundRecord&) const = default;
};

// Shared history of the coordination game; round i + 1 lives at index i.
class GlobalHistory {
 public:
  void append(RoundRecord record);
  std::span<const RoundRecord> rounds() const noexcept { return rounds_; }
  std::size_t size() const noexcept { return rounds_.size(); }
  bool empty() const noexcept { return rounds_.empty(); }
  const RoundRecord& back() const { return rounds_.back(); }

  bool operator==(const GlobalHistory&) const = default;

 private:
  std::vector<RoundRecord> rounds_;
};

struct MultiObservation {
  const CoordinationGameSpec* game = nullptr;
  const GlobalHistory* history = nullptr;
  int agent_id = 0;
  int round = 1;
  double capital = 1.0;
};

}  // namespace tipping

#endif
