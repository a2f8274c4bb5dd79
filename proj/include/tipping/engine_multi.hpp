#ifndef TIPPING_ENGINE_MULTI_HPP
#define TIPPING_ENGINE_MULTI_HPP

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tipping/observation.hpp"
#include "tipping/policy.hpp"
#include "tipping/rng.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

inline constexpr double kInitialCapital = 1.0;

struct AgentState {
  int agent_id = 0;
  double capital = kInitialCapital;
  std::string policy;
};

struct MultiTranscript {
  CoordinationGameSpec game;
  Seed seed = 0;
  std::vector<std::string> policies;
  GlobalHistory history;
  std::optional<std::string> failure;

  bool failed() const noexcept { return failure.has_value(); }
};

// Multipliers only; per_agent_delta is left empty until capitals are applied.
OutcomeRecord resolve_outcome(const CoordinationGameSpec& game,
                              std::span<const Decision> joint);

std::pair<AgentState, double> update_capital(const AgentState& state, double multiplier);

struct MultiRunOptions {
  // Evaluation order of agents within a round; empty means 0..n-1.
  std::vector<int> order;
  // Decide concurrently within a round (each agent owns its stream).
  bool parallel_agents = false;
};

// Agent i draws from derive_seed(seed, {i}). Decisions in round r depend only
// on the global history of rounds 1..r-1.
MultiTranscript run_multi_evolution(const Validated<CoordinationGameSpec>& game,
                                    std::span<const std::unique_ptr<Policy>> policies,
                                    Seed seed, const MultiRunOptions& options = {});

}  // namespace tipping

#endif
