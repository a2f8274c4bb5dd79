#include "tipping/engine_multi.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <exception>
#include <future>
#include <numeric>

namespace tipping {

OutcomeRecord resolve_outcome(const CoordinationGameSpec& game, std::span<const Decision> joint) {
  if (static_cast<int>(joint.size()) != game.n) {
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("joint decision has {} entries for n = {}", joint.size(), game.n));
  }
  OutcomeRecord out;
  out.colluder_count = static_cast<int>(std::count_if(
      joint.begin(), joint.end(), [](const Decision& d) { return d.role == Role::Deviant; }));
  out.success = out.colluder_count >= game.t;
  out.per_agent_multiplier.reserve(joint.size());
  for (const auto& d : joint) {
    if (out.success) {
      out.per_agent_multiplier.push_back(game.rewards.r_high);
    } else {
      out.per_agent_multiplier.push_back(d.role == Role::Deviant ? game.rewards.r_low
                                                                 : game.rewards.r_normal);
    }
  }
  return out;
}

std::pair<AgentState, double> update_capital(const AgentState& state, double multiplier) {
  if (!(multiplier > 0.0)) {
    throw Error(ErrorCode::NonPositiveMultiplier,
                fmt::format("capital multiplier {} must be positive", multiplier));
  }
  AgentState next = state;
  next.capital = state.capital * multiplier;
  return {next, next.capital - state.capital};
}

namespace {

bool is_policy_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::PolicyFailure:
    case ErrorCode::EndpointError:
    case ErrorCode::TimeoutError:
    case ErrorCode::AuthError:
    case ErrorCode::NoDecisionFound:
    case ErrorCode::UnknownChoice:
      return true;
    default:
      return false;
  }
}

}  // namespace

MultiTranscript run_multi_evolution(const Validated<CoordinationGameSpec>& validated,
                                    std::span<const std::unique_ptr<Policy>> policies, Seed seed,
                                    const MultiRunOptions& options) {
  const CoordinationGameSpec& game = validated.value();
  const int n = game.n;
  if (static_cast<int>(policies.size()) != n) {
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("{} policies supplied for n = {} agents", policies.size(), n));
  }
  std::vector<int> order = options.order;
  if (order.empty()) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(sorted.size()) != n || sorted[i] != i) {
        throw Error(ErrorCode::InvalidParameter, "evaluation order must be a permutation of 0..n-1");
      }
    }
  }

  MultiTranscript transcript;
  transcript.game = game;
  transcript.seed = seed;
  std::vector<AgentState> agents(n);
  std::vector<Rng> streams;
  streams.reserve(n);
  for (int i = 0; i < n; ++i) {
    agents[i].agent_id = i;
    agents[i].policy = policies[i]->descriptor();
    transcript.policies.push_back(agents[i].policy);
    streams.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
  }
  const auto labels = labels_of(game);

  for (int round = 1; round <= game.r_max; ++round) {
    std::vector<Decision> joint(n);
    auto decide_one = [&](int i) {
      MultiObservation obs{&game, &transcript.history, i, round, agents[i].capital};
      auto out = policies[i]->decide(obs, streams[i]);
      if (!labels.contains(out.decision.surface_label) ||
          labels.role_of(out.decision.surface_label) != out.decision.role) {
        throw Error(ErrorCode::PolicyFailure,
                    fmt::format("agent {} returned an invalid decision \"{}\"", i,
                                out.decision.surface_label));
      }
      joint[i] = std::move(out.decision);
    };

    try {
      if (options.parallel_agents) {
        std::vector<std::future<void>> pending;
        pending.reserve(n);
        for (int i : order) pending.push_back(std::async(std::launch::async, decide_one, i));
        std::exception_ptr first;
        for (auto& f : pending) {
          try {
            f.get();
          } catch (...) {
            if (!first) first = std::current_exception();
          }
        }
        if (first) std::rethrow_exception(first);
      } else {
        for (int i : order) decide_one(i);
      }
    } catch (const Error& e) {
      if (!is_policy_failure(e.code())) throw;
      transcript.failure = fmt::format("{}: {}", to_string(e.code()), e.what());
      break;
    }

    RoundRecord record;
    record.round = round;
    record.outcome = resolve_outcome(game, joint);
    record.outcome.per_agent_delta.resize(n);
    record.capital_after.resize(n);
    for (int i = 0; i < n; ++i) {
      auto [next, delta] = update_capital(agents[i], record.outcome.per_agent_multiplier[i]);
      agents[i] = next;
      record.outcome.per_agent_delta[i] = delta;
      record.capital_after[i] = next.capital;
    }
    record.joint = std::move(joint);
    transcript.history.append(record);
    for (int i = 0; i < n; ++i) policies[i]->observe(transcript.history.back(), i);
  }
  return transcript;
}

}  // namespace tipping
