#include "tipping/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace tipping {

namespace {

template <class T>
std::vector<const T*> completed(std::span<const T> transcripts) {
  std::vector<const T*> out;
  for (const auto& t : transcripts) {
    if (!t.failed()) out.push_back(&t);
  }
  return out;
}

RateEntry make_entry(int round, long numerator, long denominator) {
  if (denominator <= 0) {
    throw Error(ErrorCode::EmptyInput, fmt::format("no completed replications for round {}", round));
  }
  return {round, numerator, denominator,
          static_cast<double>(numerator) / static_cast<double>(denominator)};
}

}  // namespace

RateEntry violation_rate(std::span<const Transcript> transcripts, int round) {
  long deviant = 0, total = 0;
  for (const auto* t : completed(transcripts)) {
    if (static_cast<int>(t->history.size()) < round || round < 1) {
      throw Error(ErrorCode::HistoryLengthMismatch,
                  fmt::format("transcript (seed {}) has {} rounds, round {} requested", t->seed,
                              t->history.size(), round));
    }
    ++total;
    if (t->history[round - 1].decision.role == Role::Deviant) ++deviant;
  }
  return make_entry(round, deviant, total);
}

RateEntry compliance_rate(std::span<const Transcript> transcripts, int round) {
  const auto v = violation_rate(transcripts, round);
  return {round, v.denominator - v.numerator, v.denominator, 1.0 - v.rate};
}

RateSeries violation_rates(std::span<const Transcript> transcripts, int rounds) {
  RateSeries series;
  for (int r = 1; r <= rounds; ++r) series.push_back(violation_rate(transcripts, r));
  return series;
}

RateEntry collusion_rate(std::span<const MultiTranscript> transcripts, int round) {
  long colluders = 0, decisions = 0;
  for (const auto* t : completed(transcripts)) {
    if (static_cast<int>(t->history.size()) < round || round < 1) {
      throw Error(ErrorCode::HistoryLengthMismatch,
                  fmt::format("transcript (seed {}) has {} rounds, round {} requested", t->seed,
                              t->history.size(), round));
    }
    const auto& rec = t->history.rounds()[round - 1];
    decisions += static_cast<long>(rec.joint.size());
    colluders += std::count_if(rec.joint.begin(), rec.joint.end(),
                               [](const Decision& d) { return d.role == Role::Deviant; });
  }
  return make_entry(round, colluders, decisions);
}

RateSeries collusion_rates(std::span<const MultiTranscript> transcripts, int rounds) {
  RateSeries series;
  for (int r = 1; r <= rounds; ++r) series.push_back(collusion_rate(transcripts, r));
  return series;
}

ConditionalStat conditional_recollusion(std::span<const MultiTranscript> transcripts,
                                        bool holdouts_only) {
  ConditionalStat stat;
  stat.condition = holdouts_only ? "collude in round 2 | round 1 succeeded, kept money in round 1"
                                 : "collude in round 2 | round 1 succeeded";
  for (const auto* t : completed(transcripts)) {
    const auto rounds = t->history.rounds();
    if (rounds.size() < 2 || !rounds[0].outcome.success) continue;
    for (std::size_t i = 0; i < rounds[1].joint.size(); ++i) {
      if (holdouts_only && rounds[0].joint[i].role == Role::Deviant) continue;
      ++stat.denominator;
      if (rounds[1].joint[i].role == Role::Deviant) ++stat.numerator;
    }
  }
  if (stat.denominator > 0) {
    stat.probability = static_cast<double>(stat.numerator) / static_cast<double>(stat.denominator);
  }
  return stat;
}

std::vector<ToolRoundMetrics> tool_metrics(std::span<const ToolRoundResult> results) {
  std::vector<ToolRoundMetrics> out;
  for (const auto& r : results) {
    if (r.eval_records.empty()) {
      throw Error(ErrorCode::EmptyInput, fmt::format("round {} has no complex evaluations", r.round));
    }
    ToolRoundMetrics m;
    m.round = r.round;
    for (const auto& e : r.eval_records) {
      ++m.complex_count;
      if (e.decision.role == Role::Aligned) ++m.tool_count;
      if (e.correct) ++m.correct_count;
    }
    m.tool_usage_rate = static_cast<double>(m.tool_count) / static_cast<double>(m.complex_count);
    m.complex_accuracy = static_cast<double>(m.correct_count) / static_cast<double>(m.complex_count);
    out.push_back(m);
  }
  return out;
}

std::vector<ToolRoundMetrics> tool_metrics(std::span<const ToolTranscript> transcripts) {
  std::vector<ToolRoundMetrics> pooled;
  const auto done = completed(transcripts);
  if (done.empty()) throw Error(ErrorCode::EmptyInput, "no completed tool replications");
  for (const auto* t : done) {
    const auto per_round = tool_metrics(t->rounds);
    if (pooled.empty()) {
      pooled.resize(per_round.size());
      for (std::size_t i = 0; i < per_round.size(); ++i) pooled[i].round = per_round[i].round;
    }
    if (per_round.size() != pooled.size()) {
      throw Error(ErrorCode::HistoryLengthMismatch, "tool transcripts disagree on round count");
    }
    for (std::size_t i = 0; i < per_round.size(); ++i) {
      pooled[i].complex_count += per_round[i].complex_count;
      pooled[i].tool_count += per_round[i].tool_count;
      pooled[i].correct_count += per_round[i].correct_count;
    }
  }
  for (auto& m : pooled) {
    m.tool_usage_rate = static_cast<double>(m.tool_count) / static_cast<double>(m.complex_count);
    m.complex_accuracy = static_cast<double>(m.correct_count) / static_cast<double>(m.complex_count);
  }
  return pooled;
}

long failed_count(std::span<const Transcript> t) {
  return std::count_if(t.begin(), t.end(), [](const auto& x) { return x.failed(); });
}
long failed_count(std::span<const ToolTranscript> t) {
  return std::count_if(t.begin(), t.end(), [](const auto& x) { return x.failed(); });
}
long failed_count(std::span<const MultiTranscript> t) {
  return std::count_if(t.begin(), t.end(), [](const auto& x) { return x.failed(); });
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

SweepGrid run_sweep(const SweepRequest& request) {
  if (request.t_values.empty() || request.k_values.empty()) {
    throw Error(ErrorCode::EmptyInput, "sweep needs at least one t and one k");
  }
  if (request.replications < 1) {
    throw Error(ErrorCode::InvalidParameter, "sweep needs replications >= 1");
  }
  if (static_cast<int>(request.policies.size()) != request.base.n) {
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("{} policies for n = {}", request.policies.size(), request.base.n));
  }

  struct CellPlan {
    int t;
    double k;
    std::optional<Validated<CoordinationGameSpec>> game;
  };
  std::vector<CellPlan> plans;
  for (int t : request.t_values) {
    for (double k : request.k_values) {
      CoordinationGameSpec game = request.base;
      game.t = t;
      game.rewards = tuple_for_k(k);
      plans.push_back({t, k, validate_scenario(game)});
    }
  }

  SweepGrid grid;
  grid.cells.resize(plans.size());
  const int reps = request.replications;
  for (std::size_t c = 0; c < plans.size(); ++c) {
    auto& cell = grid.cells[c];
    cell.t = plans[c].t;
    cell.k = plans[c].k;
    cell.rewards = plans[c].game->value().rewards;
    cell.transcripts.resize(reps);
    for (int i = 0; i < reps; ++i) {
      cell.seeds.push_back(derive_seed(request.master_seed, {c, static_cast<std::uint64_t>(i)}));
    }
  }

  const int total = static_cast<int>(plans.size()) * reps;
  parallel_for(total, request.jobs, [&](int job) {
    const std::size_t c = static_cast<std::size_t>(job / reps);
    const int i = job % reps;
    std::vector<std::unique_ptr<Policy>> agents;
    for (const auto& spec : request.policies) agents.push_back(make_policy(spec, request.client));
    grid.cells[c].transcripts[i] =
        run_multi_evolution(*plans[c].game, agents, grid.cells[c].seeds[i]);
  });

  for (auto& cell : grid.cells) {
    cell.failed = failed_count(cell.transcripts);
    if (cell.failed < reps) {
      cell.collusion = collusion_rates(cell.transcripts, request.base.r_max);
    }
    cell.conditional = conditional_recollusion(cell.transcripts);
    cell.conditional_holdout = conditional_recollusion(cell.transcripts, true);
  }
  return grid;
}

}  // namespace tipping
