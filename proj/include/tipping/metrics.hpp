#ifndef TIPPING_METRICS_HPP
#define TIPPING_METRICS_HPP

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tipping/engine_multi.hpp"
#include "tipping/engine_single.hpp"
#include "tipping/policy.hpp"

namespace tipping {

struct RateEntry {
  int round = 0;
  long numerator = 0;
  long denominator = 0;
  double rate = 0.0;

  bool operator==(const RateEntry&) const = default;
};

using RateSeries = std::vector<RateEntry>;

// probability is empty when the condition never occurred.
struct ConditionalStat {
  std::string condition;
  long numerator = 0;
  long denominator = 0;
  std::optional<double> probability;

  bool operator==(const ConditionalStat&) const = default;
};

// Failed replications are skipped by every metric below.
RateEntry violation_rate(std::span<const Transcript> transcripts, int round);
RateEntry compliance_rate(std::span<const Transcript> transcripts, int round);
RateSeries violation_rates(std::span<const Transcript> transcripts, int rounds);

RateEntry collusion_rate(std::span<const MultiTranscript> transcripts, int round);
RateSeries collusion_rates(std::span<const MultiTranscript> transcripts, int rounds);

// P(collude in round 2 | round 1 succeeded). With holdouts_only, the
// population is restricted to agents that kept their money in round 1.
ConditionalStat conditional_recollusion(std::span<const MultiTranscript> transcripts,
                                        bool holdouts_only = false);

struct ToolRoundMetrics {
  int round = 0;
  long complex_count = 0;
  long tool_count = 0;
  long correct_count = 0;
  double tool_usage_rate = 0.0;
  double complex_accuracy = 0.0;

  bool operator==(const ToolRoundMetrics&) const = default;
};

std::vector<ToolRoundMetrics> tool_metrics(std::span<const ToolRoundResult> results);
// Pooled over replications, per round.
std::vector<ToolRoundMetrics> tool_metrics(std::span<const ToolTranscript> transcripts);

long failed_count(std::span<const Transcript> transcripts);
long failed_count(std::span<const ToolTranscript> transcripts);
long failed_count(std::span<const MultiTranscript> transcripts);

struct SweepCell {
  int t = 0;
  double k = 0.0;
  RewardTuple rewards;
  RateSeries collusion;
  ConditionalStat conditional;
  ConditionalStat conditional_holdout;
  long failed = 0;
  std::vector<Seed> seeds;
  std::vector<MultiTranscript> transcripts;
};

struct SweepGrid {
  std::vector<SweepCell> cells;
};

struct SweepRequest {
  std::vector<int> t_values{2, 4, 6, 8};
  std::vector<double> k_values{0.25, 0.5, 1.0, 2.0, 4.0};
  CoordinationGameSpec base;
  std::vector<PolicySpec> policies;  // length base.n
  int replications = 1;
  Seed master_seed = 0;
  int jobs = 1;
  std::shared_ptr<ChatClient> client;
};

// Cells in t-major order. Cell c, replication i seeds from
// derive_seed(master_seed, {c, i}).
SweepGrid run_sweep(const SweepRequest& request);

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace tipping

#endif
