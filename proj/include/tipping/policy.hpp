#ifndef TIPPING_POLICY_HPP
#define TIPPING_POLICY_HPP

#include <memory>
#include <optional>
#include <span>
#include <string>

#include "tipping/observation.hpp"
#include "tipping/rng.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

enum class PolicyKind {
  AlwaysAligned,
  AlwaysDeviant,
  PriorExperience,
  SocialProof,
  EndpointBacked,
};

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view text);

// Alignment prior as kappa pseudo-observations of value q0 per action.
struct PriorExperienceParams {
  double kappa = 4.0;
  double q0_aligned = 12.0;
  double q0_deviant = 11.75;
  double tau = 0.5;

  bool operator==(const PriorExperienceParams&) const = default;
};

// Offset of the default deviant prior below the aligned prior.
inline constexpr double kDefaultDeviantPriorGap = 0.25;

struct SocialProofParams {
  double p0 = 0.3;
  double alpha = 2.0;
  double tau = 0.0;  // 0 selects the deterministic best response
  double epsilon = 0.0;
  // Round 1 has no history: when set, collude with probability p0 instead of
  // best-responding to the belief p0.
  bool stochastic_init = true;

  bool operator==(const SocialProofParams&) const = default;
};

std::vector<Issue> check(const PriorExperienceParams& params);
std::vector<Issue> check(const SocialProofParams& params);

double logistic(double x) noexcept;

struct ValueEstimates {
  double aligned = 0.0;
  double deviant = 0.0;
};

// Q(a) = (kappa * q0(a) + sum of rewards observed for a) / (kappa + count(a)).
ValueEstimates value_estimates(const PriorExperienceParams& params,
                               std::span<const Experience> experience);

// P(deviate) = logistic((Q(deviant) - Q(aligned)) / tau).
double prior_experience_probability(const PriorExperienceParams& params,
                                    std::span<const Experience> experience);
double prior_experience_probability(const PriorExperienceParams& params,
                                    const History& history);

std::vector<Experience> experience_of(const History& history);

// Belief that a peer colludes: p0 before any history, then
// (c_others_last + alpha * p0) / ((n - 1) + alpha).
double social_proof_belief(const SocialProofParams& params, const GlobalHistory& history,
                           int agent_id);

// P[Binomial(trials, p) >= at_least].
double binomial_tail(int trials, double p, int at_least);

struct BestResponse {
  Role role = Role::Aligned;
  double ev_collude = 0.0;
  double ev_keep = 0.0;
  double p_collude = 0.0;  // 0 or 1 when tau == 0
};

// Threshold best response against n - 1 independent Bernoulli(p_hat) peers.
// Ties (ev_collude == ev_keep + epsilon) resolve to collude.
BestResponse best_response_threshold(const CoordinationGameSpec& game, double p_hat,
                                     double epsilon = 0.0, double tau = 0.0);

struct PolicyOutput {
  Decision decision;
  std::optional<double> p_deviate;
};

// Every decide() consumes exactly one draw from the caller's stream so stream
// positions do not depend on the policy kind.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual PolicyKind kind() const noexcept = 0;
  virtual std::string descriptor() const = 0;

  virtual PolicyOutput decide(const Observation& obs, Rng& rng) = 0;
  virtual PolicyOutput decide(const MultiObservation& obs, Rng& rng) = 0;

  virtual void observe(const Experience& /*experience*/) {}
  virtual void observe(const RoundRecord& /*record*/, int /*agent_id*/) {}
};

class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(Role role) : role_(role) {}

  PolicyKind kind() const noexcept override;
  std::string descriptor() const override;
  PolicyOutput decide(const Observation& obs, Rng& rng) override;
  PolicyOutput decide(const MultiObservation& obs, Rng& rng) override;

 private:
  Role role_;
};

class PriorExperiencePolicy final : public Policy {
 public:
  struct State {
    long aligned_count = 0;
    long deviant_count = 0;
    double aligned_sum = 0.0;
    double deviant_sum = 0.0;
  };

  explicit PriorExperiencePolicy(PriorExperienceParams params);

  PolicyKind kind() const noexcept override { return PolicyKind::PriorExperience; }
  std::string descriptor() const override;
  PolicyOutput decide(const Observation& obs, Rng& rng) override;
  PolicyOutput decide(const MultiObservation& obs, Rng& rng) override;
  void observe(const Experience& experience) override;

  const State& state() const noexcept { return state_; }
  double current_probability() const noexcept;

 private:
  PriorExperienceParams params_;
  State state_;
};

class SocialProofPolicy final : public Policy {
 public:
  explicit SocialProofPolicy(SocialProofParams params);

  PolicyKind kind() const noexcept override { return PolicyKind::SocialProof; }
  std::string descriptor() const override;
  PolicyOutput decide(const Observation& obs, Rng& rng) override;
  PolicyOutput decide(const MultiObservation& obs, Rng& rng) override;
  void observe(const RoundRecord& record, int agent_id) override;

  std::optional<int> others_colluding_last() const noexcept { return c_others_last_; }

 private:
  SocialProofParams params_;
  std::optional<int> c_others_last_;
};

class ChatClient;

struct PolicySpec {
  PolicyKind kind = PolicyKind::AlwaysAligned;
  PriorExperienceParams prior;
  SocialProofParams social;

  bool operator==(const PolicySpec&) const = default;
};

// Fresh, independent instance per replication (and per agent). Endpoint
// policies share `client`, which owns the concurrency limit.
std::unique_ptr<Policy> make_policy(const PolicySpec& spec,
                                    std::shared_ptr<ChatClient> client = nullptr);

// PriorExperience defaults derived from the environment's aligned payoff.
PriorExperienceParams default_prior_experience(double aligned_value);

}  // namespace tipping

#endif
