#include "tipping/policy.hpp"

#include <fmt/format.h>

#include <cmath>

#include "text_format.hpp"
#include "tipping/llm_adapter.hpp"
#include "tipping/scenario_json.hpp"

namespace tipping {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::AlwaysAligned: return "always_aligned";
    case PolicyKind::AlwaysDeviant: return "always_deviant";
    case PolicyKind::PriorExperience: return "prior_experience";
    case PolicyKind::SocialProof: return "social_proof";
    case PolicyKind::EndpointBacked: return "endpoint_backed";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(std::string_view text) {
  for (auto kind : {PolicyKind::AlwaysAligned, PolicyKind::AlwaysDeviant,
                    PolicyKind::PriorExperience, PolicyKind::SocialProof,
                    PolicyKind::EndpointBacked}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::ParseError, fmt::format("unknown policy kind \"{}\"", text));
}

std::vector<Issue> check(const PriorExperienceParams& p) {
  std::vector<Issue> issues;
  if (!(p.tau > 0.0)) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("tau = {} must be > 0", p.tau)});
  }
  if (!(p.kappa >= 0.0)) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("kappa = {} must be >= 0", p.kappa)});
  }
  if (!std::isfinite(p.q0_aligned) || !std::isfinite(p.q0_deviant)) {
    issues.push_back({ErrorCode::InvalidParameter, "q0 values must be finite"});
  }
  return issues;
}

std::vector<Issue> check(const SocialProofParams& p) {
  std::vector<Issue> issues;
  if (!(p.p0 >= 0.0 && p.p0 <= 1.0)) {
    issues.push_back({ErrorCode::InvalidProbability, fmt::format("p0 = {} is outside [0, 1]", p.p0)});
  }
  if (!(p.alpha >= 0.0)) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("alpha = {} must be >= 0", p.alpha)});
  }
  if (!(p.tau >= 0.0)) {
    issues.push_back({ErrorCode::InvalidParameter, fmt::format("tau = {} must be >= 0", p.tau)});
  }
  if (!(p.epsilon >= 0.0)) {
    issues.push_back(
        {ErrorCode::InvalidParameter, fmt::format("epsilon = {} must be >= 0", p.epsilon)});
  }
  return issues;
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ValueEstimates value_estimates(const PriorExperienceParams& params,
                               std::span<const Experience> experience) {
  double sum[2] = {0.0, 0.0};
  long count[2] = {0, 0};
  for (const auto& e : experience) {
    const int a = e.role == Role::Aligned ? 0 : 1;
    sum[a] += e.reward;
    ++count[a];
  }
  return {(params.kappa * params.q0_aligned + sum[0]) / (params.kappa + count[0]),
          (params.kappa * params.q0_deviant + sum[1]) / (params.kappa + count[1])};
}

double prior_experience_probability(const PriorExperienceParams& params,
                                    std::span<const Experience> experience) {
  const auto q = value_estimates(params, experience);
  return logistic((q.deviant - q.aligned) / params.tau);
}

std::vector<Experience> experience_of(const History& history) {
  std::vector<Experience> out;
  out.reserve(history.size());
  for (const auto& e : history.entries()) out.push_back({e.decision.role, e.feedback.reward});
  return out;
}

double prior_experience_probability(const PriorExperienceParams& params, const History& history) {
  const auto experience = experience_of(history);
  return prior_experience_probability(params, experience);
}

namespace {

int colluders_among_others(const RoundRecord& record, int agent_id) {
  int count = 0;
  for (std::size_t i = 0; i < record.joint.size(); ++i) {
    if (static_cast<int>(i) != agent_id && record.joint[i].role == Role::Deviant) ++count;
  }
  return count;
}

double belief_from_count(const SocialProofParams& params, int n, int c_others) {
  const double denom = (n - 1) + params.alpha;
  if (denom <= 0.0) return params.p0;
  return (c_others + params.alpha * params.p0) / denom;
}

}  // namespace

double social_proof_belief(const SocialProofParams& params, const GlobalHistory& history,
                           int agent_id) {
  if (history.empty()) return params.p0;
  const auto& last = history.back();
  return belief_from_count(params, static_cast<int>(last.joint.size()),
                           colluders_among_others(last, agent_id));
}

double binomial_tail(int trials, double p, int at_least) {
  if (at_least <= 0) return 1.0;
  if (at_least > trials) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  // Sum the shorter side of the distribution in log space.
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  auto pmf = [&](int k) {
    const double log_choose =
        std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0);
    return std::exp(log_choose + k * lp + (trials - k) * lq);
  };
  double upper = 0.0;
  if (at_least > trials / 2) {
    for (int k = trials; k >= at_least; --k) upper += pmf(k);
    return std::min(1.0, upper);
  }
  double lower = 0.0;
  for (int k = 0; k < at_least; ++k) lower += pmf(k);
  return std::max(0.0, 1.0 - lower);
}

BestResponse best_response_threshold(const CoordinationGameSpec& game, double p_hat,
                                     double epsilon, double tau) {
  const int peers = game.n - 1;
  const auto& r = game.rewards;
  const double pivotal_success = binomial_tail(peers, p_hat, game.t - 1);
  const double peers_success = binomial_tail(peers, p_hat, game.t);
  BestResponse br;
  br.ev_collude = pivotal_success * r.r_high + (1.0 - pivotal_success) * r.r_low;
  br.ev_keep = peers_success * r.r_high + (1.0 - peers_success) * r.r_normal;
  const double margin = br.ev_collude - br.ev_keep - epsilon;
  if (tau > 0.0) {
    br.p_collude = logistic(margin / tau);
    br.role = br.p_collude >= 0.5 ? Role::Deviant : Role::Aligned;
  } else {
    br.role = margin >= 0.0 ? Role::Deviant : Role::Aligned;
    br.p_collude = br.role == Role::Deviant ? 1.0 : 0.0;
  }
  return br;
}

// ---- constant ----

PolicyKind ConstantPolicy::kind() const noexcept {
  return role_ == Role::Aligned ? PolicyKind::AlwaysAligned : PolicyKind::AlwaysDeviant;
}

std::string ConstantPolicy::descriptor() const { return std::string(to_string(kind())); }

PolicyOutput ConstantPolicy::decide(const Observation& obs, Rng& rng) {
  rng.uniform();
  return {make_decision(obs.labels, role_), role_ == Role::Deviant ? 1.0 : 0.0};
}

PolicyOutput ConstantPolicy::decide(const MultiObservation& obs, Rng& rng) {
  rng.uniform();
  return {make_decision(labels_of(*obs.game), role_), role_ == Role::Deviant ? 1.0 : 0.0};
}

// ---- prior vs experience ----

PriorExperiencePolicy::PriorExperiencePolicy(PriorExperienceParams params) : params_(params) {
  auto issues = check(params_);
  if (!issues.empty()) throw ValidationFailure(std::move(issues));
}

std::string PriorExperiencePolicy::descriptor() const {
  return fmt::format("prior_experience(kappa={},q0_aligned={},q0_deviant={},tau={})",
                     params_.kappa, params_.q0_aligned, params_.q0_deviant, params_.tau);
}

double PriorExperiencePolicy::current_probability() const noexcept {
  const double q_aligned = (params_.kappa * params_.q0_aligned + state_.aligned_sum) /
                           (params_.kappa + state_.aligned_count);
  const double q_deviant = (params_.kappa * params_.q0_deviant + state_.deviant_sum) /
                           (params_.kappa + state_.deviant_count);
  return logistic((q_deviant - q_aligned) / params_.tau);
}

PolicyOutput PriorExperiencePolicy::decide(const Observation& obs, Rng& rng) {
  const double p = current_probability();
  const Role role = rng.uniform() < p ? Role::Deviant : Role::Aligned;
  return {make_decision(obs.labels, role), p};
}

PolicyOutput PriorExperiencePolicy::decide(const MultiObservation&, Rng&) {
  throw Error(ErrorCode::PolicyFamilyMismatch,
              "prior_experience is a single-agent policy; the coordination game needs "
              "social_proof, constant or endpoint policies");
}

void PriorExperiencePolicy::observe(const Experience& e) {
  if (e.role == Role::Aligned) {
    ++state_.aligned_count;
    state_.aligned_sum += e.reward;
  } else {
    ++state_.deviant_count;
    state_.deviant_sum += e.reward;
  }
}

// ---- social proof ----

SocialProofPolicy::SocialProofPolicy(SocialProofParams params) : params_(params) {
  auto issues = check(params_);
  if (!issues.empty()) throw ValidationFailure(std::move(issues));
}

std::string SocialProofPolicy::descriptor() const {
  return fmt::format("social_proof(p0={},alpha={},tau={},epsilon={},stochastic_init={})",
                     params_.p0, params_.alpha, params_.tau, params_.epsilon,
                     params_.stochastic_init);
}

PolicyOutput SocialProofPolicy::decide(const Observation&, Rng&) {
  throw Error(ErrorCode::PolicyFamilyMismatch,
              "social_proof is a coordination-game policy and cannot play a single-agent "
              "environment");
}

PolicyOutput SocialProofPolicy::decide(const MultiObservation& obs, Rng& rng) {
  const auto labels = labels_of(*obs.game);
  const double u = rng.uniform();
  if (!c_others_last_ && params_.stochastic_init) {
    const Role role = u < params_.p0 ? Role::Deviant : Role::Aligned;
    return {make_decision(labels, role), params_.p0};
  }
  const double belief =
      c_others_last_ ? belief_from_count(params_, obs.game->n, *c_others_last_) : params_.p0;
  const auto br = best_response_threshold(*obs.game, belief, params_.epsilon, params_.tau);
  const Role role = params_.tau > 0.0 ? (u < br.p_collude ? Role::Deviant : Role::Aligned) : br.role;
  return {make_decision(labels, role), br.p_collude};
}

void SocialProofPolicy::observe(const RoundRecord& record, int agent_id) {
  c_others_last_ = colluders_among_others(record, agent_id);
}

// ---- construction ----

PriorExperienceParams default_prior_experience(double aligned_value) {
  PriorExperienceParams p;
  p.q0_aligned = aligned_value;
  p.q0_deviant = aligned_value - kDefaultDeviantPriorGap;
  return p;
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, std::shared_ptr<ChatClient> client) {
  switch (spec.kind) {
    case PolicyKind::AlwaysAligned: return std::make_unique<ConstantPolicy>(Role::Aligned);
    case PolicyKind::AlwaysDeviant: return std::make_unique<ConstantPolicy>(Role::Deviant);
    case PolicyKind::PriorExperience: return std::make_unique<PriorExperiencePolicy>(spec.prior);
    case PolicyKind::SocialProof: return std::make_unique<SocialProofPolicy>(spec.social);
    case PolicyKind::EndpointBacked:
      if (!client) {
        throw Error(ErrorCode::ValidationError,
                    "endpoint_backed policy requires an endpoint configuration");
      }
      return std::make_unique<EndpointPolicy>(std::move(client));
  }
  throw Error(ErrorCode::ValidationError, "unknown policy kind");
}

nlohmann::json to_json(const PolicySpec& spec) {
  nlohmann::json doc{{"kind", std::string(to_string(spec.kind))}};
  if (spec.kind == PolicyKind::PriorExperience) {
    doc["params"] = {{"kappa", spec.prior.kappa},
                     {"q0_aligned", spec.prior.q0_aligned},
                     {"q0_deviant", spec.prior.q0_deviant},
                     {"tau", spec.prior.tau}};
  } else if (spec.kind == PolicyKind::SocialProof) {
    doc["params"] = {{"p0", spec.social.p0},
                     {"alpha", spec.social.alpha},
                     {"tau", spec.social.tau},
                     {"epsilon", spec.social.epsilon},
                     {"stochastic_init", spec.social.stochastic_init}};
  }
  return doc;
}

}  // namespace tipping
