#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "tipping/engine_multi.hpp"
#include "tipping/policy.hpp"

using namespace tipping;

namespace {

CoordinationGameSpec game(int n, int t, int rounds = 3) {
  CoordinationGameSpec g;
  g.n = n;
  g.t = t;
  g.r_max = rounds;
  return g;
}

std::vector<Decision> joint_with(int n, int colluders) {
  const auto labels = labels_of(CoordinationGameSpec{});
  std::vector<Decision> joint;
  for (int i = 0; i < n; ++i) {
    joint.push_back(make_decision(labels, i < colluders ? Role::Deviant : Role::Aligned));
  }
  return joint;
}

std::vector<std::unique_ptr<Policy>> agents(int n, PolicySpec spec) {
  std::vector<std::unique_ptr<Policy>> out;
  for (int i = 0; i < n; ++i) out.push_back(make_policy(spec));
  return out;
}

PolicySpec kind(PolicyKind k) {
  PolicySpec s;
  s.kind = k;
  return s;
}

// Mixed population: per-agent random roles, seeded by the agent's own stream.
class Coin final : public Policy {
 public:
  explicit Coin(double p) : p_(p) {}
  PolicyKind kind() const noexcept override { return PolicyKind::SocialProof; }
  std::string descriptor() const override { return "coin"; }
  PolicyOutput decide(const Observation&, Rng&) override { throw Error(ErrorCode::PolicyFamilyMismatch, "solo"); }
  PolicyOutput decide(const MultiObservation& obs, Rng& rng) override {
    return {make_decision(labels_of(*obs.game), rng.uniform() < p_ ? Role::Deviant : Role::Aligned), p_};
  }

 private:
  double p_;
};

}  // namespace

TEST_CASE("outcome resolution") {
  const auto g = game(8, 4);
  auto out = resolve_outcome(g, joint_with(8, 4));
  CHECK(out.success);
  CHECK(out.colluder_count == 4);
  for (double m : out.per_agent_multiplier) CHECK(m == 1.2);

  out = resolve_outcome(g, joint_with(8, 3));
  CHECK_FALSE(out.success);
  CHECK(std::count(out.per_agent_multiplier.begin(), out.per_agent_multiplier.end(), 0.8) == 3);
  CHECK(std::count(out.per_agent_multiplier.begin(), out.per_agent_multiplier.end(), 1.0) == 5);

  out = resolve_outcome(game(8, 2), joint_with(8, 0));
  CHECK_FALSE(out.success);
  for (double m : out.per_agent_multiplier) CHECK(m == 1.0);

  CHECK_THROWS_AS(resolve_outcome(g, joint_with(7, 3)), Error);
}

TEST_CASE("every n=4 joint profile resolves by the threshold rule") {
  for (int t = 1; t <= 4; ++t) {
    const auto g = game(4, t);
    const auto labels = labels_of(g);
    for (unsigned mask = 0; mask < 16; ++mask) {
      std::vector<Decision> joint;
      for (int i = 0; i < 4; ++i) {
        joint.push_back(make_decision(labels, (mask >> i) & 1u ? Role::Deviant : Role::Aligned));
      }
      const auto out = resolve_outcome(g, joint);
      const int c = __builtin_popcount(mask);
      CHECK(out.colluder_count == c);
      CHECK(out.success == (c >= t));
      for (int i = 0; i < 4; ++i) {
        const bool colluded = (mask >> i) & 1u;
        const double expected = c >= t ? 1.2 : (colluded ? 0.8 : 1.0);
        CHECK(out.per_agent_multiplier[i] == expected);
      }
    }
  }
}

TEST_CASE("capital updates") {
  auto [a, d] = update_capital(AgentState{0, 1.0, ""}, 1.2);
  CHECK(a.capital == 1.2);
  CHECK(d == doctest::Approx(0.2).epsilon(1e-12));
  std::tie(a, d) = update_capital(AgentState{0, 1.0, ""}, 1.0);
  CHECK(d == 0.0);
  std::tie(a, d) = update_capital(AgentState{0, 1.2, ""}, 0.8);
  CHECK(a.capital == doctest::Approx(0.96).epsilon(1e-12));
  CHECK(d == doctest::Approx(-0.24).epsilon(1e-12));
  CHECK_THROWS_AS(update_capital(AgentState{}, 0.0), Error);
}

TEST_CASE("scripted populations") {
  const auto g = validate_scenario(game(8, 4, 4));
  auto deviants = agents(8, kind(PolicyKind::AlwaysDeviant));
  auto t = run_multi_evolution(g, deviants, 3);
  REQUIRE(t.history.size() == 4);
  for (const auto& rec : t.history.rounds()) {
    CHECK(rec.outcome.success);
    for (double c : rec.capital_after) CHECK(c == doctest::Approx(std::pow(1.2, rec.round)).epsilon(1e-12));
  }
  CHECK(t.history.rounds()[1].capital_after[0] == doctest::Approx(1.44).epsilon(1e-12));

  auto keepers = agents(8, kind(PolicyKind::AlwaysAligned));
  t = run_multi_evolution(g, keepers, 3);
  for (const auto& rec : t.history.rounds()) {
    CHECK_FALSE(rec.outcome.success);
    CHECK(rec.outcome.colluder_count == 0);
    for (double c : rec.capital_after) CHECK(c == 1.0);
  }
}

TEST_CASE("deterministic social proof populations move in lockstep") {
  PolicySpec spec = kind(PolicyKind::SocialProof);
  spec.social.stochastic_init = false;
  for (double p0 : {0.0, 0.2, 0.45, 0.5, 0.8, 1.0}) {
    spec.social.p0 = p0;
    for (int t = 1; t <= 8; ++t) {
      auto pop = agents(8, spec);
      const auto tr = run_multi_evolution(validate_scenario(game(8, t, 5)), pop, 11);
      for (const auto& rec : tr.history.rounds()) {
        CHECK((rec.outcome.colluder_count == 0 || rec.outcome.colluder_count == 8));
      }
    }
  }
}

TEST_CASE("capital identities on random populations") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 9);
    const int t = 1 + static_cast<int>(gen() % n);
    std::vector<std::unique_ptr<Policy>> pop;
    for (int i = 0; i < n; ++i) pop.push_back(std::make_unique<Coin>((gen() % 100) / 100.0));
    const auto tr = run_multi_evolution(validate_scenario(game(n, t, 6)), pop, gen());
    for (int i = 0; i < n; ++i) {
      double product = 1.0, deltas = 0.0;
      for (const auto& rec : tr.history.rounds()) {
        product *= rec.outcome.per_agent_multiplier[i];
        deltas += rec.outcome.per_agent_delta[i];
      }
      const double final_capital = tr.history.back().capital_after[i];
      CHECK(std::abs(final_capital - product) < 1e-12);
      CHECK(std::abs(deltas - (final_capital - 1.0)) < 1e-12);
    }
  }
}

TEST_CASE("evaluation order does not change decisions") {
  std::vector<int> order(8);
  std::iota(order.begin(), order.end(), 0);
  PolicySpec spec = kind(PolicyKind::SocialProof);
  const auto g = validate_scenario(game(8, 3, 5));
  auto base_pop = agents(8, spec);
  const auto base = run_multi_evolution(g, base_pop, 77);
  std::mt19937_64 gen(2);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(order.begin(), order.end(), gen);
    auto pop = agents(8, spec);
    MultiRunOptions opts;
    opts.order = order;
    CHECK(run_multi_evolution(g, pop, 77, opts).history == base.history);
  }
  auto pop = agents(8, spec);
  MultiRunOptions parallel;
  parallel.parallel_agents = true;
  CHECK(run_multi_evolution(g, pop, 77, parallel).history == base.history);

  MultiRunOptions bad;
  bad.order = {0, 1, 2, 3, 4, 5, 6, 6};
  auto pop2 = agents(8, spec);
  CHECK_THROWS_AS(run_multi_evolution(g, pop2, 77, bad), Error);
}

TEST_CASE("decisions only see earlier rounds") {
  class Spy final : public Policy {
   public:
    PolicyKind kind() const noexcept override { return PolicyKind::AlwaysAligned; }
    std::string descriptor() const override { return "spy"; }
    PolicyOutput decide(const Observation&, Rng&) override { throw Error(ErrorCode::PolicyFamilyMismatch, ""); }
    PolicyOutput decide(const MultiObservation& obs, Rng& rng) override {
      rng.uniform();
      CHECK(obs.history->size() == static_cast<std::size_t>(obs.round - 1));
      return {make_decision(labels_of(*obs.game), Role::Deviant), std::nullopt};
    }
  };
  std::vector<std::unique_ptr<Policy>> pop;
  for (int i = 0; i < 4; ++i) pop.push_back(std::make_unique<Spy>());
  CHECK(run_multi_evolution(validate_scenario(game(4, 2, 4)), pop, 1).history.size() == 4);
  pop.pop_back();
  CHECK_THROWS_AS(run_multi_evolution(validate_scenario(game(4, 2, 4)), pop, 1), Error);
}

TEST_CASE("wrong-family policies are rejected, not recorded as failures") {
  auto pop = agents(4, kind(PolicyKind::PriorExperience));
  CHECK_THROWS_AS(run_multi_evolution(validate_scenario(game(4, 2)), pop, 1), Error);
}
