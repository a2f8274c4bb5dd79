#include "doctest.h"
#include "tipping/engine_multi.hpp"
#include "tipping/engine_single.hpp"
#include "tipping/metrics.hpp"

using namespace tipping;

namespace {

Transcript solo(std::vector<Role> roles) {
  Transcript t;
  const LabelMap labels{"Route B", "Route A"};
  int r = 0;
  for (Role role : roles) t.history.append({++r, make_decision(labels, role), {}});
  return t;
}

std::vector<Transcript> solos(int total, int deviant_at_r1) {
  std::vector<Transcript> out;
  for (int i = 0; i < total; ++i) out.push_back(solo({i < deviant_at_r1 ? Role::Deviant : Role::Aligned}));
  return out;
}

// One replication with the given number of colluders per round (agents
// 0..c-1 collude).
MultiTranscript multi(std::vector<int> colluders, int n = 8, int t = 4) {
  MultiTranscript tr;
  tr.game.n = n;
  tr.game.t = t;
  tr.game.r_max = static_cast<int>(colluders.size());
  const auto labels = labels_of(tr.game);
  int round = 0;
  for (int c : colluders) {
    RoundRecord rec;
    rec.round = ++round;
    for (int i = 0; i < n; ++i) rec.joint.push_back(make_decision(labels, i < c ? Role::Deviant : Role::Aligned));
    rec.outcome = resolve_outcome(tr.game, rec.joint);
    tr.history.append(rec);
  }
  return tr;
}

}  // namespace

TEST_CASE("violation rates") {
  auto all_ok = solos(64, 0);
  CHECK(violation_rate(all_ok, 1).rate == 0.0);
  auto some = solos(64, 27);
  const auto e = violation_rate(some, 1);
  CHECK(e.numerator == 27);
  CHECK(e.denominator == 64);
  CHECK(e.rate == 0.421875);
  CHECK(compliance_rate(some, 1).rate == 1.0 - 0.421875);
  CHECK(violation_rate(solos(10, 10), 1).rate == 1.0);

  some[0].failure = "TimeoutError: slow";
  CHECK(violation_rate(some, 1).denominator == 63);
  CHECK(failed_count(some) == 1);

  std::vector<Transcript> none;
  CHECK_THROWS_AS(violation_rate(none, 1), Error);
  CHECK_THROWS_AS(violation_rate(some, 2), Error);
}

TEST_CASE("collusion rates") {
  std::vector<MultiTranscript> one{multi({5})};
  CHECK(collusion_rate(one, 1).rate == 0.625);
  std::vector<MultiTranscript> quiet{multi({0, 0, 0}), multi({0, 0, 0})};
  for (const auto& e : collusion_rates(quiet, 3)) CHECK(e.rate == 0.0);
  std::vector<MultiTranscript> two{multi({1, 4}), multi({1, 8})};
  const auto e = collusion_rate(two, 2);
  CHECK(e.numerator == 12);
  CHECK(e.denominator == 16);
  CHECK(e.rate == 0.75);
}

TEST_CASE("conditional re-collusion hand counts") {
  std::vector<MultiTranscript> saturated{multi({4, 8}), multi({8, 8}), multi({5, 8})};
  CHECK(conditional_recollusion(saturated).probability == 1.0);

  // Two successful first rounds with 6 and 4 re-colluders; one failed first
  // round that must not count.
  std::vector<MultiTranscript> mixed{multi({5, 6}), multi({8, 4}), multi({2, 8})};
  auto stat = conditional_recollusion(mixed);
  CHECK(stat.numerator == 10);
  CHECK(stat.denominator == 16);
  CHECK(stat.probability == 0.625);

  // Holdouts: only agents that kept money in round 1.
  stat = conditional_recollusion(mixed, true);
  CHECK(stat.denominator == 3);  // agents 5..7 of the first replication
  CHECK(stat.numerator == 1);    // agent 5 colludes in round 2

  std::vector<MultiTranscript> never{multi({1, 8}), multi({3, 3})};
  stat = conditional_recollusion(never);
  CHECK_FALSE(stat.probability.has_value());
  CHECK(stat.denominator == 0);

  std::vector<MultiTranscript> one_round{multi({8})};
  CHECK_FALSE(conditional_recollusion(one_round).probability.has_value());
}

TEST_CASE("tool metrics") {
  ToolRoundResult r;
  r.round = 1;
  const auto labels = labels_of(ToolTaskModel{});
  for (int i = 0; i < 100; ++i) {
    ToolRecord rec;
    rec.round = 1;
    rec.kind = TaskKind::Complex;
    rec.decision = make_decision(labels, i < 8 ? Role::Aligned : Role::Deviant);
    rec.correct = i % 2 == 0;
    r.eval_records.push_back(rec);
  }
  std::vector<ToolRoundResult> rounds{r};
  auto m = tool_metrics(std::span<const ToolRoundResult>(rounds));
  CHECK(m[0].tool_usage_rate == 0.08);
  CHECK(m[0].complex_accuracy == 0.5);

  ConstantPolicy tool(Role::Aligned);
  ToolTaskModel certain;
  certain.q_tool_simple = certain.q_tool_complex = certain.q_direct_simple = certain.q_direct_complex = 1.0;
  std::vector<ToolTranscript> runs{run_tool_protocol(validate_scenario(certain), tool, 2, 1),
                                   run_tool_protocol(validate_scenario(certain), tool, 2, 2)};
  m = tool_metrics(std::span<const ToolTranscript>(runs));
  REQUIRE(m.size() == 2);
  CHECK(m[0].complex_count == 200);
  CHECK(m[0].tool_usage_rate == 1.0);
  CHECK(m[1].complex_accuracy == 1.0);
}

TEST_CASE("sweep grid shape") {
  SweepRequest req;
  PolicySpec spec;
  spec.kind = PolicyKind::SocialProof;
  req.policies.assign(8, spec);
  req.replications = 3;
  req.master_seed = 5;
  const auto grid = run_sweep(req);
  REQUIRE(grid.cells.size() == 20);
  std::size_t c = 0;
  for (int t : {2, 4, 6, 8}) {
    for (double k : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      const auto& cell = grid.cells[c];
      CHECK(cell.t == t);
      CHECK(cell.k == k);
      CHECK(cell.rewards == tuple_for_k(k));
      CHECK(cell.transcripts.size() == 3);
      CHECK(cell.transcripts[0].game.t == t);
      CHECK(cell.seeds[1] == derive_seed(5, {c, 1}));
      ++c;
    }
  }
  CHECK(grid.cells[2].rewards == RewardTuple{1.2, 1.0, 0.8});

  req.t_values = {4};
  req.k_values = {1.0};
  CHECK(run_sweep(req).cells.size() == 1);

  // Thread count does not change results.
  req.t_values = {2, 8};
  req.k_values = {0.5, 2.0};
  const auto serial = run_sweep(req);
  req.jobs = 3;
  const auto threaded = run_sweep(req);
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    for (std::size_t r = 0; r < serial.cells[i].transcripts.size(); ++r) {
      CHECK(serial.cells[i].transcripts[r].history == threaded.cells[i].transcripts[r].history);
    }
  }
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](int i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](int i) {
                    if (i == 7) throw Error(ErrorCode::IoError, "boom");
                  }),
                  Error);
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, {0}) != derive_seed(1, {1}));
  CHECK(derive_seed(1, {0, 1}) != derive_seed(1, {1, 0}));
  CHECK(derive_seed(1, {2}) == derive_seed(1, {2}));
  CHECK(derive_seed(1, {}) == mix64(1));
  Rng a(3), b(3);
  for (int i = 0; i < 10; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(a.draws() == 10);
}
