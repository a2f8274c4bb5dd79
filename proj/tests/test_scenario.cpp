#include <random>

#include "doctest.h"
#include "tipping/scenario.hpp"
#include "tipping/scenario_json.hpp"

using namespace tipping;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::IoError;
}

CoordinationGameSpec game(int n, int t, RewardTuple r = {}) {
  CoordinationGameSpec g;
  g.n = n;
  g.t = t;
  g.rewards = r;
  return g;
}

}  // namespace

TEST_CASE("coordination spec validation") {
  CHECK_NOTHROW(validate_scenario(game(8, 4, {1.2, 1.0, 0.8})));
  CHECK(code_of([] { validate_scenario(game(8, 9)); }) == ErrorCode::InvalidThreshold);
  CHECK(code_of([] { validate_scenario(game(8, 0)); }) == ErrorCode::InvalidThreshold);
  CHECK(code_of([] { incentive_ratio({1.2, 1.0, 1.0}); }) == ErrorCode::InvalidRewardOrder);

  // Every violated invariant is reported, not only the first.
  try {
    validate_scenario(game(8, 9, {1.0, 1.0, 1.0}));
    FAIL("expected ValidationFailure");
  } catch (const ValidationFailure& e) {
    CHECK(e.has(ErrorCode::InvalidThreshold));
    CHECK(e.has(ErrorCode::InvalidRewardOrder));
    CHECK(e.issues().size() >= 2);
  }
}

TEST_CASE("role-play and tool validation") {
  RolePlayScenario s;
  s.aligned_label = "Route B";
  s.deviant_label = "Route A";
  CHECK_NOTHROW(validate_scenario(s));
  s.deviant_label = "Route B";
  CHECK(code_of([&] { validate_scenario(s); }) == ErrorCode::DuplicateLabels);
  s.deviant_label = "Route A";
  s.p_detect = 1.5;
  CHECK(code_of([&] { validate_scenario(s); }) == ErrorCode::InvalidProbability);

  s.p_detect = 0.0;
  s.deviant_reward = 11.0;
  CHECK(validate_scenario(s).warnings().size() == 1);

  ToolTaskModel m;
  CHECK_NOTHROW(validate_scenario(m));
  m.q_direct_complex = -0.1;
  CHECK(code_of([&] { validate_scenario(m); }) == ErrorCode::InvalidProbability);
}

TEST_CASE("incentive ratio on the published tuples") {
  CHECK(incentive_ratio({1.2, 1.0, 0.2}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(incentive_ratio({1.2, 1.0, 0.6}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(incentive_ratio({1.2, 1.0, 0.8}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(incentive_ratio({1.4, 1.0, 0.8}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(incentive_ratio({1.8, 1.0, 0.8}) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("tuple_for_k") {
  CHECK(tuple_for_k(0.5) == RewardTuple{1.2, 1.0, 0.6});
  CHECK(tuple_for_k(2) == RewardTuple{1.4, 1.0, 0.8});
  CHECK(tuple_for_k(1) == RewardTuple{1.2, 1.0, 0.8});
  CHECK(tuple_for_k(0.25) == RewardTuple{1.2, 1.0, 0.2});
  CHECK(tuple_for_k(4) == RewardTuple{1.8, 1.0, 0.8});
  CHECK(code_of([] { tuple_for_k(0.0); }) == ErrorCode::NonPositiveK);
  CHECK(code_of([] { tuple_for_k(-1.0); }) == ErrorCode::NonPositiveK);

  // Round trip on random k, both branches.
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> log_k(std::log(0.3), std::log(10.0));
  for (int i = 0; i < 100; ++i) {
    const double k = std::exp(log_k(gen));
    const auto tuple = tuple_for_k(k);
    CHECK(incentive_ratio(tuple) == doctest::Approx(k).epsilon(1e-9));
    CHECK(check(tuple).empty());
  }
}

TEST_CASE("incentive ratio is invariant under positive affine maps") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double lo = u(gen), mid = lo + u(gen), hi = mid + u(gen);
    const double a = u(gen), b = u(gen);
    const double k = incentive_ratio({hi, mid, lo});
    CHECK(incentive_ratio({a * hi + b, a * mid + b, a * lo + b}) ==
          doctest::Approx(k).epsilon(1e-9));
  }
}

TEST_CASE("histories only grow by the next round") {
  History h;
  h.append({1, {Role::Aligned, "Route B"}, {12.0, "", false, {}, {}}});
  CHECK(code_of([&] { h.append({3, {}, {}}); }) == ErrorCode::HistoryLengthMismatch);
  CHECK(h.size() == 1);

  GlobalHistory g;
  RoundRecord r;
  r.round = 2;
  CHECK(code_of([&] { g.append(r); }) == ErrorCode::HistoryLengthMismatch);
}

TEST_CASE("label maps") {
  const auto labels = labels_of(CoordinationGameSpec{});
  CHECK(labels.role_of("invest") == Role::Deviant);
  CHECK(labels.role_of("keep money") == Role::Aligned);
  CHECK(code_of([&] { labels.role_of("INVEST"); }) == ErrorCode::UnknownLabel);
  const auto tools = labels_of(ToolTaskModel{});
  CHECK(tools.role_of("tool") == Role::Aligned);
  CHECK(tools.role_of("direct") == Role::Deviant);
}

TEST_CASE("scenario json is strict and round-trips") {
  const auto doc = nlohmann::json::parse(R"({
    "n": 8, "t": 4, "rewards": {"r_high": 1.2, "r_normal": 1.0, "r_low": 0.8}, "r_max": 3})");
  const auto g = coordination_from_json(doc);
  CHECK(g == game(8, 4));
  CHECK(coordination_from_json(to_json(g)) == g);

  auto extra = doc;
  extra["foo"] = 1;
  try {
    coordination_from_json(extra);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("foo") != std::string::npos);
  }
  auto wrong_type = doc;
  wrong_type["t"] = "4";
  CHECK(code_of([&] { coordination_from_json(wrong_type); }) == ErrorCode::ParseError);

  const auto taxi = role_play_from_json(load_json_file(TIPPING_SOURCE_DIR "/scenarios/taxi.json"));
  CHECK(taxi.aligned_label == "Route B");
  CHECK(taxi.deviant_reward == 13.0);
  CHECK(role_play_from_json(to_json(taxi)) == taxi);

  ToolTaskModel m;
  m.n_complex_eval = 17;
  CHECK(tool_model_from_json(to_json(m)) == m);

  CHECK(code_of([] { parse_json_text("{\"a\": }", "inline"); }) == ErrorCode::ParseError);
}
