#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fqlab/env_model.hpp"
#include "fqlab/rng.hpp"

using namespace fqlab;

TEST_CASE("joint action index round trips exhaustively") {
  // Every (n, m) with m^n <= 4096 at small n keeps the check cheap.
  for (int n = 1; n <= 4; ++n) {
    for (int m = 2; m <= 3; ++m) {
      JointActionIndex ja(n, m);
      REQUIRE(ja.count() == static_cast<std::int64_t>(std::llround(std::pow(m, n))));
      for (std::int64_t j = 0; j < ja.count(); ++j) {
        std::vector<int> digits(static_cast<std::size_t>(n));
        for (int u = 0; u < n; ++u) digits[static_cast<std::size_t>(u)] = ja.digit(j, u);
        REQUIRE(ja.encode(digits) == j);
        auto decoded = ja.decode(j);
        REQUIRE(decoded == digits);
      }
    }
  }
}

TEST_CASE("agent zero is the least significant digit") {
  JointActionIndex ja(2, 3);
  // Flat index advances fastest along agent 0.
  REQUIRE(ja.digit(1, 0) == 1);
  REQUIRE(ja.digit(1, 1) == 0);
  REQUIRE(ja.digit(3, 0) == 0);
  REQUIRE(ja.digit(3, 1) == 1);
  REQUIRE(ja.encode({2, 1}) == 5);
}

TEST_CASE("replace swaps one digit and keeps the rest") {
  JointActionIndex ja(3, 3);
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    for (int u = 0; u < 3; ++u) {
      for (int v = 0; v < 3; ++v) {
        const std::int64_t j2 = ja.replace(j, u, v);
        REQUIRE(ja.digit(j2, u) == v);
        for (int other = 0; other < 3; ++other)
          if (other != u) REQUIRE(ja.digit(j2, other) == ja.digit(j, other));
      }
    }
  }
}

TEST_CASE("two-state environment matches its published tensors") {
  LatentMmdp env = two_state_env(0.9);
  REQUIRE(env.num_agents() == 2);
  REQUIRE(env.num_states() == 2);
  REQUIRE(env.num_actions() == 2);
  REQUIRE(env.discount() == Catch::Approx(0.9));
  JointActionIndex ja(2, 2);

  // State 0 absorbs with zero reward under every joint action.
  for (std::int64_t j = 0; j < 4; ++j) {
    REQUIRE(env.reward(0, j) == 0.0);
    REQUIRE(env.transition(0, j, 0) == 1.0);
    REQUIRE(env.transition(0, j, 1) == 0.0);
  }
  // State 1: both-first pays 1 and stays; both-second exits to state 0.
  REQUIRE(env.reward(1, ja.encode({0, 0})) == 1.0);
  REQUIRE(env.reward(1, ja.encode({0, 1})) == 0.0);
  REQUIRE(env.reward(1, ja.encode({1, 0})) == 0.0);
  REQUIRE(env.reward(1, ja.encode({1, 1})) == 0.0);
  REQUIRE(env.transition(1, ja.encode({0, 0}), 1) == 1.0);
  REQUIRE(env.transition(1, ja.encode({0, 1}), 1) == 1.0);
  REQUIRE(env.transition(1, ja.encode({1, 0}), 1) == 1.0);
  REQUIRE(env.transition(1, ja.encode({1, 1}), 0) == 1.0);

  REQUIRE(env.r_max() == 1.0);
  REQUIRE(env.value_bound() == Catch::Approx(10.0));
  REQUIRE(validate(env).ok());
}

TEST_CASE("matrix game environment pays 8 / -12 / 0") {
  LatentMmdp env = matrix_game_env();
  REQUIRE(env.num_states() == 1);
  REQUIRE(env.num_actions() == 3);
  REQUIRE(env.discount() == 0.0);
  JointActionIndex ja(2, 3);
  for (int a0 = 0; a0 < 3; ++a0) {
    for (int a1 = 0; a1 < 3; ++a1) {
      const double r = env.reward(0, ja.encode({a0, a1}));
      if (a0 == 0 && a1 == 0)
        REQUIRE(r == 8.0);
      else if (a0 == 0 || a1 == 0)
        REQUIRE(r == -12.0);
      else
        REQUIRE(r == 0.0);
    }
  }
  REQUIRE(validate(env).ok());
}

TEST_CASE("validation flags broken tensors") {
  LatentMmdp env = two_state_env(0.9);
  env.set_transition(1, 0, 0, 0.25);  // row no longer sums to one
  ValidationReport report = validate(env);
  REQUIRE_FALSE(report.ok());
  REQUIRE_FALSE(report.violations.empty());
}

TEST_CASE("discount override keeps tensors and changes gamma") {
  LatentMmdp env = two_state_env(0.9);
  LatentMmdp slow = env.with_discount(0.5);
  REQUIRE(slow.discount() == 0.5);
  REQUIRE(slow.reward(1, 0) == env.reward(1, 0));
  REQUIRE(slow.value_bound() == Catch::Approx(2.0));
  REQUIRE_THROWS_AS(env.with_discount(1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(env.with_discount(-0.1), std::invalid_argument);
}

TEST_CASE("random environments are valid and deterministic in the seed") {
  for (std::uint64_t seed : {1ull, 2ull, 77ull}) {
    LatentMmdp a = random_mmdp(seed, 3, 4, 3, 0.8);
    LatentMmdp b = random_mmdp(seed, 3, 4, 3, 0.8);
    REQUIRE(validate(a).ok());
    JointActionIndex ja(3, 3);
    for (int s = 0; s < 4; ++s)
      for (std::int64_t j = 0; j < ja.count(); ++j) {
        REQUIRE(a.reward(s, j) == b.reward(s, j));
        for (int s2 = 0; s2 < 4; ++s2) REQUIRE(a.transition(s, j, s2) == b.transition(s, j, s2));
      }
    LatentMmdp c = random_mmdp(seed + 1, 3, 4, 3, 0.8);
    bool any_differs = false;
    for (std::int64_t j = 0; j < ja.count() && !any_differs; ++j)
      if (a.reward(0, j) != c.reward(0, j)) any_differs = true;
    REQUIRE(any_differs);
  }
}

TEST_CASE("identity observation layer round trips states") {
  LatentMmdp env = two_state_env(0.9);
  RichObservationLayer layer = RichObservationLayer::identity(env);
  REQUIRE(validate(env, &layer).ok());
  for (int i = 0; i < 2; ++i) {
    for (int s = 0; s < 2; ++s) {
      REQUIRE(layer.emission(i, s, s) == 1.0);
      REQUIRE(layer.decode(i, s) == s);
      REQUIRE(layer.support(i, s) == std::vector<int>{s});
    }
  }
}

TEST_CASE("observation layers with overlapping supports are rejected") {
  LatentMmdp env = two_state_env(0.9);
  RichObservationLayer layer(2, 2, {2, 2});
  // Agent 0 emits observation 0 in both states: supports overlap.
  layer.set_emission(0, 0, 0, 1.0);
  layer.set_emission(0, 1, 0, 1.0);
  layer.set_emission(1, 0, 0, 1.0);
  layer.set_emission(1, 1, 1, 1.0);
  ValidationReport report = validate(env, &layer);
  REQUIRE_FALSE(report.ok());
}

TEST_CASE("wider observation layers decode through disjoint supports") {
  LatentMmdp env = two_state_env(0.9);
  RichObservationLayer layer(2, 2, {3, 2});
  // Agent 0 splits state 1 across two observations.
  layer.set_emission(0, 0, 0, 1.0);
  layer.set_emission(0, 1, 1, 0.5);
  layer.set_emission(0, 1, 2, 0.5);
  layer.set_emission(1, 0, 0, 1.0);
  layer.set_emission(1, 1, 1, 1.0);
  REQUIRE(validate(env, &layer).ok());
  REQUIRE(layer.decode(0, 1) == 1);
  REQUIRE(layer.decode(0, 2) == 1);
  REQUIRE(layer.support(0, 1) == std::vector<int>({1, 2}));
  REQUIRE_THROWS_AS(RichObservationLayer(2, 2, {1, 2}).decode(0, 0), std::invalid_argument);
}

TEST_CASE("deterministic rng produces identical streams per seed") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int k = 0; k < 64; ++k) {
    const double x = a.unit();
    if (x != b.unit()) all_equal = false;
    if (x != c.unit()) any_diff = true;
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  REQUIRE(all_equal);
  REQUIRE(any_diff);
  REQUIRE(derive_seed(9, 1) != derive_seed(9, 2));
  REQUIRE(derive_seed(9, 1) == derive_seed(9, 1));
}
