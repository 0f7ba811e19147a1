#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/igm_operator.hpp"
#include "fqlab/rng.hpp"
#include "fqlab/value_tables.hpp"

using namespace fqlab;

namespace {

JointQ random_joint(const LatentMmdp& env, Rng& rng, double scale = 1.0) {
  JointQ q = JointQ::zeros(env);
  for (int s = 0; s < env.num_states(); ++s)
    for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
      q.set_value(s, j, rng.uniform(-scale, scale));
  return q;
}

}  // namespace

TEST_CASE("complete factorization iterates to the optimal fixed point") {
  LatentMmdp env = two_state_env(0.9);
  JointDistribution dist = uniform_distribution(env);
  JointQ q = JointQ::zeros(env);
  for (int t = 0; t < 400; ++t) q = igm_iterate(env, dist, q);
  JointActionIndex ja(2, 2);
  REQUIRE(q.value(1, ja.encode({0, 0})) == Catch::Approx(10.0).margin(1e-6));
  REQUIRE(q.value(1, ja.encode({0, 1})) == Catch::Approx(9.0).margin(1e-6));
  REQUIRE(q.value(1, ja.encode({1, 0})) == Catch::Approx(9.0).margin(1e-6));
  REQUIRE(q.value(1, ja.encode({1, 1})) == Catch::Approx(0.0).margin(1e-6));
  for (std::int64_t j = 0; j < 4; ++j) REQUIRE(q.value(0, j) == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(q.lex_argmax(1) == ja.encode({0, 0}));
}

TEST_CASE("the complete operator is a gamma contraction") {
  Rng rng(4242);
  LatentMmdp env = random_mmdp(88, 2, 3, 2, 0.8);
  JointDistribution dist = uniform_distribution(env);
  for (int pair = 0; pair < 1000; ++pair) {
    JointQ a = random_joint(env, rng, 2.0);
    JointQ b = random_joint(env, rng, 2.0);
    const double before = a.sup_distance(b);
    if (before < 1e-12) continue;
    JointQ ta = igm_iterate(env, dist, a);
    JointQ tb = igm_iterate(env, dist, b);
    REQUIRE(ta.sup_distance(tb) <= 0.8 * before + 1e-12);
  }
}

TEST_CASE("distance to the fixed point decays monotonically") {
  LatentMmdp env = two_state_env(0.9);
  JointDistribution dist = uniform_distribution(env);
  ValueIterationResult vi = value_iteration(env, 1e-12);
  Rng rng(7);
  JointQ q = random_joint(env, rng, 5.0);
  double dist_to_star = q.sup_distance(vi.q);
  for (int t = 0; t < 50; ++t) {
    q = igm_iterate(env, dist, q);
    const double next_dist = q.sup_distance(vi.q);
    REQUIRE(next_dist <= 0.9 * dist_to_star + 1e-9);
    dist_to_star = next_dist;
  }
}

TEST_CASE("the operator needs every joint action represented") {
  LatentMmdp env = two_state_env(0.9);
  JointDistribution diagonal = eta_mixture(env, 1.0);  // off-diagonal mass is zero
  try {
    igm_iterate(env, diagonal, JointQ::zeros(env));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& err) {
    REQUIRE(std::string(err.what()).find("exploratory") != std::string::npos);
  }
}

TEST_CASE("indicator decomposition realizes the greedy policy") {
  LatentMmdp env = two_state_env(0.9);
  Rng rng(15);
  JointQ q = random_joint(env, rng, 3.0);
  FactoredQ f = igm_decompose(q);
  REQUIRE(igm_check(q, f).consistent);
  JointActionIndex ja(2, 2);
  for (int s = 0; s < 2; ++s) {
    std::vector<int> greedy(2);
    for (int i = 0; i < 2; ++i) greedy[static_cast<std::size_t>(i)] = f.greedy_action(i, s);
    REQUIRE(ja.encode(greedy) == q.lex_argmax(s));
  }
}

TEST_CASE("decomposition is invariant to positive rescaling of the joint table") {
  LatentMmdp env = two_state_env(0.9);
  Rng rng(16);
  JointQ q = random_joint(env, rng, 3.0);
  JointQ scaled = JointQ::zeros(env);
  for (int s = 0; s < 2; ++s)
    for (std::int64_t j = 0; j < 4; ++j) scaled.set_value(s, j, 2.5 * q.value(s, j));
  FactoredQ a = igm_decompose(q);
  FactoredQ b = igm_decompose(scaled);
  for (int i = 0; i < 2; ++i)
    for (int s = 0; s < 2; ++s)
      for (int act = 0; act < 2; ++act) REQUIRE(a.value(i, s, act) == b.value(i, s, act));
}

TEST_CASE("consistency check flags mismatched factored argmaxes") {
  LatentMmdp env = two_state_env(0.9);
  JointQ q = JointQ::zeros(env);
  JointActionIndex ja(2, 2);
  q.set_value(1, ja.encode({0, 0}), 5.0);  // joint argmax at state 1 is (0,0)
  FactoredQ f = FactoredQ::zeros(env);
  f.set_value(0, 1, 1, 1.0);  // agent 0 prefers action 1 there
  IgmCheckResult res = igm_check(q, f);
  REQUIRE_FALSE(res.consistent);
  REQUIRE(res.state == 1);
}

TEST_CASE("additive tables always pass the consistency check") {
  // The factored class realizes per-agent argmaxes that agree with the
  // joint argmax of the summed table, so membership is automatic.
  Rng rng(77);
  LatentMmdp env = random_mmdp(5, 3, 2, 3, 0.7);
  JointActionIndex ja(3, 3);
  for (int trial = 0; trial < 25; ++trial) {
    FactoredQ f = FactoredQ::zeros(env);
    for (int i = 0; i < 3; ++i)
      for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 3; ++a) f.set_value(i, s, a, rng.uniform(-1.0, 1.0));
    JointQ tot = JointQ::zeros(env);
    for (int s = 0; s < 2; ++s)
      for (std::int64_t j = 0; j < ja.count(); ++j) tot.set_value(s, j, f.q_tot(s, ja, j));
    REQUIRE(igm_check(tot, f).consistent);
  }
}

TEST_CASE("value iteration hits the analytic fixed point of the two-state env") {
  ValueIterationResult vi = value_iteration(two_state_env(0.9), 1e-10);
  JointActionIndex ja(2, 2);
  REQUIRE(vi.q.max_value(1) == Catch::Approx(10.0).margin(1e-8));
  REQUIRE(vi.q.max_value(0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(vi.q.lex_argmax(1) == ja.encode({0, 0}));
  REQUIRE(vi.iterations >= 1);
}

TEST_CASE("value iteration halts immediately under a huge tolerance") {
  LatentMmdp env = two_state_env(0.9);
  ValueIterationResult vi = value_iteration(env, env.value_bound());
  REQUIRE(vi.iterations <= 1);
}

TEST_CASE("value iteration of a one-shot game needs at most two sweeps") {
  ValueIterationResult vi = value_iteration(matrix_game_env(), 1e-12);
  REQUIRE(vi.iterations <= 2);
  JointActionIndex ja(2, 3);
  REQUIRE(vi.q.value(0, ja.encode({0, 0})) == 8.0);
  REQUIRE(vi.q.lex_argmax(0) == ja.encode({0, 0}));
}

TEST_CASE("returned tables have Bellman residual within tolerance") {
  for (std::uint64_t seed : {3ull, 4ull, 5ull}) {
    LatentMmdp env = random_mmdp(seed, 2, 4, 3, 0.85);
    ValueIterationResult vi = value_iteration(env, 1e-9);
    JointQ image = detail::bellman_image(env, vi.q);
    REQUIRE(image.sup_distance(vi.q) <= 1e-9);
  }
}

TEST_CASE("value iteration validates its tolerance") {
  REQUIRE_THROWS_AS(value_iteration(two_state_env(0.9), 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(value_iteration(two_state_env(0.9), -1.0), std::invalid_argument);
}

TEST_CASE("lexicographic argmax compares agent zero first") {
  LatentMmdp env = two_state_env(0.9);
  JointQ q = JointQ::zeros(env);
  JointActionIndex ja(2, 2);
  // Tie between (1,0) and (0,1): tuple order must prefer (0,1) because
  // agent 0's action compares first.
  q.set_value(1, ja.encode({1, 0}), 7.0);
  q.set_value(1, ja.encode({0, 1}), 7.0);
  REQUIRE(q.lex_argmax(1) == ja.encode({0, 1}));
}
