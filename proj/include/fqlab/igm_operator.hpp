#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

namespace detail {

/// Exact Bellman optimality image of a joint table.
inline JointQ bellman_image(const LatentMmdp& env, const JointQ& q) {
  const JointActionIndex& ja = env.joint_actions();
  JointQ out = JointQ::zeros(env);
  std::vector<double> best(static_cast<std::size_t>(env.num_states()));
  for (int s = 0; s < env.num_states(); ++s) best[static_cast<std::size_t>(s)] = q.max_value(s);
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double future = 0.0;
      for (int s2 = 0; s2 < env.num_states(); ++s2)
        future += env.transition(s, j, s2) * best[static_cast<std::size_t>(s2)];
      out.set_value(s, j, env.reward(s, j) + env.discount() * future);
    }
  }
  return out;
}

}  // namespace detail

/// One fitted iteration over the complete factorization class.
///
/// Because the class contains every joint table, the regression fits the
/// one-step target exactly and the update coincides with the Bellman
/// optimality operator. The distribution enters only through its support,
/// which must be full: a zero-mass (state, joint action) would leave that
/// target unconstrained.
inline JointQ igm_iterate(const LatentMmdp& env, const JointDistribution& dist, const JointQ& q) {
  if (dist.num_states() != env.num_states() || dist.num_agents() != env.num_agents() ||
      dist.num_actions() != env.num_actions())
    throw std::invalid_argument("igm_iterate: distribution shape does not match the environment");
  if (q.num_states() != env.num_states() || q.joint_actions().count() != env.joint_actions().count())
    throw std::invalid_argument("igm_iterate: table shape does not match the environment");
  for (int s = 0; s < env.num_states(); ++s)
    for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
      if (!(dist.prob(s, j) > 0.0))
        throw std::invalid_argument("igm_iterate: data must be exploratory, but joint action " +
                                    std::to_string(j) + " has zero mass at state " + std::to_string(s));
  return detail::bellman_image(env, q);
}

/// Indicator decomposition of a joint table.
///
/// Per state, agents receive value 1 on their component of the
/// lexicographically-first joint argmax and 0 elsewhere. The result
/// selects the same joint action as the input table.
inline FactoredQ igm_decompose(const JointQ& q) {
  FactoredQ f(q.num_agents(), std::vector<int>(static_cast<std::size_t>(q.num_agents()), q.num_states()),
              q.num_actions());
  const JointActionIndex& ja = q.joint_actions();
  for (int s = 0; s < q.num_states(); ++s) {
    const std::int64_t best = q.lex_argmax(s);
    for (int i = 0; i < q.num_agents(); ++i) f.set_value(i, s, ja.digit(best, i), 1.0);
  }
  return f;
}

/// Result of the greedy-consistency test; `state` locates the first
/// mismatch when `consistent` is false.
struct IgmCheckResult {
  bool consistent = true;
  int state = -1;
};

/// True iff at every state the joint argmax of `q` (lexicographic
/// tie-break) equals the tuple of individual argmaxes of `f` (lowest
/// index per agent).
inline IgmCheckResult igm_check(const JointQ& q, const FactoredQ& f) {
  if (f.num_agents() != q.num_agents() || f.num_actions() != q.num_actions())
    throw std::invalid_argument("igm_check: table shapes do not match");
  for (int i = 0; i < f.num_agents(); ++i)
    if (f.obs_count(i) != q.num_states())
      throw std::invalid_argument("igm_check: observation counts do not match the state count");
  const JointActionIndex& ja = q.joint_actions();
  for (int s = 0; s < q.num_states(); ++s) {
    std::vector<int> individual(static_cast<std::size_t>(f.num_agents()));
    for (int i = 0; i < f.num_agents(); ++i) individual[static_cast<std::size_t>(i)] = f.greedy_action(i, s);
    if (ja.encode(individual) != q.lex_argmax(s)) return IgmCheckResult{false, s};
  }
  return IgmCheckResult{};
}

struct ValueIterationResult {
  JointQ q;
  int iterations = 0;
};

/// Iterates the Bellman optimality operator from zero until the sup-norm
/// step falls to `tolerance`. A hard cap derived from the contraction
/// rate bounds the loop; the returned table's own Bellman residual is at
/// most `tolerance`.
inline ValueIterationResult value_iteration(const LatentMmdp& env, double tolerance) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("value_iteration: tolerance must be positive");
  const double gamma = env.discount();
  const double r_max = env.r_max();

  int cap = 1;
  if (r_max > 0.0 && gamma > 0.0) {
    const double ratio = tolerance * (1.0 - gamma) / r_max;
    if (ratio < 1.0) cap = static_cast<int>(std::ceil(std::log(ratio) / std::log(gamma)));
  }
  if (gamma == 0.0) cap = 2;  // image is constant after one application
  if (cap < 1) cap = 1;

  ValueIterationResult result{JointQ::zeros(env), 0};
  for (int t = 0; t < cap; ++t) {
    JointQ next = detail::bellman_image(env, result.q);
    const double step = next.sup_distance(result.q);
    result.q = std::move(next);
    ++result.iterations;
    if (step <= tolerance) break;
  }
  return result;
}

}  // namespace fqlab
