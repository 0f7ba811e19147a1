#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/lstsq_oracle.hpp"
#include "fqlab/rng.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

namespace detail {

/// Applies `fn(obs_tuple, probability)` to every joint observation with
/// positive emission mass at `state`. A null layer means the identity
/// layer, whose single tuple is (state, ..., state).
inline void for_each_joint_obs(const LatentMmdp& env, const RichObservationLayer* layer, int state,
                               const std::function<void(const std::vector<int>&, double)>& fn) {
  const int n = env.num_agents();
  if (layer == nullptr) {
    fn(std::vector<int>(static_cast<std::size_t>(n), state), 1.0);
    return;
  }
  std::vector<std::vector<int>> supports(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    supports[static_cast<std::size_t>(i)] = layer->support(i, state);
    if (supports[static_cast<std::size_t>(i)].empty())
      throw std::invalid_argument("observation layer leaves agent " + std::to_string(i) +
                                  " blind at state " + std::to_string(state));
  }
  std::vector<int> cursor(static_cast<std::size_t>(n), 0);
  std::vector<int> tuple(static_cast<std::size_t>(n));
  while (true) {
    double p = 1.0;
    for (int i = 0; i < n; ++i) {
      tuple[static_cast<std::size_t>(i)] =
          supports[static_cast<std::size_t>(i)][static_cast<std::size_t>(cursor[static_cast<std::size_t>(i)])];
      p *= layer->emission(i, state, tuple[static_cast<std::size_t>(i)]);
    }
    fn(tuple, p);
    int i = n - 1;
    while (i >= 0 &&
           cursor[static_cast<std::size_t>(i)] + 1 ==
               static_cast<int>(supports[static_cast<std::size_t>(i)].size())) {
      cursor[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++cursor[static_cast<std::size_t>(i)];
  }
}

/// Expected best joint value at each state under the current tables:
/// E over emitted observations of max_a q_tot.
inline std::vector<double> expected_max_per_state(const LatentMmdp& env, const RichObservationLayer* layer,
                                                  const FactoredQ& q) {
  const JointActionIndex& ja = env.joint_actions();
  std::vector<double> out(static_cast<std::size_t>(env.num_states()), 0.0);
  for (int s = 0; s < env.num_states(); ++s) {
    double expectation = 0.0;
    for_each_joint_obs(env, layer, s, [&](const std::vector<int>& obs, double p) {
      double best = q.q_tot(obs, ja, 0);
      for (std::int64_t j = 1; j < ja.count(); ++j) best = std::max(best, q.q_tot(obs, ja, j));
      expectation += p * best;
    });
    out[static_cast<std::size_t>(s)] = expectation;
  }
  return out;
}

inline void check_dist_shape(const LatentMmdp& env, const JointDistribution& dist, const char* who) {
  if (dist.num_states() != env.num_states() || dist.num_agents() != env.num_agents() ||
      dist.num_actions() != env.num_actions())
    throw std::invalid_argument(std::string(who) + ": distribution shape does not match the environment");
}

inline void check_target_shape(const LatentMmdp& env, const TargetTable& target, const char* who) {
  if (target.num_states() != env.num_states() ||
      target.joint_actions().count() != env.joint_actions().count())
    throw std::invalid_argument(std::string(who) + ": target shape does not match the environment");
}

/// Guards of the closed form: the weights must be a strictly positive
/// product distribution. Anything else must go through the numeric path.
inline void check_closed_form_preconditions(const LatentMmdp& env, const JointDistribution& dist,
                                            const char* who) {
  check_dist_shape(env, dist, who);
  const auto bad = dist.violations();
  if (!bad.empty()) throw std::invalid_argument(std::string(who) + ": " + bad.front());
  const FactorizationCheck check = is_factorized(dist);
  if (!check.factorized)
    throw std::invalid_argument(std::string(who) +
                                ": distribution is not a product of per-agent marginals "
                                "(worst deviation " +
                                std::to_string(check.violation) + " at state " + std::to_string(check.state) +
                                "); use the numeric solver path");
  for (int s = 0; s < env.num_states(); ++s) {
    for (int i = 0; i < env.num_agents(); ++i) {
      const auto marginal = dist.marginal(s, i);
      for (int a = 0; a < env.num_actions(); ++a) {
        if (!(marginal[static_cast<std::size_t>(a)] > 0.0))
          throw std::invalid_argument(std::string(who) + ": data must be exploratory, but action " +
                                      std::to_string(a) + " of agent " + std::to_string(i) +
                                      " has zero mass at state " + std::to_string(s));
      }
    }
  }
}

}  // namespace detail

/// One-step regression targets from the current tables:
/// y(s, a) = r(s, a) + gamma * sum_s' P(s'|s, a) E[max_a' q_tot at s'].
/// Pass a layer to take the inner expectation over emitted observations;
/// omit it for the identity layer.
inline TargetTable bellman_target(const LatentMmdp& env, const RichObservationLayer& layer,
                                  const FactoredQ& q) {
  const JointActionIndex& ja = env.joint_actions();
  const std::vector<double> best_next = detail::expected_max_per_state(env, &layer, q);
  TargetTable target = TargetTable::zeros(env);
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double future = 0.0;
      for (int s2 = 0; s2 < env.num_states(); ++s2)
        future += env.transition(s, j, s2) * best_next[static_cast<std::size_t>(s2)];
      target.set_value(s, j, env.reward(s, j) + env.discount() * future);
    }
  }
  return target;
}

inline TargetTable bellman_target(const LatentMmdp& env, const FactoredQ& q) {
  const JointActionIndex& ja = env.joint_actions();
  const std::vector<double> best_next = detail::expected_max_per_state(env, nullptr, q);
  TargetTable target = TargetTable::zeros(env);
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double future = 0.0;
      for (int s2 = 0; s2 < env.num_states(); ++s2)
        future += env.transition(s, j, s2) * best_next[static_cast<std::size_t>(s2)];
      target.set_value(s, j, env.reward(s, j) + env.discount() * future);
    }
  }
  return target;
}

namespace detail {

inline FactoredQ lvf_project_impl(const LatentMmdp& env, const RichObservationLayer* layer,
                                  const JointDistribution& dist, const TargetTable& target,
                                  const ResidueSpec* residue) {
  detail::check_closed_form_preconditions(env, dist, "lvf_project");
  detail::check_target_shape(env, target, "lvf_project");
  if (residue != nullptr) {
    const auto bad = residue->violations(env, layer);
    if (!bad.empty()) throw std::invalid_argument("lvf_project: invalid residue: " + bad.front());
  }

  const JointActionIndex& ja = env.joint_actions();
  const int n = env.num_agents();
  const int m = env.num_actions();
  const double weight = static_cast<double>(n - 1) / n;

  // Per state: counterfactual evaluation per (agent, action) and the
  // weighted mean target. Values attach to observations through decode.
  std::vector<std::vector<double>> core(static_cast<std::size_t>(env.num_states()));
  for (int s = 0; s < env.num_states(); ++s) {
    std::vector<double> slot(static_cast<std::size_t>(n * m), 0.0);
    double total = 0.0;
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      const double pb = dist.prob(s, j) * target.value(s, j);
      total += pb;
      for (int u = 0; u < n; ++u) slot[static_cast<std::size_t>(u * m + ja.digit(j, u))] += pb;
    }
    core[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(n * m), 0.0);
    for (int u = 0; u < n; ++u) {
      const auto marginal = dist.marginal(s, u);
      for (int v = 0; v < m; ++v)
        core[static_cast<std::size_t>(s)][static_cast<std::size_t>(u * m + v)] =
            slot[static_cast<std::size_t>(u * m + v)] / marginal[static_cast<std::size_t>(v)] - weight * total;
    }
  }

  std::vector<int> obs_counts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    obs_counts[static_cast<std::size_t>(i)] = layer == nullptr ? env.num_states() : layer->obs_count(i);
  FactoredQ q(n, obs_counts, m);
  for (int i = 0; i < n; ++i) {
    for (int x = 0; x < q.obs_count(i); ++x) {
      const int s = layer == nullptr ? x : layer->decode(i, x);
      const double shift = residue == nullptr ? 0.0 : residue->value(i, x);
      for (int v = 0; v < m; ++v)
        q.set_value(i, x, v, core[static_cast<std::size_t>(s)][static_cast<std::size_t>(i * m + v)] + shift);
    }
  }
  return q;
}

}  // namespace detail

/// Closed-form projection of a target table onto the additive class.
///
/// Requires a strictly positive product distribution. The joint table of
/// the result is the unique distribution-weighted least-squares optimum;
/// the split across agents uses the counterfactual parameterization with
/// the residue added on top (zero when omitted).
inline FactoredQ lvf_project(const LatentMmdp& env, const JointDistribution& dist, const TargetTable& target) {
  return detail::lvf_project_impl(env, nullptr, dist, target, nullptr);
}

inline FactoredQ lvf_project(const LatentMmdp& env, const JointDistribution& dist, const TargetTable& target,
                             const ResidueSpec& residue) {
  return detail::lvf_project_impl(env, nullptr, dist, target, &residue);
}

inline FactoredQ lvf_project(const LatentMmdp& env, const RichObservationLayer& layer,
                             const JointDistribution& dist, const TargetTable& target,
                             const ResidueSpec& residue) {
  return detail::lvf_project_impl(env, &layer, dist, target, &residue);
}

/// Numeric projection: per state, the minimum-norm weighted least-squares
/// fit over the encoding matrix. Handles any nonnegative weights, in
/// particular non-product tables and zero-mass joint actions; entries off
/// the support follow the minimum-norm convention. Identity layer.
inline FactoredQ lvf_project_numeric(const LatentMmdp& env, const JointDistribution& dist,
                                     const TargetTable& target) {
  detail::check_dist_shape(env, dist, "lvf_project_numeric");
  detail::check_target_shape(env, target, "lvf_project_numeric");
  const int n = env.num_agents();
  const int m = env.num_actions();
  const EncodingMatrix A(n, m);
  FactoredQ q = FactoredQ::zeros(env);
  for (int s = 0; s < env.num_states(); ++s) {
    WlsInstance inst;
    inst.weights.resize(static_cast<std::size_t>(A.rows()));
    inst.targets.resize(static_cast<std::size_t>(A.rows()));
    for (std::int64_t j = 0; j < A.rows(); ++j) {
      inst.weights[static_cast<std::size_t>(j)] = dist.prob(s, j);
      inst.targets[static_cast<std::size_t>(j)] = target.value(s, j);
    }
    const WlsSolution solution = weighted_lstsq_solve(inst, A);
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < m; ++v) q.set_value(u, s, v, solution.x[static_cast<std::size_t>(u * m + v)]);
  }
  return q;
}

/// One operator application: project the one-step targets of `q`.
inline FactoredQ lvf_iterate(const LatentMmdp& env, const JointDistribution& dist, const FactoredQ& q) {
  return lvf_project(env, dist, bellman_target(env, q));
}

inline FactoredQ lvf_iterate(const LatentMmdp& env, const JointDistribution& dist, const FactoredQ& q,
                             const ResidueSpec& residue) {
  return lvf_project(env, dist, bellman_target(env, q), residue);
}

inline FactoredQ lvf_iterate(const LatentMmdp& env, const RichObservationLayer& layer,
                             const JointDistribution& dist, const FactoredQ& q, const ResidueSpec& residue) {
  return lvf_project(env, layer, dist, bellman_target(env, layer, q), residue);
}

/// The two terms and the coefficient behind one projected entry:
/// Q_i = evaluation - weight * baseline + residue.
struct CreditTerms {
  double evaluation = 0.0;  // expected target when agent i fixes its action
  double baseline = 0.0;    // expected target under the data distribution
  double weight = 0.0;      // (n - 1) / n
};

inline CreditTerms credit_decomposition(const LatentMmdp& env, const JointDistribution& dist,
                                        const TargetTable& target, int agent, int state, int action) {
  detail::check_closed_form_preconditions(env, dist, "credit_decomposition");
  detail::check_target_shape(env, target, "credit_decomposition");
  if (agent < 0 || agent >= env.num_agents())
    throw std::invalid_argument("credit_decomposition: agent index out of range");
  if (action < 0 || action >= env.num_actions())
    throw std::invalid_argument("credit_decomposition: action index out of range");
  const JointActionIndex& ja = env.joint_actions();
  CreditTerms terms;
  terms.weight = static_cast<double>(env.num_agents() - 1) / env.num_agents();
  double slot = 0.0;
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    const double pb = dist.prob(state, j) * target.value(state, j);
    terms.baseline += pb;
    if (ja.digit(j, agent) == action) slot += pb;
  }
  const auto marginal = dist.marginal(state, agent);
  terms.evaluation = slot / marginal[static_cast<std::size_t>(action)];
  return terms;
}

/// Distribution-weighted squared error of a joint table against targets,
/// summed over states. This is the objective the projection minimizes.
inline double weighted_fit_error(const JointDistribution& dist, const TargetTable& target,
                                 const std::vector<double>& q_tot_table) {
  const std::int64_t joints = dist.joint_actions().count();
  double error = 0.0;
  for (int s = 0; s < dist.num_states(); ++s) {
    for (std::int64_t j = 0; j < joints; ++j) {
      const double gap =
          q_tot_table[static_cast<std::size_t>(s) * static_cast<std::size_t>(joints) + static_cast<std::size_t>(j)] -
          target.value(s, j);
      error += dist.prob(s, j) * gap * gap;
    }
  }
  return error;
}

/// Outcome of the expansion search: the largest observed ratio
/// ||T q - T q'||_inf / ||q_tot - q'_tot||_inf over random table pairs.
struct ContractionSearchResult {
  double max_ratio = 0.0;
  int pairs_evaluated = 0;
  FactoredQ witness_a;
  FactoredQ witness_b;
};

/// Samples `num_pairs` pairs of tables with entries uniform in [-1, 1]
/// and measures the operator's expansion between them. A ratio above the
/// discount certifies that the projected operator is not a contraction
/// in the sup norm. Deterministic per seed; identical pairs are skipped.
inline ContractionSearchResult contraction_ratio_search(const LatentMmdp& env, const JointDistribution& dist,
                                                        int num_pairs, std::uint64_t seed) {
  detail::check_closed_form_preconditions(env, dist, "contraction_ratio_search");
  Rng rng(seed);
  const int S = env.num_states();
  ContractionSearchResult result{0.0, 0, FactoredQ::zeros(env), FactoredQ::zeros(env)};
  FactoredQ qa = FactoredQ::zeros(env);
  FactoredQ qb = FactoredQ::zeros(env);
  for (int pair = 0; pair < num_pairs; ++pair) {
    for (FactoredQ* q : {&qa, &qb})
      for (int i = 0; i < env.num_agents(); ++i)
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < env.num_actions(); ++a) q->set_value(i, s, a, rng.uniform(-1.0, 1.0));

    const auto ta = qa.q_tot_table(S);
    const auto tb = qb.q_tot_table(S);
    double input_gap = 0.0;
    for (std::size_t k = 0; k < ta.size(); ++k) input_gap = std::max(input_gap, std::abs(ta[k] - tb[k]));
    if (input_gap < 1e-12) continue;  // identical pair, zero denominator

    const auto ya = lvf_iterate(env, dist, qa).q_tot_table(S);
    const auto yb = lvf_iterate(env, dist, qb).q_tot_table(S);
    double output_gap = 0.0;
    for (std::size_t k = 0; k < ya.size(); ++k) output_gap = std::max(output_gap, std::abs(ya[k] - yb[k]));

    ++result.pairs_evaluated;
    const double ratio = output_gap / input_gap;
    if (ratio > result.max_ratio) {
      result.max_ratio = ratio;
      result.witness_a = qa;
      result.witness_b = qb;
    }
  }
  return result;
}

}  // namespace fqlab
