#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/env_model.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

/// Decentralized behavior policy: one probability vector over actions
/// per (agent, observation).
class ProductPolicy {
public:
  ProductPolicy(int num_agents, std::vector<int> obs_counts, int num_actions)
      : num_agents_(num_agents), num_actions_(num_actions), obs_counts_(std::move(obs_counts)) {
    if (num_agents < 1) throw std::invalid_argument("ProductPolicy: num_agents must be >= 1");
    if (num_actions < 1) throw std::invalid_argument("ProductPolicy: num_actions must be >= 1");
    if (static_cast<int>(obs_counts_.size()) != num_agents)
      throw std::invalid_argument("ProductPolicy: obs_counts size mismatch");
    probs_.resize(static_cast<std::size_t>(num_agents));
    for (int i = 0; i < num_agents; ++i) {
      if (obs_counts_[static_cast<std::size_t>(i)] < 1)
        throw std::invalid_argument("ProductPolicy: each agent needs >= 1 observation");
      probs_[static_cast<std::size_t>(i)].assign(
          static_cast<std::size_t>(obs_counts_[static_cast<std::size_t>(i)]) * static_cast<std::size_t>(num_actions),
          0.0);
    }
  }

  /// Uniform policy shaped for `env` under the identity layer.
  static ProductPolicy uniform(const LatentMmdp& env) {
    ProductPolicy policy(env.num_agents(),
                         std::vector<int>(static_cast<std::size_t>(env.num_agents()), env.num_states()),
                         env.num_actions());
    const double p = 1.0 / env.num_actions();
    for (int i = 0; i < env.num_agents(); ++i)
      for (int s = 0; s < env.num_states(); ++s)
        for (int a = 0; a < env.num_actions(); ++a) policy.set_prob(i, s, a, p);
    return policy;
  }

  int num_agents() const { return num_agents_; }
  int num_actions() const { return num_actions_; }
  int obs_count(int agent) const { return obs_counts_[static_cast<std::size_t>(agent)]; }

  double prob(int agent, int obs, int action) const {
    return probs_[static_cast<std::size_t>(agent)][offset(agent, obs, action)];
  }
  void set_prob(int agent, int obs, int action, double p) {
    probs_[static_cast<std::size_t>(agent)][offset(agent, obs, action)] = p;
  }

  /// Normalization and nonnegativity violations.
  std::vector<std::string> violations(double tol = 1e-12) const {
    std::vector<std::string> out;
    for (int i = 0; i < num_agents_; ++i) {
      for (int x = 0; x < obs_count(i); ++x) {
        double sum = 0.0;
        for (int a = 0; a < num_actions_; ++a) {
          const double p = prob(i, x, a);
          if (p < 0.0)
            out.push_back("policy[" + std::to_string(i) + "][" + std::to_string(x) + "][" +
                          std::to_string(a) + "] is negative");
          sum += p;
        }
        if (std::abs(sum - 1.0) > tol)
          out.push_back("policy row [" + std::to_string(i) + "][" + std::to_string(x) + "] sums to " +
                        std::to_string(sum));
      }
    }
    return out;
  }

  /// True when every entry is strictly positive (exploratory data).
  bool strictly_positive() const {
    for (int i = 0; i < num_agents_; ++i)
      for (int x = 0; x < obs_count(i); ++x)
        for (int a = 0; a < num_actions_; ++a)
          if (!(prob(i, x, a) > 0.0)) return false;
    return true;
  }

private:
  std::size_t offset(int agent, int obs, int action) const {
    if (agent < 0 || agent >= num_agents_) throw std::invalid_argument("ProductPolicy: agent index out of range");
    if (obs < 0 || obs >= obs_count(agent)) throw std::invalid_argument("ProductPolicy: observation index out of range");
    if (action < 0 || action >= num_actions_) throw std::invalid_argument("ProductPolicy: action index out of range");
    return static_cast<std::size_t>(obs) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(action);
  }

  int num_agents_;
  int num_actions_;
  std::vector<int> obs_counts_;
  std::vector<std::vector<double>> probs_;  // per agent: [obs][action]
};

/// Exact joint action distribution per state.
///
/// `factored_origin` records whether the table was built from a product
/// policy; operators that require decentralized data dispatch on it.
class JointDistribution {
public:
  JointDistribution(int num_states, int num_agents, int num_actions)
      : ja_(num_agents, num_actions), num_states_(num_states) {
    if (num_states < 1) throw std::invalid_argument("JointDistribution: num_states must be >= 1");
    table_.assign(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(ja_.count()), 0.0);
  }

  int num_states() const { return num_states_; }
  int num_agents() const { return ja_.num_agents(); }
  int num_actions() const { return ja_.num_actions(); }
  const JointActionIndex& joint_actions() const { return ja_; }

  double prob(int state, std::int64_t joint) const { return table_[offset(state, joint)]; }
  void set_prob(int state, std::int64_t joint, double p) { table_[offset(state, joint)] = p; }

  bool factored_origin() const { return factored_origin_; }
  void set_factored_origin(bool value) { factored_origin_ = value; }

  /// Per-agent action marginal at `state`.
  std::vector<double> marginal(int state, int agent) const {
    std::vector<double> out(static_cast<std::size_t>(ja_.num_actions()), 0.0);
    for (std::int64_t j = 0; j < ja_.count(); ++j)
      out[static_cast<std::size_t>(ja_.digit(j, agent))] += prob(state, j);
    return out;
  }

  /// Normalization and nonnegativity violations.
  std::vector<std::string> violations(double tol = 1e-12) const {
    std::vector<std::string> out;
    for (int s = 0; s < num_states_; ++s) {
      double sum = 0.0;
      for (std::int64_t j = 0; j < ja_.count(); ++j) {
        const double p = prob(s, j);
        if (p < 0.0)
          out.push_back("distribution[" + std::to_string(s) + "][" + std::to_string(j) + "] is negative");
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol)
        out.push_back("distribution row [" + std::to_string(s) + "] sums to " + std::to_string(sum));
    }
    return out;
  }

  /// True when every (state, joint action) has positive mass.
  bool full_support() const {
    for (double p : table_)
      if (!(p > 0.0)) return false;
    return true;
  }

private:
  std::size_t offset(int state, std::int64_t joint) const {
    if (state < 0 || state >= num_states_)
      throw std::invalid_argument("JointDistribution: state index out of range");
    if (joint < 0 || joint >= ja_.count())
      throw std::invalid_argument("JointDistribution: joint index out of range");
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(ja_.count()) +
           static_cast<std::size_t>(joint);
  }

  JointActionIndex ja_;
  int num_states_;
  std::vector<double> table_;  // [state][joint]
  bool factored_origin_ = false;
};

/// Every joint action weighted m^-n at every state.
inline JointDistribution uniform_distribution(const LatentMmdp& env) {
  JointDistribution dist(env.num_states(), env.num_agents(), env.num_actions());
  const double p = 1.0 / static_cast<double>(dist.joint_actions().count());
  for (int s = 0; s < env.num_states(); ++s)
    for (std::int64_t j = 0; j < dist.joint_actions().count(); ++j) dist.set_prob(s, j, p);
  dist.set_factored_origin(true);
  return dist;
}

/// Product of individual action probabilities, identity observation layer:
/// the policy's observation index is read as the state index.
inline JointDistribution from_product(const ProductPolicy& policy) {
  const auto problems = policy.violations();
  if (!problems.empty()) throw std::invalid_argument("from_product: " + problems.front());
  const int num_states = policy.obs_count(0);
  for (int i = 1; i < policy.num_agents(); ++i)
    if (policy.obs_count(i) != num_states)
      throw std::invalid_argument("from_product: identity layer needs equal observation counts");
  JointDistribution dist(num_states, policy.num_agents(), policy.num_actions());
  const JointActionIndex& ja = dist.joint_actions();
  for (int s = 0; s < num_states; ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double p = 1.0;
      for (int i = 0; i < policy.num_agents(); ++i) p *= policy.prob(i, s, ja.digit(j, i));
      dist.set_prob(s, j, p);
    }
  }
  dist.set_factored_origin(true);
  return dist;
}

/// Product distribution under a rich observation layer. Per state, each
/// agent's action marginal mixes its policy rows over the emission; the
/// joint table stays a product because observations are conditionally
/// independent given the state.
inline JointDistribution from_product(const ProductPolicy& policy, const LatentMmdp& env,
                                      const RichObservationLayer& layer) {
  const auto problems = policy.violations();
  if (!problems.empty()) throw std::invalid_argument("from_product: " + problems.front());
  if (policy.num_agents() != env.num_agents() || policy.num_actions() != env.num_actions())
    throw std::invalid_argument("from_product: policy shape does not match the environment");
  for (int i = 0; i < policy.num_agents(); ++i)
    if (policy.obs_count(i) != layer.obs_count(i))
      throw std::invalid_argument("from_product: policy observation counts do not match the layer");
  JointDistribution dist(env.num_states(), env.num_agents(), env.num_actions());
  const JointActionIndex& ja = dist.joint_actions();
  for (int s = 0; s < env.num_states(); ++s) {
    std::vector<std::vector<double>> marginals(static_cast<std::size_t>(env.num_agents()));
    for (int i = 0; i < env.num_agents(); ++i) {
      marginals[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(env.num_actions()), 0.0);
      for (int x : layer.support(i, s))
        for (int a = 0; a < env.num_actions(); ++a)
          marginals[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] +=
              layer.emission(i, s, x) * policy.prob(i, x, a);
    }
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double p = 1.0;
      for (int i = 0; i < env.num_agents(); ++i)
        p *= marginals[static_cast<std::size_t>(i)][static_cast<std::size_t>(ja.digit(j, i))];
      dist.set_prob(s, j, p);
    }
  }
  dist.set_factored_origin(true);
  return dist;
}

/// Epsilon-greedy product distribution built from individual tables:
/// each agent plays its greedy action with probability 1 - eps + eps/m
/// and every other action with probability eps/m. Individual argmax ties
/// break toward the lowest action index. Identity observation layer.
inline JointDistribution epsilon_greedy(const FactoredQ& q, double epsilon) {
  if (!(epsilon >= 0.0) || epsilon > 1.0)
    throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0, 1]");
  const int num_states = q.obs_count(0);
  for (int i = 1; i < q.num_agents(); ++i)
    if (q.obs_count(i) != num_states)
      throw std::invalid_argument("epsilon_greedy: identity layer needs equal observation counts");
  ProductPolicy policy(q.num_agents(), std::vector<int>(static_cast<std::size_t>(q.num_agents()), num_states),
                       q.num_actions());
  const double base = epsilon / q.num_actions();
  for (int i = 0; i < q.num_agents(); ++i) {
    for (int s = 0; s < num_states; ++s) {
      const int greedy = q.greedy_action(i, s);
      for (int a = 0; a < q.num_actions(); ++a)
        policy.set_prob(i, s, a, base + (a == greedy ? 1.0 - epsilon : 0.0));
    }
  }
  return from_product(policy);
}

/// Two-agent, two-action mixture that interpolates between uniform data
/// (eta = 0) and data holding only the two matched joint actions
/// (eta = 1). Matched joint actions carry 0.5 eta + 0.25 (1 - eta),
/// mismatched ones 0.25 (1 - eta), at every state.
inline JointDistribution eta_mixture(const LatentMmdp& env, double eta) {
  if (env.num_agents() != 2 || env.num_actions() != 2)
    throw std::invalid_argument("eta_mixture: requires 2 agents with 2 actions each");
  if (!(eta >= 0.0) || eta > 1.0) throw std::invalid_argument("eta_mixture: eta must lie in [0, 1]");
  JointDistribution dist(env.num_states(), 2, 2);
  const JointActionIndex& ja = dist.joint_actions();
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      const bool matched = ja.digit(j, 0) == ja.digit(j, 1);
      dist.set_prob(s, j, matched ? 0.5 * eta + 0.25 * (1.0 - eta) : 0.25 * (1.0 - eta));
    }
  }
  dist.set_factored_origin(eta == 0.0);
  return dist;
}

/// Result of the factorization test; on failure `state`/`joint` locate
/// the entry with the largest deviation from the product of marginals.
struct FactorizationCheck {
  bool factorized = true;
  int state = -1;
  std::int64_t joint = -1;
  double violation = 0.0;
};

/// True iff at every state the joint table equals the outer product of
/// its per-agent marginals within `tol`.
inline FactorizationCheck is_factorized(const JointDistribution& dist, double tol = 1e-10) {
  FactorizationCheck check;
  const JointActionIndex& ja = dist.joint_actions();
  for (int s = 0; s < dist.num_states(); ++s) {
    std::vector<std::vector<double>> marginals(static_cast<std::size_t>(dist.num_agents()));
    for (int i = 0; i < dist.num_agents(); ++i) marginals[static_cast<std::size_t>(i)] = dist.marginal(s, i);
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      double product = 1.0;
      for (int i = 0; i < dist.num_agents(); ++i)
        product *= marginals[static_cast<std::size_t>(i)][static_cast<std::size_t>(ja.digit(j, i))];
      const double gap = std::abs(dist.prob(s, j) - product);
      if (gap > check.violation) {
        check.violation = gap;
        check.state = s;
        check.joint = j;
      }
    }
  }
  check.factorized = check.violation <= tol;
  return check;
}

}  // namespace fqlab
