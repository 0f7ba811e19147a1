#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/rng.hpp"

namespace fqlab {

/// Mixed-radix indexing of joint actions.
///
/// A joint action of n agents with m actions each is a flat index
/// j in [0, m^n). Agent u holds the u-th base-m digit, least significant
/// first: a_u = (j / m^u) mod m.
class JointActionIndex {
public:
  JointActionIndex(int num_agents, int num_actions)
      : n_(num_agents), m_(num_actions) {
    if (num_agents < 1) throw std::invalid_argument("JointActionIndex: num_agents must be >= 1");
    if (num_actions < 1) throw std::invalid_argument("JointActionIndex: num_actions must be >= 1");
    strides_.resize(static_cast<std::size_t>(n_) + 1);
    strides_[0] = 1;
    for (int u = 0; u < n_; ++u) {
      if (strides_[u] > std::numeric_limits<std::int64_t>::max() / m_)
        throw std::invalid_argument("JointActionIndex: m^n overflows");
      strides_[u + 1] = strides_[u] * m_;
    }
  }

  int num_agents() const { return n_; }
  int num_actions() const { return m_; }

  /// Number of joint actions, m^n.
  std::int64_t count() const { return strides_[static_cast<std::size_t>(n_)]; }

  /// Action of agent `agent` inside joint index `joint`.
  int digit(std::int64_t joint, int agent) const {
    return static_cast<int>((joint / strides_[static_cast<std::size_t>(agent)]) % m_);
  }

  std::int64_t encode(const std::vector<int>& actions) const {
    if (static_cast<int>(actions.size()) != n_)
      throw std::invalid_argument("JointActionIndex::encode: wrong tuple size");
    std::int64_t j = 0;
    for (int u = 0; u < n_; ++u) {
      if (actions[static_cast<std::size_t>(u)] < 0 || actions[static_cast<std::size_t>(u)] >= m_)
        throw std::invalid_argument("JointActionIndex::encode: action out of range");
      j += strides_[static_cast<std::size_t>(u)] * actions[static_cast<std::size_t>(u)];
    }
    return j;
  }

  std::vector<int> decode(std::int64_t joint) const {
    std::vector<int> actions(static_cast<std::size_t>(n_));
    for (int u = 0; u < n_; ++u) actions[static_cast<std::size_t>(u)] = digit(joint, u);
    return actions;
  }

  /// Joint index equal to `joint` except agent `agent` plays `action`.
  std::int64_t replace(std::int64_t joint, int agent, int action) const {
    const std::int64_t stride = strides_[static_cast<std::size_t>(agent)];
    return joint + stride * (action - digit(joint, agent));
  }

private:
  int n_;
  int m_;
  std::vector<std::int64_t> strides_;
};

/// Finite multi-agent MDP over a latent state space.
///
/// All agents share one action count m. Tensors are dense and row-major
/// in the joint-action convention of JointActionIndex. Instances are
/// meant to be immutable once built; readers may share them freely
/// across threads.
class LatentMmdp {
public:
  LatentMmdp(int num_agents, int num_states, int num_actions, double discount)
      : joint_(num_agents, num_actions),
        num_states_(num_states),
        discount_(discount) {
    if (num_states < 1) throw std::invalid_argument("LatentMmdp: num_states must be >= 1");
    if (!(discount >= 0.0) || discount >= 1.0)
      throw std::invalid_argument("LatentMmdp: discount must lie in [0, 1)");
    reward_.assign(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(joint_.count()), 0.0);
    transition_.assign(reward_.size() * static_cast<std::size_t>(num_states), 0.0);
  }

  int num_agents() const { return joint_.num_agents(); }
  int num_states() const { return num_states_; }
  int num_actions() const { return joint_.num_actions(); }
  double discount() const { return discount_; }
  const JointActionIndex& joint_actions() const { return joint_; }

  double reward(int state, std::int64_t joint) const {
    return reward_[reward_offset(state, joint)];
  }
  void set_reward(int state, std::int64_t joint, double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("LatentMmdp::set_reward: non-finite value");
    reward_[reward_offset(state, joint)] = value;
  }

  double transition(int state, std::int64_t joint, int next_state) const {
    return transition_[transition_offset(state, joint, next_state)];
  }
  void set_transition(int state, std::int64_t joint, int next_state, double p) {
    transition_[transition_offset(state, joint, next_state)] = p;
  }

  /// Largest absolute reward.
  double r_max() const {
    double r = 0.0;
    for (double v : reward_) r = std::max(r, std::abs(v));
    return r;
  }

  /// Magnitude ceiling of any discounted value function, r_max / (1 - gamma).
  double value_bound() const { return r_max() / (1.0 - discount_); }

  /// Copy with a different discount; tensors are shared by value.
  LatentMmdp with_discount(double discount) const {
    LatentMmdp env(*this);
    if (!(discount >= 0.0) || discount >= 1.0)
      throw std::invalid_argument("LatentMmdp::with_discount: discount must lie in [0, 1)");
    env.discount_ = discount;
    return env;
  }

private:
  std::size_t reward_offset(int state, std::int64_t joint) const {
    check_state(state);
    check_joint(joint);
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(joint_.count()) +
           static_cast<std::size_t>(joint);
  }
  std::size_t transition_offset(int state, std::int64_t joint, int next_state) const {
    check_state(next_state);
    return reward_offset(state, joint) * static_cast<std::size_t>(num_states_) +
           static_cast<std::size_t>(next_state);
  }
  void check_state(int state) const {
    if (state < 0 || state >= num_states_)
      throw std::invalid_argument("LatentMmdp: state index out of range");
  }
  void check_joint(std::int64_t joint) const {
    if (joint < 0 || joint >= joint_.count())
      throw std::invalid_argument("LatentMmdp: joint action index out of range");
  }

  JointActionIndex joint_;
  int num_states_;
  double discount_;
  std::vector<double> reward_;      // [state][joint]
  std::vector<double> transition_;  // [state][joint][next_state]
};

/// Per-agent observation emission with state-disjoint supports.
///
/// Each agent owns a finite observation index set. Emission probabilities
/// Lambda(obs | agent, state) must place any given observation under at
/// most one state, so observations decode the latent state exactly.
class RichObservationLayer {
public:
  RichObservationLayer(int num_agents, int num_states, std::vector<int> obs_counts)
      : num_agents_(num_agents), num_states_(num_states), obs_counts_(std::move(obs_counts)) {
    if (num_agents < 1) throw std::invalid_argument("RichObservationLayer: num_agents must be >= 1");
    if (num_states < 1) throw std::invalid_argument("RichObservationLayer: num_states must be >= 1");
    if (static_cast<int>(obs_counts_.size()) != num_agents)
      throw std::invalid_argument("RichObservationLayer: obs_counts size mismatch");
    emission_.resize(static_cast<std::size_t>(num_agents));
    for (int i = 0; i < num_agents; ++i) {
      if (obs_counts_[static_cast<std::size_t>(i)] < 1)
        throw std::invalid_argument("RichObservationLayer: each agent needs >= 1 observation");
      emission_[static_cast<std::size_t>(i)].assign(
          static_cast<std::size_t>(num_states) * static_cast<std::size_t>(obs_counts_[static_cast<std::size_t>(i)]), 0.0);
    }
  }

  /// Identity layer: each agent observes the latent state index directly.
  static RichObservationLayer identity(const LatentMmdp& env) {
    RichObservationLayer layer(env.num_agents(), env.num_states(),
                               std::vector<int>(static_cast<std::size_t>(env.num_agents()), env.num_states()));
    for (int i = 0; i < env.num_agents(); ++i)
      for (int s = 0; s < env.num_states(); ++s) layer.set_emission(i, s, s, 1.0);
    return layer;
  }

  int num_agents() const { return num_agents_; }
  int num_states() const { return num_states_; }
  int obs_count(int agent) const { return obs_counts_[static_cast<std::size_t>(agent)]; }

  double emission(int agent, int state, int obs) const {
    return emission_[static_cast<std::size_t>(agent)][offset(agent, state, obs)];
  }
  void set_emission(int agent, int state, int obs, double p) {
    emission_[static_cast<std::size_t>(agent)][offset(agent, state, obs)] = p;
  }

  /// Latent state an observation decodes to. Requires the observation to
  /// carry positive emission mass under exactly the returned state.
  int decode(int agent, int obs) const {
    for (int s = 0; s < num_states_; ++s)
      if (emission(agent, s, obs) > 0.0) return s;
    throw std::invalid_argument("RichObservationLayer::decode: observation has no support");
  }

  /// Observation indices with positive mass under (agent, state).
  std::vector<int> support(int agent, int state) const {
    std::vector<int> out;
    for (int x = 0; x < obs_count(agent); ++x)
      if (emission(agent, state, x) > 0.0) out.push_back(x);
    return out;
  }

private:
  std::size_t offset(int agent, int state, int obs) const {
    if (agent < 0 || agent >= num_agents_)
      throw std::invalid_argument("RichObservationLayer: agent index out of range");
    if (state < 0 || state >= num_states_)
      throw std::invalid_argument("RichObservationLayer: state index out of range");
    if (obs < 0 || obs >= obs_count(agent))
      throw std::invalid_argument("RichObservationLayer: observation index out of range");
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(obs_count(agent)) +
           static_cast<std::size_t>(obs);
  }

  int num_agents_;
  int num_states_;
  std::vector<int> obs_counts_;
  std::vector<std::vector<double>> emission_;  // per agent: [state][obs]
};

/// Diagnostic result of validate(); never thrown.
struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the model invariants: stochastic transition rows, finite rewards,
/// discount below one, and (when a layer is given) normalized emissions with
/// supports disjoint across states.
inline ValidationReport validate(const LatentMmdp& env, const RichObservationLayer* layer = nullptr) {
  ValidationReport report;
  const std::int64_t joints = env.joint_actions().count();
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < joints; ++j) {
      double sum = 0.0;
      for (int s2 = 0; s2 < env.num_states(); ++s2) {
        const double p = env.transition(s, j, s2);
        if (p < 0.0) {
          report.violations.push_back("transition[" + std::to_string(s) + "][" + std::to_string(j) +
                                      "][" + std::to_string(s2) + "] is negative");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        report.violations.push_back("transition row [" + std::to_string(s) + "][" + std::to_string(j) +
                                    "] sums to " + std::to_string(sum));
      }
      if (!std::isfinite(env.reward(s, j))) {
        report.violations.push_back("reward[" + std::to_string(s) + "][" + std::to_string(j) +
                                    "] is not finite");
      }
    }
  }
  if (!(env.discount() >= 0.0) || env.discount() >= 1.0)
    report.violations.push_back("discount outside [0, 1)");

  if (layer != nullptr) {
    if (layer->num_agents() != env.num_agents() || layer->num_states() != env.num_states())
      report.violations.push_back("observation layer shape does not match the environment");
    for (int i = 0; i < layer->num_agents() && i < env.num_agents(); ++i) {
      for (int s = 0; s < layer->num_states(); ++s) {
        double sum = 0.0;
        for (int x = 0; x < layer->obs_count(i); ++x) {
          const double p = layer->emission(i, s, x);
          if (p < 0.0)
            report.violations.push_back("emission[" + std::to_string(i) + "][" + std::to_string(s) +
                                        "][" + std::to_string(x) + "] is negative");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          report.violations.push_back("emission row [" + std::to_string(i) + "][" + std::to_string(s) +
                                      "] sums to " + std::to_string(sum));
      }
      // Disjoint supports: no observation may appear under two states.
      for (int x = 0; x < layer->obs_count(i); ++x) {
        int owner = -1;
        for (int s = 0; s < layer->num_states(); ++s) {
          if (layer->emission(i, s, x) > 0.0) {
            if (owner >= 0)
              report.violations.push_back("observation " + std::to_string(x) + " of agent " +
                                          std::to_string(i) + " is shared by states " +
                                          std::to_string(owner) + " and " + std::to_string(s));
            else
              owner = s;
          }
        }
      }
    }
  }
  return report;
}

/// Two-agent, two-state environment with a coordination reward.
///
/// State 0 is absorbing with zero reward. In state 1 the joint action
/// (0, 0) pays 1 and keeps the state, (1, 1) drops to state 0, and the
/// mixed joint actions keep state 1 with zero reward.
inline LatentMmdp two_state_env(double gamma = 0.9) {
  LatentMmdp env(2, 2, 2, gamma);
  const JointActionIndex& ja = env.joint_actions();
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    env.set_transition(0, j, 0, 1.0);  // state 0 absorbs
    const bool both_second = ja.digit(j, 0) == 1 && ja.digit(j, 1) == 1;
    env.set_transition(1, j, both_second ? 0 : 1, 1.0);
  }
  env.set_reward(1, ja.encode({0, 0}), 1.0);
  return env;
}

/// One-shot 3x3 cooperative matrix game.
///
/// Single state, discount zero (every joint action ends the episode).
/// Payoff 8 for (0, 0); -12 when exactly one agent plays action 0;
/// 0 on the remaining 2x2 block.
inline LatentMmdp matrix_game_env() {
  LatentMmdp env(2, 1, 3, 0.0);
  const JointActionIndex& ja = env.joint_actions();
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    env.set_transition(0, j, 0, 1.0);
    const int a0 = ja.digit(j, 0);
    const int a1 = ja.digit(j, 1);
    double payoff = 0.0;
    if (a0 == 0 && a1 == 0)
      payoff = 8.0;
    else if (a0 == 0 || a1 == 0)
      payoff = -12.0;
    env.set_reward(0, j, payoff);
  }
  return env;
}

/// Seeded random instance: transition rows simplex-uniform, rewards
/// uniform in [-1, 1]. Identical seeds give identical environments.
inline LatentMmdp random_mmdp(std::uint64_t seed, int num_agents, int num_states, int num_actions,
                              double gamma) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    throw std::invalid_argument("random_mmdp: discount must lie in [0, 1)");
  LatentMmdp env(num_agents, num_states, num_actions, gamma);
  Rng rng(seed);
  const std::int64_t joints = env.joint_actions().count();
  std::vector<double> row(static_cast<std::size_t>(num_states));
  for (int s = 0; s < num_states; ++s) {
    for (std::int64_t j = 0; j < joints; ++j) {
      double sum = 0.0;
      for (int s2 = 0; s2 < num_states; ++s2) {
        row[static_cast<std::size_t>(s2)] = rng.exponential();
        sum += row[static_cast<std::size_t>(s2)];
      }
      for (int s2 = 0; s2 < num_states; ++s2)
        env.set_transition(s, j, s2, row[static_cast<std::size_t>(s2)] / sum);
      env.set_reward(s, j, rng.uniform(-1.0, 1.0));
    }
  }
  return env;
}

}  // namespace fqlab
