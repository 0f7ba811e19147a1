#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/env_model.hpp"

namespace fqlab {

/// Per-agent action-value tables whose sum defines the joint value.
///
/// Entry (agent, observation, action) is one individual value; the joint
/// value of a joint action is always the sum of the selected entries, so
/// there is no cached joint table that could drift. Under the identity
/// observation layer the observation index is the state index.
class FactoredQ {
public:
  FactoredQ(int num_agents, std::vector<int> obs_counts, int num_actions)
      : num_agents_(num_agents), num_actions_(num_actions), obs_counts_(std::move(obs_counts)) {
    if (num_agents < 1) throw std::invalid_argument("FactoredQ: num_agents must be >= 1");
    if (num_actions < 1) throw std::invalid_argument("FactoredQ: num_actions must be >= 1");
    if (static_cast<int>(obs_counts_.size()) != num_agents)
      throw std::invalid_argument("FactoredQ: obs_counts size mismatch");
    tables_.resize(static_cast<std::size_t>(num_agents));
    for (int i = 0; i < num_agents; ++i) {
      if (obs_counts_[static_cast<std::size_t>(i)] < 1)
        throw std::invalid_argument("FactoredQ: each agent needs >= 1 observation");
      tables_[static_cast<std::size_t>(i)].assign(
          static_cast<std::size_t>(obs_counts_[static_cast<std::size_t>(i)]) * static_cast<std::size_t>(num_actions),
          0.0);
    }
  }

  /// Zero table shaped for `env` under the identity observation layer.
  static FactoredQ zeros(const LatentMmdp& env) {
    return FactoredQ(env.num_agents(),
                     std::vector<int>(static_cast<std::size_t>(env.num_agents()), env.num_states()),
                     env.num_actions());
  }

  int num_agents() const { return num_agents_; }
  int num_actions() const { return num_actions_; }
  int obs_count(int agent) const { return obs_counts_[static_cast<std::size_t>(agent)]; }

  double value(int agent, int obs, int action) const {
    return tables_[static_cast<std::size_t>(agent)][offset(agent, obs, action)];
  }

  /// Rejects NaN and infinities: divergence is detected by magnitude,
  /// never by storing non-finite entries.
  void set_value(int agent, int obs, int action, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("FactoredQ::set_value: non-finite value");
    tables_[static_cast<std::size_t>(agent)][offset(agent, obs, action)] = v;
  }

  /// Joint value at an observation tuple (one observation per agent).
  double q_tot(const std::vector<int>& obs, const JointActionIndex& ja, std::int64_t joint) const {
    if (static_cast<int>(obs.size()) != num_agents_)
      throw std::invalid_argument("FactoredQ::q_tot: observation tuple size mismatch");
    double sum = 0.0;
    for (int i = 0; i < num_agents_; ++i)
      sum += value(i, obs[static_cast<std::size_t>(i)], ja.digit(joint, i));
    return sum;
  }

  /// Identity-layer joint value: every agent observes `state`.
  double q_tot(int state, const JointActionIndex& ja, std::int64_t joint) const {
    double sum = 0.0;
    for (int i = 0; i < num_agents_; ++i) sum += value(i, state, ja.digit(joint, i));
    return sum;
  }

  /// Identity-layer joint table, row-major [state][joint].
  std::vector<double> q_tot_table(int num_states) const {
    const JointActionIndex ja(num_agents_, num_actions_);
    std::vector<double> out(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(ja.count()));
    for (int s = 0; s < num_states; ++s)
      for (std::int64_t j = 0; j < ja.count(); ++j)
        out[static_cast<std::size_t>(s) * static_cast<std::size_t>(ja.count()) + static_cast<std::size_t>(j)] =
            q_tot(s, ja, j);
    return out;
  }

  /// Sup norm of the identity-layer joint table.
  double q_tot_inf_norm(int num_states) const {
    double norm = 0.0;
    for (double v : q_tot_table(num_states)) norm = std::max(norm, std::abs(v));
    return norm;
  }

  /// Individual greedy action; ties break toward the lowest index.
  int greedy_action(int agent, int obs) const {
    int best = 0;
    for (int a = 1; a < num_actions_; ++a)
      if (value(agent, obs, a) > value(agent, obs, best)) best = a;
    return best;
  }

  /// Identity-layer greedy joint action at `state` as a flat index.
  std::int64_t greedy_joint(int state, const JointActionIndex& ja) const {
    std::vector<int> actions(static_cast<std::size_t>(num_agents_));
    for (int i = 0; i < num_agents_; ++i) actions[static_cast<std::size_t>(i)] = greedy_action(i, state);
    return ja.encode(actions);
  }

private:
  std::size_t offset(int agent, int obs, int action) const {
    if (agent < 0 || agent >= num_agents_)
      throw std::invalid_argument("FactoredQ: agent index out of range");
    if (obs < 0 || obs >= obs_count(agent))
      throw std::invalid_argument("FactoredQ: observation index out of range");
    if (action < 0 || action >= num_actions_)
      throw std::invalid_argument("FactoredQ: action index out of range");
    return static_cast<std::size_t>(obs) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(action);
  }

  int num_agents_;
  int num_actions_;
  std::vector<int> obs_counts_;
  std::vector<std::vector<double>> tables_;  // per agent: [obs][action]
};

/// Full joint action-value table over (state, joint action).
class JointQ {
public:
  JointQ(int num_states, int num_agents, int num_actions)
      : ja_(num_agents, num_actions), num_states_(num_states) {
    if (num_states < 1) throw std::invalid_argument("JointQ: num_states must be >= 1");
    values_.assign(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(ja_.count()), 0.0);
  }

  static JointQ zeros(const LatentMmdp& env) {
    return JointQ(env.num_states(), env.num_agents(), env.num_actions());
  }

  int num_states() const { return num_states_; }
  int num_agents() const { return ja_.num_agents(); }
  int num_actions() const { return ja_.num_actions(); }
  const JointActionIndex& joint_actions() const { return ja_; }

  double value(int state, std::int64_t joint) const { return values_[offset(state, joint)]; }
  void set_value(int state, std::int64_t joint, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("JointQ::set_value: non-finite value");
    values_[offset(state, joint)] = v;
  }

  double max_value(int state) const {
    double best = value(state, 0);
    for (std::int64_t j = 1; j < ja_.count(); ++j) best = std::max(best, value(state, j));
    return best;
  }

  /// Joint argmax with the lexicographic tie-break: among maximizers the
  /// action tuple that is smallest when agent 0's digit is compared first.
  std::int64_t lex_argmax(int state) const {
    const int n = ja_.num_agents();
    const int m = ja_.num_actions();
    std::int64_t best = -1;
    double best_value = 0.0;
    std::vector<int> tuple(static_cast<std::size_t>(n), 0);
    // Walk tuples in lexicographic order (agent 0 most significant).
    while (true) {
      const std::int64_t j = ja_.encode(tuple);
      const double v = value(state, j);
      if (best < 0 || v > best_value) {
        best = j;
        best_value = v;
      }
      int u = n - 1;
      while (u >= 0 && tuple[static_cast<std::size_t>(u)] == m - 1) {
        tuple[static_cast<std::size_t>(u)] = 0;
        --u;
      }
      if (u < 0) break;
      ++tuple[static_cast<std::size_t>(u)];
    }
    return best;
  }

  double inf_norm() const {
    double norm = 0.0;
    for (double v : values_) norm = std::max(norm, std::abs(v));
    return norm;
  }

  double sup_distance(const JointQ& other) const {
    if (other.values_.size() != values_.size())
      throw std::invalid_argument("JointQ::sup_distance: shape mismatch");
    double d = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k)
      d = std::max(d, std::abs(values_[k] - other.values_[k]));
    return d;
  }

private:
  std::size_t offset(int state, std::int64_t joint) const {
    if (state < 0 || state >= num_states_) throw std::invalid_argument("JointQ: state index out of range");
    if (joint < 0 || joint >= ja_.count()) throw std::invalid_argument("JointQ: joint index out of range");
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(ja_.count()) +
           static_cast<std::size_t>(joint);
  }

  JointActionIndex ja_;
  int num_states_;
  std::vector<double> values_;  // [state][joint]
};

/// One-step regression targets, indexed by (state, joint action).
///
/// Targets depend on observations only through the decoded state, so a
/// per-state table also covers rich observation layers.
class TargetTable {
public:
  TargetTable(int num_states, int num_agents, int num_actions)
      : ja_(num_agents, num_actions), num_states_(num_states) {
    if (num_states < 1) throw std::invalid_argument("TargetTable: num_states must be >= 1");
    values_.assign(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(ja_.count()), 0.0);
  }

  static TargetTable zeros(const LatentMmdp& env) {
    return TargetTable(env.num_states(), env.num_agents(), env.num_actions());
  }

  int num_states() const { return num_states_; }
  const JointActionIndex& joint_actions() const { return ja_; }

  double value(int state, std::int64_t joint) const { return values_[offset(state, joint)]; }
  void set_value(int state, std::int64_t joint, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("TargetTable::set_value: non-finite value");
    values_[offset(state, joint)] = v;
  }

private:
  std::size_t offset(int state, std::int64_t joint) const {
    if (state < 0 || state >= num_states_) throw std::invalid_argument("TargetTable: state index out of range");
    if (joint < 0 || joint >= ja_.count()) throw std::invalid_argument("TargetTable: joint index out of range");
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(ja_.count()) +
           static_cast<std::size_t>(joint);
  }

  JointActionIndex ja_;
  int num_states_;
  std::vector<double> values_;
};

/// Free per-agent, per-observation shifts of the factored solution.
///
/// A residue moves value between agents without changing the joint table:
/// at every reachable joint observation the shifts must sum to zero.
class ResidueSpec {
public:
  ResidueSpec(int num_agents, std::vector<int> obs_counts)
      : num_agents_(num_agents), obs_counts_(std::move(obs_counts)) {
    if (num_agents < 1) throw std::invalid_argument("ResidueSpec: num_agents must be >= 1");
    if (static_cast<int>(obs_counts_.size()) != num_agents)
      throw std::invalid_argument("ResidueSpec: obs_counts size mismatch");
    values_.resize(static_cast<std::size_t>(num_agents));
    for (int i = 0; i < num_agents; ++i)
      values_[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(obs_counts_[static_cast<std::size_t>(i)]), 0.0);
  }

  /// All-zero residue shaped for `env` under the identity layer.
  static ResidueSpec zeros(const LatentMmdp& env) {
    return ResidueSpec(env.num_agents(),
                       std::vector<int>(static_cast<std::size_t>(env.num_agents()), env.num_states()));
  }

  int num_agents() const { return num_agents_; }
  int obs_count(int agent) const { return obs_counts_[static_cast<std::size_t>(agent)]; }

  double value(int agent, int obs) const { return values_[static_cast<std::size_t>(agent)][check(agent, obs)]; }
  void set_value(int agent, int obs, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("ResidueSpec::set_value: non-finite value");
    values_[static_cast<std::size_t>(agent)][check(agent, obs)] = v;
  }

  /// Violations of the zero-sum constraint over reachable joint
  /// observations of `layer` (identity layer when omitted). Sums are
  /// constant per agent within a state's support, so the check reduces
  /// to block constancy plus a per-state zero sum.
  std::vector<std::string> violations(const LatentMmdp& env, const RichObservationLayer* layer = nullptr,
                                      double tol = 1e-12) const {
    std::vector<std::string> out;
    if (num_agents_ != env.num_agents()) {
      out.push_back("residue agent count does not match the environment");
      return out;
    }
    for (int s = 0; s < env.num_states(); ++s) {
      double sum = 0.0;
      for (int i = 0; i < num_agents_; ++i) {
        std::vector<int> support;
        if (layer != nullptr)
          support = layer->support(i, s);
        else
          support.push_back(s);
        if (support.empty()) {
          out.push_back("agent " + std::to_string(i) + " has no observations at state " + std::to_string(s));
          continue;
        }
        const double first = value(i, support.front());
        for (int x : support) {
          if (std::abs(value(i, x) - first) > tol)
            out.push_back("residue of agent " + std::to_string(i) + " varies across observations of state " +
                          std::to_string(s));
        }
        sum += first;
      }
      if (std::abs(sum) > tol)
        out.push_back("residues at state " + std::to_string(s) + " sum to " + std::to_string(sum));
    }
    return out;
  }

private:
  std::size_t check(int agent, int obs) const {
    if (agent < 0 || agent >= num_agents_) throw std::invalid_argument("ResidueSpec: agent index out of range");
    if (obs < 0 || obs >= obs_count(agent)) throw std::invalid_argument("ResidueSpec: observation index out of range");
    return static_cast<std::size_t>(obs);
  }

  int num_agents_;
  std::vector<int> obs_counts_;
  std::vector<std::vector<double>> values_;  // per agent: [obs]
};

}  // namespace fqlab
