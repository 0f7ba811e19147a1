#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/igm_operator.hpp"
#include "fqlab/lvf_operator.hpp"
#include "fqlab/rng.hpp"
#include "fqlab/serialization.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

enum class OperatorKind { LvfClosedForm, LvfNumeric, Igm };
enum class DistKind { Uniform, Product, EpsilonGreedy, Eta, File };

inline std::string operator_name(OperatorKind op) {
  switch (op) {
    case OperatorKind::LvfClosedForm: return "lvf-closed-form";
    case OperatorKind::LvfNumeric: return "lvf-numeric";
    case OperatorKind::Igm: return "igm";
  }
  return "unknown";
}

/// How the data distribution is produced for a run. Uniform and Eta are
/// synthesized from the environment; Product and File carry explicit data;
/// EpsilonGreedy is iteration-dependent and drives the on-policy loop.
struct DistSpec {
  DistKind kind = DistKind::Uniform;
  double epsilon = 0.1;
  double eta = 0.0;
  std::optional<ProductPolicy> policy;
  std::optional<JointDistribution> explicit_dist;

  static DistSpec uniform() { return DistSpec{}; }

  static DistSpec epsilon_greedy(double eps) {
    DistSpec spec;
    spec.kind = DistKind::EpsilonGreedy;
    spec.epsilon = eps;
    return spec;
  }

  static DistSpec eta_mixture(double value) {
    DistSpec spec;
    spec.kind = DistKind::Eta;
    spec.eta = value;
    return spec;
  }

  static DistSpec product(ProductPolicy pol) {
    DistSpec spec;
    spec.kind = DistKind::Product;
    spec.policy = std::move(pol);
    return spec;
  }

  static DistSpec from_file(JointDistribution dist) {
    DistSpec spec;
    spec.kind = DistKind::File;
    spec.explicit_dist = std::move(dist);
    return spec;
  }
};

struct RunConfig {
  LatentMmdp env;
  OperatorKind op = OperatorKind::LvfClosedForm;
  DistSpec dist;
  std::optional<double> gamma_override;
  int max_iters = 300;
  double tolerance = 1e-8;
  double divergence_multiplier = 10.0;
  std::uint64_t seed = 0;
  std::string out_path;
  std::optional<FactoredQ> initial_factored;
  std::optional<JointQ> initial_joint;

  explicit RunConfig(LatentMmdp environment) : env(std::move(environment)) {}

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("RunConfig: iteration cap must be at least 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("RunConfig: tolerance must be positive");
    if (!(divergence_multiplier > 1.0))
      throw std::invalid_argument("RunConfig: divergence multiplier must exceed 1");
  }

  LatentMmdp effective_env() const {
    return gamma_override ? env.with_discount(*gamma_override) : env;
  }
};

enum class RunStatus { Converged, Diverged, CapReached };

inline std::string status_name(RunStatus status) {
  switch (status) {
    case RunStatus::Converged: return "converged";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::CapReached: return "cap-reached";
  }
  return "unknown";
}

struct IterationRecord {
  int iter = 0;
  double q_tot_inf_norm = 0.0;
  double bellman_residual = 0.0;
  std::vector<std::int64_t> greedy_joint;  // one joint action per state
  bool greedy_optimal = false;
  double wall_seconds = 0.0;
};

struct IterationLog {
  std::vector<IterationRecord> records;
  RunStatus status = RunStatus::CapReached;
  std::optional<FactoredQ> final_factored;
  std::optional<JointQ> final_joint;
  std::vector<double> final_q_tot;  // num_states x m^n, row-major

  const IterationRecord& last() const {
    if (records.empty()) throw std::logic_error("IterationLog: no iterations were recorded");
    return records.back();
  }
};

namespace detail {

inline JointDistribution resolve_fixed_dist(const LatentMmdp& env, const DistSpec& spec) {
  switch (spec.kind) {
    case DistKind::Uniform:
      return uniform_distribution(env);
    case DistKind::Eta:
      return eta_mixture(env, spec.eta);
    case DistKind::Product: {
      if (!spec.policy) throw std::invalid_argument("DistSpec: product kind without a policy");
      return from_product(*spec.policy);
    }
    case DistKind::File: {
      if (!spec.explicit_dist) throw std::invalid_argument("DistSpec: file kind without data");
      const JointDistribution& d = *spec.explicit_dist;
      if (d.num_states() != env.num_states() || d.num_agents() != env.num_agents() ||
          d.num_actions() != env.num_actions())
        throw std::invalid_argument("DistSpec: loaded distribution shape does not match the environment");
      const auto issues = d.violations();
      if (!issues.empty()) throw std::invalid_argument("DistSpec: loaded distribution invalid: " + issues.front());
      return d;
    }
    case DistKind::EpsilonGreedy:
      throw std::invalid_argument(
          "run_fqi: epsilon-greedy data is iteration-dependent; use the on-policy loop");
  }
  throw std::invalid_argument("DistSpec: unknown distribution kind");
}

/// Greedy joint actions per state under the value-iteration solution,
/// with ties broken lexicographically; used as the optimality reference.
inline std::vector<std::int64_t> optimal_joints(const LatentMmdp& env) {
  const ValueIterationResult vi = value_iteration(env, 1e-10);
  std::vector<std::int64_t> joints(static_cast<std::size_t>(env.num_states()));
  for (int s = 0; s < env.num_states(); ++s) joints[static_cast<std::size_t>(s)] = vi.q.lex_argmax(s);
  return joints;
}

inline double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline double sup_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double gap = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) gap = std::max(gap, std::abs(a[k] - b[k]));
  return gap;
}

struct StepOutcome {
  std::vector<double> q_tot;
  double residual = 0.0;
  std::vector<std::int64_t> greedy;
};

template <typename NextDist>
IterationLog drive_lvf_loop(const RunConfig& config, const LatentMmdp& env, NextDist&& next_dist) {
  const JointActionIndex& ja = env.joint_actions();
  const std::vector<std::int64_t> pi_star = optimal_joints(env);
  const double ceiling = config.divergence_multiplier * env.value_bound();
  const auto start = std::chrono::steady_clock::now();

  FactoredQ q = config.initial_factored ? *config.initial_factored : FactoredQ::zeros(env);
  if (q.num_agents() != env.num_agents() || q.num_actions() != env.num_actions())
    throw std::invalid_argument("RunConfig: initial factored table shape does not match the environment");
  std::vector<double> prev_tot = q.q_tot_table(env.num_states());

  IterationLog log;
  log.status = RunStatus::CapReached;
  for (int t = 1; t <= config.max_iters; ++t) {
    const JointDistribution dist = next_dist(q);
    const TargetTable target = bellman_target(env, q);
    FactoredQ next = config.op == OperatorKind::LvfNumeric ? lvf_project_numeric(env, dist, target)
                                                           : lvf_project(env, dist, target);
    const std::vector<double> tot = next.q_tot_table(env.num_states());

    IterationRecord rec;
    rec.iter = t;
    rec.q_tot_inf_norm = 0.0;
    for (double v : tot) rec.q_tot_inf_norm = std::max(rec.q_tot_inf_norm, std::abs(v));
    rec.bellman_residual = weighted_fit_error(dist, target, tot);
    rec.greedy_joint.resize(static_cast<std::size_t>(env.num_states()));
    for (int s = 0; s < env.num_states(); ++s)
      rec.greedy_joint[static_cast<std::size_t>(s)] = next.greedy_joint(s, ja);
    rec.greedy_optimal = rec.greedy_joint == pi_star;
    rec.wall_seconds = elapsed_seconds(start);
    log.records.push_back(rec);

    const double step = sup_gap(tot, prev_tot);
    q = std::move(next);
    prev_tot = tot;
    if (!std::isfinite(rec.q_tot_inf_norm) || rec.q_tot_inf_norm > ceiling) {
      log.status = RunStatus::Diverged;
      break;
    }
    if (step <= config.tolerance) {
      log.status = RunStatus::Converged;
      break;
    }
  }
  log.final_factored = std::move(q);
  log.final_q_tot = std::move(prev_tot);
  return log;
}

inline IterationLog drive_igm_loop(const RunConfig& config, const LatentMmdp& env,
                                   const JointDistribution& dist) {
  const std::vector<std::int64_t> pi_star = optimal_joints(env);
  const double ceiling = config.divergence_multiplier * env.value_bound();
  const auto start = std::chrono::steady_clock::now();

  JointQ q = config.initial_joint ? *config.initial_joint : JointQ::zeros(env);
  if (q.num_states() != env.num_states() || q.joint_actions().count() != env.joint_actions().count())
    throw std::invalid_argument("RunConfig: initial joint table shape does not match the environment");

  IterationLog log;
  log.status = RunStatus::CapReached;
  for (int t = 1; t <= config.max_iters; ++t) {
    const JointQ next = igm_iterate(env, dist, q);

    IterationRecord rec;
    rec.iter = t;
    rec.q_tot_inf_norm = next.inf_norm();
    TargetTable target = TargetTable::zeros(env);
    {
      const JointQ image = detail::bellman_image(env, q);
      for (int s = 0; s < env.num_states(); ++s)
        for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
          target.set_value(s, j, image.value(s, j));
    }
    std::vector<double> tot(static_cast<std::size_t>(env.num_states()) *
                            static_cast<std::size_t>(env.joint_actions().count()));
    for (int s = 0; s < env.num_states(); ++s)
      for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
        tot[static_cast<std::size_t>(s) * static_cast<std::size_t>(env.joint_actions().count()) +
            static_cast<std::size_t>(j)] = next.value(s, j);
    rec.bellman_residual = weighted_fit_error(dist, target, tot);
    rec.greedy_joint.resize(static_cast<std::size_t>(env.num_states()));
    for (int s = 0; s < env.num_states(); ++s)
      rec.greedy_joint[static_cast<std::size_t>(s)] = next.lex_argmax(s);
    rec.greedy_optimal = rec.greedy_joint == pi_star;
    rec.wall_seconds = elapsed_seconds(start);
    log.records.push_back(rec);

    const double step = q.sup_distance(next);
    q = next;
    if (!std::isfinite(rec.q_tot_inf_norm) || rec.q_tot_inf_norm > ceiling) {
      log.status = RunStatus::Diverged;
      break;
    }
    if (step <= config.tolerance) {
      log.status = RunStatus::Converged;
      break;
    }
  }
  std::vector<double> tot(static_cast<std::size_t>(env.num_states()) *
                          static_cast<std::size_t>(env.joint_actions().count()));
  for (int s = 0; s < env.num_states(); ++s)
    for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
      tot[static_cast<std::size_t>(s) * static_cast<std::size_t>(env.joint_actions().count()) +
          static_cast<std::size_t>(j)] = q.value(s, j);
  log.final_joint = std::move(q);
  log.final_q_tot = std::move(tot);
  return log;
}

}  // namespace detail

inline std::string csv_string(const IterationLog& log) {
  std::ostringstream out;
  out << "iter,q_tot_inf_norm,bellman_residual,greedy_optimal,status\n";
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const IterationRecord& rec = log.records[k];
    const bool terminal = k + 1 == log.records.size();
    out << rec.iter << "," << format_real(rec.q_tot_inf_norm) << "," << format_real(rec.bellman_residual)
        << "," << (rec.greedy_optimal ? 1 : 0) << ","
        << (terminal ? status_name(log.status) : std::string("running")) << "\n";
  }
  return out.str();
}

inline void emit_csv(const IterationLog& log, const std::string& path) {
  auto out = detail::open_output(path);
  out << csv_string(log);
  if (!out) throw std::runtime_error("emit_csv: write to '" + path + "' failed");
}

/// Fitted Q-iteration with a fixed data distribution.
inline IterationLog run_fqi(const RunConfig& config) {
  config.validate();
  const LatentMmdp env = config.effective_env();
  const JointDistribution dist = detail::resolve_fixed_dist(env, config.dist);
  IterationLog log = config.op == OperatorKind::Igm
                         ? detail::drive_igm_loop(config, env, dist)
                         : detail::drive_lvf_loop(config, env, [&](const FactoredQ&) { return dist; });
  if (!config.out_path.empty()) emit_csv(log, config.out_path);
  return log;
}

/// Fitted Q-iteration where each iteration refits against the
/// epsilon-greedy data of the current table.
inline IterationLog run_onpolicy_fqi(const RunConfig& config) {
  config.validate();
  if (config.op == OperatorKind::Igm)
    throw std::invalid_argument("run_onpolicy_fqi: the on-policy loop applies the factorized operator only");
  if (config.dist.kind != DistKind::EpsilonGreedy)
    throw std::invalid_argument("run_onpolicy_fqi: distribution spec must be epsilon-greedy");
  const double eps = config.dist.epsilon;
  if (!(eps > 0.0))
    throw std::invalid_argument(
        "run_onpolicy_fqi: epsilon must be positive; data must be exploratory, and a zero-epsilon "
        "policy leaves non-greedy joint actions with zero mass");
  const LatentMmdp env = config.effective_env();
  IterationLog log =
      detail::drive_lvf_loop(config, env, [&](const FactoredQ& q) { return epsilon_greedy(q, eps); });
  if (!config.out_path.empty()) emit_csv(log, config.out_path);
  return log;
}

/// Dispatches on the distribution spec: epsilon-greedy runs the on-policy
/// loop, everything else runs with a fixed distribution.
inline IterationLog run(const RunConfig& config) {
  return config.dist.kind == DistKind::EpsilonGreedy ? run_onpolicy_fqi(config) : run_fqi(config);
}

// --- Stability box ------------------------------------------------------------

struct StabilityReport {
  int trials = 0;
  int remained = 0;
  int policy_breaks = 0;
  double worst_excursion = 0.0;  // largest |q_tot(s, pi*) - V*(s)| seen after one step

  double fraction_remained() const { return trials == 0 ? 1.0 : static_cast<double>(remained) / trials; }
};

namespace detail {

struct OptimalPolicyInfo {
  std::vector<std::int64_t> joints;      // lexicographic optimal joint per state
  std::vector<bool> constant_row;       // states whose optimal row is constant (no policy constraint)
  std::vector<double> values;           // V*(s)
};

/// Extracts the optimal policy and verifies it is unique: every state must
/// have a single maximizing joint action, except states whose entire row
/// is constant (all actions equivalent there, so no constraint applies).
inline OptimalPolicyInfo unique_optimal_policy(const LatentMmdp& env) {
  const ValueIterationResult vi = value_iteration(env, 1e-12);
  const JointActionIndex& ja = env.joint_actions();
  const double scale = std::max(1.0, vi.q.inf_norm());
  const double gap_tol = 1e-9 * scale;
  OptimalPolicyInfo info;
  info.joints.resize(static_cast<std::size_t>(env.num_states()));
  info.constant_row.resize(static_cast<std::size_t>(env.num_states()), false);
  info.values.resize(static_cast<std::size_t>(env.num_states()));
  for (int s = 0; s < env.num_states(); ++s) {
    const double best = vi.q.max_value(s);
    double low = best;
    int ties = 0;
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      const double v = vi.q.value(s, j);
      low = std::min(low, v);
      if (best - v <= gap_tol) ++ties;
    }
    info.joints[static_cast<std::size_t>(s)] = vi.q.lex_argmax(s);
    info.values[static_cast<std::size_t>(s)] = best;
    if (ties > 1) {
      if (best - low <= gap_tol) {
        info.constant_row[static_cast<std::size_t>(s)] = true;
      } else {
        throw std::invalid_argument(
            "stability_box_check: the optimal policy must be unique, but state " + std::to_string(s) +
            " has " + std::to_string(ties) + " maximizing joint actions");
      }
    }
  }
  return info;
}

}  // namespace detail

/// Samples factored tables inside the stability box (greedy policy equals
/// the optimal policy; total value at the optimal actions within delta of
/// the optimal value), applies one on-policy iteration, and reports how
/// many images stay inside the box.
inline StabilityReport stability_box_check(const LatentMmdp& env, double delta, double epsilon, int trials,
                                           std::uint64_t seed) {
  if (delta < 0.0) throw std::invalid_argument("stability_box_check: delta must be non-negative");
  if (!(epsilon > 0.0) || epsilon > 1.0)
    throw std::invalid_argument("stability_box_check: epsilon must lie in (0, 1]");
  if (trials < 1) throw std::invalid_argument("stability_box_check: trials must be at least 1");
  const detail::OptimalPolicyInfo opt = detail::unique_optimal_policy(env);
  const JointActionIndex& ja = env.joint_actions();
  const int n = env.num_agents();

  const auto in_box = [&](const FactoredQ& q) -> std::pair<bool, double> {
    double excursion = 0.0;
    bool policy_ok = true;
    for (int s = 0; s < env.num_states(); ++s) {
      const std::int64_t pi = opt.joints[static_cast<std::size_t>(s)];
      excursion = std::max(excursion,
                           std::abs(q.q_tot(s, ja, pi) - opt.values[static_cast<std::size_t>(s)]));
      if (!opt.constant_row[static_cast<std::size_t>(s)] && q.greedy_joint(s, ja) != pi) policy_ok = false;
    }
    return {policy_ok && excursion <= delta, excursion};
  };

  StabilityReport report;
  report.trials = trials;
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    FactoredQ q = FactoredQ::zeros(env);
    for (int s = 0; s < env.num_states(); ++s) {
      const std::int64_t pi = opt.joints[static_cast<std::size_t>(s)];
      const double share = opt.values[static_cast<std::size_t>(s)] / n;
      for (int i = 0; i < n; ++i) {
        const int best_action = ja.digit(pi, i);
        const double jitter = delta == 0.0 ? 0.0 : rng.uniform(-delta / n, delta / n);
        const double top = share + jitter;
        q.set_value(i, s, best_action, top);
        for (int a = 0; a < env.num_actions(); ++a) {
          if (a == best_action) continue;
          q.set_value(i, s, a, top - rng.uniform(0.1, 0.6));
        }
      }
    }
    const auto before = in_box(q);
    if (!before.first)
      throw std::logic_error("stability_box_check: sampled point fell outside the box");

    const JointDistribution dist = epsilon_greedy(q, epsilon);
    const FactoredQ next = lvf_project(env, dist, bellman_target(env, q));
    const auto after = in_box(next);
    if (after.first)
      ++report.remained;
    else if ([&] {
               for (int s = 0; s < env.num_states(); ++s)
                 if (!opt.constant_row[static_cast<std::size_t>(s)] &&
                     next.greedy_joint(s, ja) != opt.joints[static_cast<std::size_t>(s)])
                   return true;
               return false;
             }())
      ++report.policy_breaks;
    report.worst_excursion = std::max(report.worst_excursion, after.second);
  }
  return report;
}

// --- Parameter sweeps -----------------------------------------------------------

enum class SweepParam { Epsilon, Eta, Gamma };

inline std::string sweep_param_name(SweepParam param) {
  switch (param) {
    case SweepParam::Epsilon: return "epsilon";
    case SweepParam::Eta: return "eta";
    case SweepParam::Gamma: return "gamma";
  }
  return "unknown";
}

struct SweepEntry {
  double value = 0.0;
  std::optional<IterationLog> log;
  std::string error;  // non-empty when the run failed
};

struct SweepResult {
  SweepParam param = SweepParam::Epsilon;
  std::vector<SweepEntry> entries;
};

/// The configuration a sweep runs for one value: the base config with the
/// swept parameter substituted and an independent seed derived per index.
inline RunConfig sweep_run_config(const RunConfig& base, SweepParam param, double value, std::size_t index) {
  RunConfig config = base;
  config.seed = derive_seed(base.seed, static_cast<std::uint64_t>(index));
  config.out_path.clear();
  switch (param) {
    case SweepParam::Epsilon:
      config.dist = DistSpec::epsilon_greedy(value);
      break;
    case SweepParam::Eta:
      config.dist = DistSpec::eta_mixture(value);
      break;
    case SweepParam::Gamma:
      config.gamma_override = value;
      break;
  }
  return config;
}

inline SweepResult sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: values must be non-empty");
  SweepResult result;
  result.param = param;
  result.entries.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    SweepEntry entry;
    entry.value = values[k];
    try {
      entry.log = run(sweep_run_config(base, param, values[k], k));
    } catch (const std::exception& err) {
      entry.error = err.what();
    }
    result.entries.push_back(std::move(entry));
  }
  return result;
}

inline std::string sweep_csv_string(const SweepResult& result) {
  std::ostringstream out;
  out << "value,status,final_q_tot_inf_norm,iterations,greedy_optimal\n";
  for (const SweepEntry& entry : result.entries) {
    out << format_real(entry.value) << ",";
    if (!entry.log) {
      out << "error,,0,0\n";
      continue;
    }
    const IterationLog& log = *entry.log;
    const IterationRecord& last = log.last();
    out << status_name(log.status) << "," << format_real(last.q_tot_inf_norm) << "," << last.iter << ","
        << (last.greedy_optimal ? 1 : 0) << "\n";
  }
  return out.str();
}

inline void emit_sweep_csv(const SweepResult& result, const std::string& path) {
  auto out = detail::open_output(path);
  out << sweep_csv_string(result);
  if (!out) throw std::runtime_error("emit_sweep_csv: write to '" + path + "' failed");
}

}  // namespace fqlab
