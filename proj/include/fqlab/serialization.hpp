#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/lstsq_oracle.hpp"
#include "fqlab/lvf_operator.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

/// Decimal rendering at 17 significant digits: enough to reproduce any
/// double exactly, so save/load round trips are bit-stable.
inline std::string format_real(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.16e", value);
  return std::string(buffer);
}

inline double parse_real(const std::string& token, const std::string& context) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error(context + ": expected a number, got '" + token + "'");
  return value;
}

inline long parse_int(const std::string& token, const std::string& context) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw std::runtime_error(context + ": expected an integer, got '" + token + "'");
  return value;
}

namespace detail {

/// Splits a stream into token lines, tracking positions for error
/// messages. Blank lines and '#' comments are skipped.
class LineReader {
public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      tokens.clear();
      std::istringstream words(line);
      std::string word;
      while (words >> word) {
        if (word.front() == '#') break;
        tokens.push_back(word);
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::string where() const { return source_ + " line " + std::to_string(line_no_); }

private:
  std::istream& in_;
  std::string source_;
  int line_no_ = 0;
};

inline void expect_count(const std::vector<std::string>& tokens, std::size_t count,
                         const std::string& context) {
  if (tokens.size() != count)
    throw std::runtime_error(context + ": expected " + std::to_string(count - 1) + " values, got " +
                             std::to_string(tokens.size() - 1));
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace detail

// --- Environment -----------------------------------------------------------

inline void save_env(const LatentMmdp& env, std::ostream& out, const RichObservationLayer* layer = nullptr) {
  const JointActionIndex& ja = env.joint_actions();
  out << "format fqlab-env-v1\n";
  out << "num_agents " << env.num_agents() << "\n";
  out << "num_states " << env.num_states() << "\n";
  out << "num_actions " << env.num_actions() << "\n";
  out << "discount " << format_real(env.discount()) << "\n";
  for (int s = 0; s < env.num_states(); ++s) {
    out << "reward_row " << s;
    for (std::int64_t j = 0; j < ja.count(); ++j) out << " " << format_real(env.reward(s, j));
    out << "\n";
  }
  for (int s = 0; s < env.num_states(); ++s) {
    for (std::int64_t j = 0; j < ja.count(); ++j) {
      out << "transition_row " << s << " " << j;
      for (int s2 = 0; s2 < env.num_states(); ++s2) out << " " << format_real(env.transition(s, j, s2));
      out << "\n";
    }
  }
  if (layer != nullptr) {
    out << "obs_counts";
    for (int i = 0; i < layer->num_agents(); ++i) out << " " << layer->obs_count(i);
    out << "\n";
    for (int i = 0; i < layer->num_agents(); ++i) {
      for (int s = 0; s < layer->num_states(); ++s) {
        out << "emission_row " << i << " " << s;
        for (int x = 0; x < layer->obs_count(i); ++x) out << " " << format_real(layer->emission(i, s, x));
        out << "\n";
      }
    }
  }
}

struct LoadedEnv {
  LatentMmdp env;
  std::optional<RichObservationLayer> layer;
};

inline LoadedEnv load_env(std::istream& in, const std::string& source = "env") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tokens;
  int num_agents = -1, num_states = -1, num_actions = -1;
  double discount = -1.0;
  std::optional<LatentMmdp> env;
  std::optional<RichObservationLayer> layer;

  auto need_env = [&]() -> LatentMmdp& {
    if (!env) {
      if (num_agents < 0 || num_states < 0 || num_actions < 0 || discount < 0.0)
        throw std::runtime_error(reader.where() + ": tensor rows before the header is complete");
      env.emplace(num_agents, num_states, num_actions, discount);
    }
    return *env;
  };

  while (reader.next(tokens)) {
    const std::string& key = tokens.front();
    const std::string context = reader.where() + ": " + key;
    if (key == "format") {
      detail::expect_count(tokens, 2, context);
      if (tokens[1] != "fqlab-env-v1") throw std::runtime_error(context + ": unknown format " + tokens[1]);
    } else if (key == "num_agents") {
      detail::expect_count(tokens, 2, context);
      num_agents = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_states") {
      detail::expect_count(tokens, 2, context);
      num_states = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_actions") {
      detail::expect_count(tokens, 2, context);
      num_actions = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "discount") {
      detail::expect_count(tokens, 2, context);
      discount = parse_real(tokens[1], context);
    } else if (key == "reward_row") {
      LatentMmdp& target = need_env();
      const std::int64_t joints = target.joint_actions().count();
      detail::expect_count(tokens, static_cast<std::size_t>(joints) + 2, context);
      const int s = static_cast<int>(parse_int(tokens[1], context));
      for (std::int64_t j = 0; j < joints; ++j)
        target.set_reward(s, j, parse_real(tokens[static_cast<std::size_t>(j) + 2], context));
    } else if (key == "transition_row") {
      LatentMmdp& target = need_env();
      detail::expect_count(tokens, static_cast<std::size_t>(num_states) + 3, context);
      const int s = static_cast<int>(parse_int(tokens[1], context));
      const std::int64_t j = parse_int(tokens[2], context);
      for (int s2 = 0; s2 < num_states; ++s2)
        target.set_transition(s, j, s2, parse_real(tokens[static_cast<std::size_t>(s2) + 3], context));
    } else if (key == "obs_counts") {
      need_env();
      detail::expect_count(tokens, static_cast<std::size_t>(num_agents) + 1, context);
      std::vector<int> counts(static_cast<std::size_t>(num_agents));
      for (int i = 0; i < num_agents; ++i)
        counts[static_cast<std::size_t>(i)] = static_cast<int>(parse_int(tokens[static_cast<std::size_t>(i) + 1], context));
      layer.emplace(num_agents, num_states, counts);
    } else if (key == "emission_row") {
      if (!layer) throw std::runtime_error(context + ": emission_row before obs_counts");
      if (tokens.size() < 3) throw std::runtime_error(context + ": missing agent or state index");
      const int i = static_cast<int>(parse_int(tokens[1], context));
      const int s = static_cast<int>(parse_int(tokens[2], context));
      detail::expect_count(tokens, static_cast<std::size_t>(layer->obs_count(i)) + 3, context);
      for (int x = 0; x < layer->obs_count(i); ++x)
        layer->set_emission(i, s, x, parse_real(tokens[static_cast<std::size_t>(x) + 3], context));
    } else {
      throw std::runtime_error(context + ": unknown key");
    }
  }
  if (!env) throw std::runtime_error(source + ": no environment data found");
  return LoadedEnv{*env, layer};
}

inline void save_env(const LatentMmdp& env, const std::string& path,
                     const RichObservationLayer* layer = nullptr) {
  auto out = detail::open_output(path);
  save_env(env, out, layer);
}

inline LoadedEnv load_env(const std::string& path) {
  auto in = detail::open_input(path);
  return load_env(in, path);
}

// --- Distributions ----------------------------------------------------------

inline void save_distribution(const JointDistribution& dist, std::ostream& out) {
  out << "format fqlab-dist-v1\n";
  out << "num_states " << dist.num_states() << "\n";
  out << "num_agents " << dist.num_agents() << "\n";
  out << "num_actions " << dist.num_actions() << "\n";
  out << "factored_origin " << (dist.factored_origin() ? 1 : 0) << "\n";
  for (int s = 0; s < dist.num_states(); ++s) {
    out << "dist_row " << s;
    for (std::int64_t j = 0; j < dist.joint_actions().count(); ++j)
      out << " " << format_real(dist.prob(s, j));
    out << "\n";
  }
}

inline JointDistribution load_distribution(std::istream& in, const std::string& source = "dist") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tokens;
  int num_states = -1, num_agents = -1, num_actions = -1;
  int factored = 0;
  std::optional<JointDistribution> dist;
  while (reader.next(tokens)) {
    const std::string& key = tokens.front();
    const std::string context = reader.where() + ": " + key;
    if (key == "format") {
      detail::expect_count(tokens, 2, context);
      if (tokens[1] != "fqlab-dist-v1") throw std::runtime_error(context + ": unknown format " + tokens[1]);
    } else if (key == "num_states") {
      detail::expect_count(tokens, 2, context);
      num_states = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_agents") {
      detail::expect_count(tokens, 2, context);
      num_agents = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_actions") {
      detail::expect_count(tokens, 2, context);
      num_actions = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "factored_origin") {
      detail::expect_count(tokens, 2, context);
      factored = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "dist_row") {
      if (!dist) {
        if (num_states < 0 || num_agents < 0 || num_actions < 0)
          throw std::runtime_error(context + ": dist_row before the header is complete");
        dist.emplace(num_states, num_agents, num_actions);
      }
      detail::expect_count(tokens, static_cast<std::size_t>(dist->joint_actions().count()) + 2, context);
      const int s = static_cast<int>(parse_int(tokens[1], context));
      for (std::int64_t j = 0; j < dist->joint_actions().count(); ++j)
        dist->set_prob(s, j, parse_real(tokens[static_cast<std::size_t>(j) + 2], context));
    } else {
      throw std::runtime_error(context + ": unknown key");
    }
  }
  if (!dist) throw std::runtime_error(source + ": no distribution data found");
  dist->set_factored_origin(factored != 0);
  return *dist;
}

inline void save_distribution(const JointDistribution& dist, const std::string& path) {
  auto out = detail::open_output(path);
  save_distribution(dist, out);
}

inline JointDistribution load_distribution(const std::string& path) {
  auto in = detail::open_input(path);
  return load_distribution(in, path);
}

// --- Value tables -----------------------------------------------------------

inline void save_factored_q(const FactoredQ& q, std::ostream& out) {
  out << "format fqlab-factored-q-v1\n";
  out << "num_agents " << q.num_agents() << "\n";
  out << "num_actions " << q.num_actions() << "\n";
  out << "obs_counts";
  for (int i = 0; i < q.num_agents(); ++i) out << " " << q.obs_count(i);
  out << "\n";
  for (int i = 0; i < q.num_agents(); ++i) {
    for (int x = 0; x < q.obs_count(i); ++x) {
      out << "q_row " << i << " " << x;
      for (int a = 0; a < q.num_actions(); ++a) out << " " << format_real(q.value(i, x, a));
      out << "\n";
    }
  }
}

inline FactoredQ load_factored_q(std::istream& in, const std::string& source = "factored-q") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tokens;
  int num_agents = -1, num_actions = -1;
  std::vector<int> obs_counts;
  std::optional<FactoredQ> q;
  while (reader.next(tokens)) {
    const std::string& key = tokens.front();
    const std::string context = reader.where() + ": " + key;
    if (key == "format") {
      detail::expect_count(tokens, 2, context);
      if (tokens[1] != "fqlab-factored-q-v1")
        throw std::runtime_error(context + ": unknown format " + tokens[1]);
    } else if (key == "num_agents") {
      detail::expect_count(tokens, 2, context);
      num_agents = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_actions") {
      detail::expect_count(tokens, 2, context);
      num_actions = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "obs_counts") {
      detail::expect_count(tokens, static_cast<std::size_t>(num_agents) + 1, context);
      obs_counts.resize(static_cast<std::size_t>(num_agents));
      for (int i = 0; i < num_agents; ++i)
        obs_counts[static_cast<std::size_t>(i)] = static_cast<int>(parse_int(tokens[static_cast<std::size_t>(i) + 1], context));
    } else if (key == "q_row") {
      if (!q) {
        if (num_agents < 0 || num_actions < 0 || obs_counts.empty())
          throw std::runtime_error(context + ": q_row before the header is complete");
        q.emplace(num_agents, obs_counts, num_actions);
      }
      detail::expect_count(tokens, static_cast<std::size_t>(num_actions) + 3, context);
      const int i = static_cast<int>(parse_int(tokens[1], context));
      const int x = static_cast<int>(parse_int(tokens[2], context));
      for (int a = 0; a < num_actions; ++a)
        q->set_value(i, x, a, parse_real(tokens[static_cast<std::size_t>(a) + 3], context));
    } else {
      throw std::runtime_error(context + ": unknown key");
    }
  }
  if (!q) throw std::runtime_error(source + ": no table data found");
  return *q;
}

inline void save_factored_q(const FactoredQ& q, const std::string& path) {
  auto out = detail::open_output(path);
  save_factored_q(q, out);
}

inline FactoredQ load_factored_q(const std::string& path) {
  auto in = detail::open_input(path);
  return load_factored_q(in, path);
}

inline void save_joint_q(const JointQ& q, std::ostream& out) {
  out << "format fqlab-joint-q-v1\n";
  out << "num_states " << q.num_states() << "\n";
  out << "num_agents " << q.num_agents() << "\n";
  out << "num_actions " << q.num_actions() << "\n";
  for (int s = 0; s < q.num_states(); ++s) {
    out << "q_row " << s;
    for (std::int64_t j = 0; j < q.joint_actions().count(); ++j) out << " " << format_real(q.value(s, j));
    out << "\n";
  }
}

inline JointQ load_joint_q(std::istream& in, const std::string& source = "joint-q") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tokens;
  int num_states = -1, num_agents = -1, num_actions = -1;
  std::optional<JointQ> q;
  while (reader.next(tokens)) {
    const std::string& key = tokens.front();
    const std::string context = reader.where() + ": " + key;
    if (key == "format") {
      detail::expect_count(tokens, 2, context);
      if (tokens[1] != "fqlab-joint-q-v1") throw std::runtime_error(context + ": unknown format " + tokens[1]);
    } else if (key == "num_states") {
      detail::expect_count(tokens, 2, context);
      num_states = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_agents") {
      detail::expect_count(tokens, 2, context);
      num_agents = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_actions") {
      detail::expect_count(tokens, 2, context);
      num_actions = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "q_row") {
      if (!q) {
        if (num_states < 0 || num_agents < 0 || num_actions < 0)
          throw std::runtime_error(context + ": q_row before the header is complete");
        q.emplace(num_states, num_agents, num_actions);
      }
      detail::expect_count(tokens, static_cast<std::size_t>(q->joint_actions().count()) + 2, context);
      const int s = static_cast<int>(parse_int(tokens[1], context));
      for (std::int64_t j = 0; j < q->joint_actions().count(); ++j)
        q->set_value(s, j, parse_real(tokens[static_cast<std::size_t>(j) + 2], context));
    } else {
      throw std::runtime_error(context + ": unknown key");
    }
  }
  if (!q) throw std::runtime_error(source + ": no table data found");
  return *q;
}

inline void save_joint_q(const JointQ& q, const std::string& path) {
  auto out = detail::open_output(path);
  save_joint_q(q, out);
}

inline JointQ load_joint_q(const std::string& path) {
  auto in = detail::open_input(path);
  return load_joint_q(in, path);
}

// --- Least-squares instances -------------------------------------------------

inline void save_wls_instance(const WlsInstance& inst, const EncodingMatrix& A, std::ostream& out) {
  out << "format fqlab-wls-v1\n";
  out << "num_agents " << A.num_agents() << "\n";
  out << "num_actions " << A.num_actions() << "\n";
  for (std::int64_t j = 0; j < A.rows(); ++j) {
    out << "row";
    for (int c = 0; c < A.cols(); ++c) out << " " << static_cast<int>(A.entry(j, c));
    out << " " << format_real(inst.weights[static_cast<std::size_t>(j)]) << " "
        << format_real(inst.targets[static_cast<std::size_t>(j)]) << "\n";
  }
}

/// Reads one weighted least-squares instance; each `row` line carries the
/// binary encoding pattern followed by its weight and target. The pattern
/// must be a valid encoding row (one bit per agent block); it identifies
/// the joint action, so rows may appear in any order but each exactly once.
inline WlsInstance load_wls_instance(std::istream& in, const std::string& source = "wls") {
  detail::LineReader reader(in, source);
  std::vector<std::string> tokens;
  int num_agents = -1, num_actions = -1;
  std::optional<EncodingMatrix> A;
  WlsInstance inst;
  std::vector<bool> seen;
  while (reader.next(tokens)) {
    const std::string& key = tokens.front();
    const std::string context = reader.where() + ": " + key;
    if (key == "format") {
      detail::expect_count(tokens, 2, context);
      if (tokens[1] != "fqlab-wls-v1") throw std::runtime_error(context + ": unknown format " + tokens[1]);
    } else if (key == "num_agents") {
      detail::expect_count(tokens, 2, context);
      num_agents = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "num_actions") {
      detail::expect_count(tokens, 2, context);
      num_actions = static_cast<int>(parse_int(tokens[1], context));
    } else if (key == "row") {
      if (!A) {
        if (num_agents < 0 || num_actions < 0)
          throw std::runtime_error(context + ": row before the header is complete");
        A.emplace(num_agents, num_actions);
        inst.weights.assign(static_cast<std::size_t>(A->rows()), 0.0);
        inst.targets.assign(static_cast<std::size_t>(A->rows()), 0.0);
        seen.assign(static_cast<std::size_t>(A->rows()), false);
      }
      detail::expect_count(tokens, static_cast<std::size_t>(A->cols()) + 3, context);
      std::vector<int> actions(static_cast<std::size_t>(num_agents), -1);
      for (int c = 0; c < A->cols(); ++c) {
        const long bit = parse_int(tokens[static_cast<std::size_t>(c) + 1], context);
        if (bit != 0 && bit != 1) throw std::runtime_error(context + ": pattern entries must be 0 or 1");
        if (bit == 1) {
          const int agent = c / num_actions;
          if (actions[static_cast<std::size_t>(agent)] != -1)
            throw std::runtime_error(context + ": two bits set in the block of agent " + std::to_string(agent));
          actions[static_cast<std::size_t>(agent)] = c % num_actions;
        }
      }
      for (int i = 0; i < num_agents; ++i)
        if (actions[static_cast<std::size_t>(i)] < 0)
          throw std::runtime_error(context + ": no bit set in the block of agent " + std::to_string(i));
      const std::int64_t j = A->joint_actions().encode(actions);
      if (seen[static_cast<std::size_t>(j)])
        throw std::runtime_error(context + ": duplicate pattern for joint action " + std::to_string(j));
      seen[static_cast<std::size_t>(j)] = true;
      inst.weights[static_cast<std::size_t>(j)] = parse_real(tokens[tokens.size() - 2], context);
      inst.targets[static_cast<std::size_t>(j)] = parse_real(tokens[tokens.size() - 1], context);
    } else {
      throw std::runtime_error(context + ": unknown key");
    }
  }
  if (!A) throw std::runtime_error(source + ": no instance data found");
  for (std::size_t j = 0; j < seen.size(); ++j)
    if (!seen[j]) throw std::runtime_error(source + ": missing row for joint action " + std::to_string(j));
  return inst;
}

inline WlsInstance load_wls_instance(const std::string& path) {
  auto in = detail::open_input(path);
  return load_wls_instance(in, path);
}

// --- CSV exports --------------------------------------------------------------

/// Two-agent table in the conventional matrix layout: rows are the
/// second agent's action, columns the first agent's.
inline std::string csv_pair_matrix(const std::vector<double>& table, int num_actions) {
  if (static_cast<int>(table.size()) != num_actions * num_actions)
    throw std::invalid_argument("csv_pair_matrix: table must hold m*m joint values");
  std::ostringstream out;
  for (int a0 = 0; a0 < num_actions; ++a0) out << ",A" << (a0 + 1);
  out << "\n";
  for (int a1 = 0; a1 < num_actions; ++a1) {
    out << "A" << (a1 + 1);
    for (int a0 = 0; a0 < num_actions; ++a0)
      out << "," << format_real(table[static_cast<std::size_t>(a0 + a1 * num_actions)]);
    out << "\n";
  }
  return out.str();
}

/// Credit terms of every projected entry as CSV rows, identity layer.
inline std::string credit_csv(const LatentMmdp& env, const JointDistribution& dist, const TargetTable& target,
                              const ResidueSpec* residue = nullptr) {
  std::ostringstream out;
  out << "agent,observation,action,evaluation,baseline,weight,residue,q_i\n";
  for (int i = 0; i < env.num_agents(); ++i) {
    for (int s = 0; s < env.num_states(); ++s) {
      for (int a = 0; a < env.num_actions(); ++a) {
        const CreditTerms terms = credit_decomposition(env, dist, target, i, s, a);
        const double shift = residue == nullptr ? 0.0 : residue->value(i, s);
        const double q_i = terms.evaluation - terms.weight * terms.baseline + shift;
        out << i << "," << s << "," << a << "," << format_real(terms.evaluation) << ","
            << format_real(terms.baseline) << "," << format_real(terms.weight) << "," << format_real(shift)
            << "," << format_real(q_i) << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace fqlab
