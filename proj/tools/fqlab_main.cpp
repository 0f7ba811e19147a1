// Command line driver: run single experiments, sweep parameters, verify
// the numerical machinery, and print the matrix-game tables.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fqlab/fqlab.hpp"

namespace {

using namespace fqlab;

LatentMmdp parse_env(const std::string& text, std::optional<RichObservationLayer>* layer_out) {
  if (text == "two-state") return two_state_env(0.9);
  if (text == "matrix-game") return matrix_game_env();
  if (text.rfind("file:", 0) == 0) {
    LoadedEnv loaded = load_env(text.substr(5));
    if (layer_out != nullptr) *layer_out = loaded.layer;
    return loaded.env;
  }
  throw std::invalid_argument("unknown --env value '" + text + "' (want two-state, matrix-game, or file:PATH)");
}

OperatorKind parse_operator(const std::string& text) {
  if (text == "lvf-closed-form") return OperatorKind::LvfClosedForm;
  if (text == "lvf-numeric") return OperatorKind::LvfNumeric;
  if (text == "igm") return OperatorKind::Igm;
  throw std::invalid_argument("unknown --operator value '" + text +
                              "' (want lvf-closed-form, lvf-numeric, or igm)");
}

DistSpec parse_dist(const std::string& text, double epsilon, double eta) {
  if (text == "uniform") return DistSpec::uniform();
  if (text == "epsilon-greedy") return DistSpec::epsilon_greedy(epsilon);
  if (text == "eta") return DistSpec::eta_mixture(eta);
  if (text.rfind("file:", 0) == 0) return DistSpec::from_file(load_distribution(text.substr(5)));
  throw std::invalid_argument("unknown --dist value '" + text +
                              "' (want uniform, epsilon-greedy, eta, or file:PATH)");
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::string token;
  std::istringstream stream(text);
  while (std::getline(stream, token, ',')) {
    if (token.empty()) continue;
    values.push_back(parse_real(token, "--values"));
  }
  if (values.empty()) throw std::invalid_argument("--values must list at least one number");
  return values;
}

SweepParam parse_param(const std::string& text) {
  if (text == "epsilon") return SweepParam::Epsilon;
  if (text == "eta") return SweepParam::Eta;
  if (text == "gamma") return SweepParam::Gamma;
  throw std::invalid_argument("unknown --param value '" + text + "' (want epsilon, eta, or gamma)");
}

int do_run(const RunConfig& config) {
  IterationLog log = run(config);
  const IterationRecord& last = log.last();
  std::printf("status: %s\n", status_name(log.status).c_str());
  std::printf("iterations: %d\n", last.iter);
  std::printf("final q_tot sup norm: %s\n", format_real(last.q_tot_inf_norm).c_str());
  std::printf("final bellman residual: %s\n", format_real(last.bellman_residual).c_str());
  std::printf("greedy optimal: %s\n", last.greedy_optimal ? "yes" : "no");
  if (!config.out_path.empty()) std::printf("log written to %s\n", config.out_path.c_str());
  return log.status == RunStatus::Diverged ? 2 : 0;
}

int do_sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values,
             const std::string& out_path) {
  SweepResult result = sweep(base, param, values);
  const std::string csv = sweep_csv_string(result);
  std::fputs(csv.c_str(), stdout);
  if (!out_path.empty()) {
    emit_sweep_csv(result, out_path);
    std::printf("summary written to %s\n", out_path.c_str());
  }
  for (const SweepEntry& entry : result.entries)
    if (!entry.log) {
      std::fprintf(stderr, "sweep %s=%g failed: %s\n", sweep_param_name(param).c_str(), entry.value,
                   entry.error.c_str());
      return 1;
    }
  return 0;
}

bool check(const char* name, bool ok) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
  return ok;
}

int do_verify() {
  bool all = true;

  all &= check("oracle equivalence (closed form vs numeric, 60 random instances)", [] {
    Rng rng(12021);
    for (int trial = 0; trial < 60; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(3));
      const int m = 2 + static_cast<int>(rng.below(2));
      const int S = 1 + static_cast<int>(rng.below(3));
      LatentMmdp env = random_mmdp(rng.below(1u << 31), n, S, m, 0.7);
      ProductPolicy policy = ProductPolicy::uniform(env);
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < S; ++s) {
          double total = 0.0;
          std::vector<double> row(static_cast<std::size_t>(m));
          for (int a = 0; a < m; ++a) {
            row[static_cast<std::size_t>(a)] = 0.1 + rng.unit();
            total += row[static_cast<std::size_t>(a)];
          }
          for (int a = 0; a < m; ++a) policy.set_prob(i, s, a, row[static_cast<std::size_t>(a)] / total);
        }
      JointDistribution dist = from_product(policy);
      TargetTable target = TargetTable::zeros(env);
      for (int s = 0; s < S; ++s)
        for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
          target.set_value(s, j, rng.uniform(-3.0, 3.0));
      FactoredQ closed = lvf_project(env, dist, target);
      FactoredQ numeric = lvf_project_numeric(env, dist, target);
      JointActionIndex ja(n, m);
      for (int s = 0; s < S; ++s)
        for (std::int64_t j = 0; j < ja.count(); ++j)
          if (std::abs(closed.q_tot(s, ja, j) - numeric.q_tot(s, ja, j)) > 1e-8) return false;
    }
    return true;
  }());

  all &= check("explicit pseudoinverse conditions (n in 1..3, m in 2..3)", [] {
    for (int n = 1; n <= 3; ++n)
      for (int m = 2; m <= 3; ++m) {
        std::vector<std::vector<double>> uniform(static_cast<std::size_t>(n),
                                                 std::vector<double>(static_cast<std::size_t>(m), 1.0 / m));
        if (!verify_pseudoinverse(n, m, uniform, 5, 7 * n + m).ok(1e-9)) return false;
      }
    return true;
  }());

  all &= check("expansion witness (two-state uniform ratio above 0.9)", [] {
    LatentMmdp env = two_state_env(0.9);
    return contraction_ratio_search(env, uniform_distribution(env), 4000, 5).max_ratio > 0.9;
  }());

  all &= check("reduction round trip (affine recovery on random instances)", [] {
    Rng rng(40);
    for (int trial = 0; trial < 30; ++trial) {
      const int d = 1 + static_cast<int>(rng.below(3));
      const int r = 3 + static_cast<int>(rng.below(6));
      std::vector<std::vector<int>> rows(static_cast<std::size_t>(r));
      std::vector<double> labels(static_cast<std::size_t>(r));
      std::vector<double> weights(static_cast<std::size_t>(r));
      for (int k = 0; k < r; ++k) {
        rows[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c)
          rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = static_cast<int>(rng.below(2));
        labels[static_cast<std::size_t>(k)] = rng.uniform(-2.0, 2.0);
        weights[static_cast<std::size_t>(k)] = 0.25 + rng.unit();
      }
      AffineReduction red = reduce_lstsq_to_mmdp(rows, labels, weights);
      AffineFit fit = fit_reduction(red);
      // The fitted predictions must satisfy the weighted normal equations
      // of the affine model: check the gradient is (near) zero.
      for (int c = 0; c <= d; ++c) {
        double grad = 0.0;
        for (int k = 0; k < r; ++k) {
          const double feature = c < d ? rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] : 1.0;
          grad += weights[static_cast<std::size_t>(k)] *
                  (fit.predictions[static_cast<std::size_t>(k)] - labels[static_cast<std::size_t>(k)]) * feature;
        }
        if (std::abs(grad) > 1e-8) return false;
      }
    }
    return true;
  }());

  return all ? 0 : 1;
}

int do_matrix_game() {
  LatentMmdp env = matrix_game_env();
  const JointActionIndex& ja = env.joint_actions();
  const int m = env.num_actions();

  std::vector<double> payoff(static_cast<std::size_t>(ja.count()));
  for (std::int64_t j = 0; j < ja.count(); ++j) payoff[static_cast<std::size_t>(j)] = env.reward(0, j);
  std::printf("payoff (rows: agent 2 action, columns: agent 1 action)\n%s\n",
              csv_pair_matrix(payoff, m).c_str());

  JointDistribution dist = uniform_distribution(env);
  TargetTable target = TargetTable::zeros(env);
  for (std::int64_t j = 0; j < ja.count(); ++j) target.set_value(0, j, env.reward(0, j));
  FactoredQ fit = lvf_project(env, dist, target);

  std::printf("additive least-squares fit under the uniform distribution\n");
  for (int i = 0; i < 2; ++i) {
    std::printf("  agent %d values:", i + 1);
    for (int a = 0; a < m; ++a) std::printf(" A%d=%.6f", a + 1, fit.value(i, 0, a));
    std::printf("\n");
  }
  std::printf("  post-fit greedy joint action: <A%d,A%d>\n", fit.greedy_action(0, 0) + 1,
              fit.greedy_action(1, 0) + 1);
  std::vector<double> totals(static_cast<std::size_t>(ja.count()));
  for (std::int64_t j = 0; j < ja.count(); ++j) totals[static_cast<std::size_t>(j)] = fit.q_tot(0, ja, j);
  std::printf("\nfitted totals\n%s\n", csv_pair_matrix(totals, m).c_str());

  // The complete-class route: decompose the payoff itself.
  JointQ joint = JointQ::zeros(env);
  for (std::int64_t j = 0; j < ja.count(); ++j) joint.set_value(0, j, env.reward(0, j));
  FactoredQ indicator = igm_decompose(joint);
  std::printf("exact decomposition of the payoff (argmax-consistent indicator form)\n");
  for (int i = 0; i < 2; ++i) {
    std::printf("  agent %d greedy indicator:", i + 1);
    for (int a = 0; a < m; ++a) std::printf(" A%d=%.0f", a + 1, indicator.value(i, 0, a));
    std::printf("\n");
  }
  std::printf("  greedy joint action: <A%d,A%d>\n", ja.digit(joint.lex_argmax(0), 0) + 1,
              ja.digit(joint.lex_argmax(0), 1) + 1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular multi-agent fitted Q-iteration laboratory"};
  app.require_subcommand(1);

  std::string env_text = "two-state";
  std::string op_text = "lvf-closed-form";
  std::string dist_text = "uniform";
  std::optional<double> gamma;
  double epsilon = 0.1;
  double eta = 0.0;
  int iters = 300;
  double tol = 1e-8;
  double k_mult = 10.0;
  std::uint64_t seed = 0;
  std::string out_path;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--env", env_text, "two-state | matrix-game | file:PATH");
    cmd->add_option("--operator", op_text, "lvf-closed-form | lvf-numeric | igm");
    cmd->add_option("--dist", dist_text, "uniform | epsilon-greedy | eta | file:PATH");
    cmd->add_option("--gamma", gamma, "discount override");
    cmd->add_option("--epsilon", epsilon, "exploration rate for epsilon-greedy data");
    cmd->add_option("--eta", eta, "mixture weight for the eta distribution");
    cmd->add_option("--iters", iters, "iteration cap");
    cmd->add_option("--tol", tol, "convergence tolerance (sup-norm step)");
    cmd->add_option("--k", k_mult, "divergence threshold multiplier over the value bound");
    cmd->add_option("--seed", seed, "base seed");
    cmd->add_option("--out", out_path, "write the per-iteration CSV here");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "run one fitted Q-iteration experiment");
  add_run_flags(cmd_run);

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run one experiment per parameter value");
  std::string param_text = "epsilon";
  std::string values_text;
  add_run_flags(cmd_sweep);
  cmd_sweep->add_option("--param", param_text, "epsilon | eta | gamma")->required();
  cmd_sweep->add_option("--values", values_text, "comma-separated list, e.g. 1.0,0.5,0.1")->required();

  CLI::App* cmd_verify =
      app.add_subcommand("verify", "check the solver, pseudoinverse, expansion, and reduction suites");
  CLI::App* cmd_game = app.add_subcommand("matrix-game", "print the payoff and its fitted tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_verify->parsed()) return do_verify();
    if (cmd_game->parsed()) return do_matrix_game();

    std::optional<RichObservationLayer> layer;
    RunConfig config(parse_env(env_text, &layer));
    config.op = parse_operator(op_text);
    config.dist = parse_dist(dist_text, epsilon, eta);
    config.gamma_override = gamma;
    config.max_iters = iters;
    config.tolerance = tol;
    config.divergence_multiplier = k_mult;
    config.seed = seed;
    config.out_path = out_path;

    if (cmd_run->parsed()) return do_run(config);
    if (cmd_sweep->parsed()) {
      config.out_path.clear();
      return do_sweep(config, parse_param(param_text), parse_values(values_text), out_path);
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
