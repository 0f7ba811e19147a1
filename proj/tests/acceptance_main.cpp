// Acceptance gate: exercises the ten headline behaviors end to end and
// prints one [PASS]/[FAIL] line each. Exit code 0 only if all pass.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fqlab/fqlab.hpp"

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int index, const std::string& text, bool pass, double seconds, double limit) {
  const bool in_time = seconds < limit;
  if (!pass || !in_time) ++failures;
  std::printf("[%s] %2d. %s (%.3f s, limit %g s)\n", pass && in_time ? "PASS" : "FAIL", index, text.c_str(),
              seconds, limit);
}

void run_criterion(int index, const std::string& text, double limit, const std::function<bool()>& body) {
  const auto start = Clock::now();
  bool pass = false;
  std::string note;
  try {
    pass = body();
  } catch (const std::exception& err) {
    note = err.what();
    pass = false;
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  report(index, note.empty() ? text : text + " [exception: " + note + "]", pass, seconds, limit);
}

double frand(fqlab::Rng& rng, double lo, double hi) { return rng.uniform(lo, hi); }

}  // namespace

int main() {
  using namespace fqlab;

  run_criterion(1, "two-state divergence: gamma 0.9 diverges past 100 within 100 iterations, gamma 0.5 converges",
                1.0, [] {
    RunConfig hot(two_state_env(0.9));
    hot.max_iters = 300;
    IterationLog a = run_fqi(hot);
    RunConfig cool(two_state_env(0.5));
    cool.max_iters = 300;
    IterationLog b = run_fqi(cool);
    return a.status == RunStatus::Diverged && a.last().iter <= 100 && a.last().q_tot_inf_norm > 100.0 &&
           b.status == RunStatus::Converged;
  });

  run_criterion(2, "matrix game projection: totals within 0.01 of -6.22/-4.89/-3.56 and 1e-10 of -56/9,-44/9,-32/9",
                0.1, [] {
    LatentMmdp env = matrix_game_env();
    JointDistribution dist = uniform_distribution(env);
    TargetTable target = TargetTable::zeros(env);
    for (std::int64_t j = 0; j < env.joint_actions().count(); ++j) target.set_value(0, j, env.reward(0, j));
    FactoredQ q = lvf_project(env, dist, target);
    JointActionIndex ja(2, 3);
    const double q00 = q.q_tot(0, ja, ja.encode({0, 0}));
    const double q01 = q.q_tot(0, ja, ja.encode({0, 1}));
    const double q11 = q.q_tot(0, ja, ja.encode({1, 1}));
    return std::abs(q00 + 6.22) <= 0.01 && std::abs(q01 + 4.89) <= 0.01 && std::abs(q11 + 3.56) <= 0.01 &&
           std::abs(q00 + 56.0 / 9.0) <= 1e-10 && std::abs(q01 + 44.0 / 9.0) <= 1e-10 &&
           std::abs(q11 + 32.0 / 9.0) <= 1e-10;
  });

  run_criterion(3, "on-policy stability: eps 0.1/0.01 never diverge (final norm <= 30, greedy optimal last 50), eps 1.0 diverges",
                6.0, [] {
    JointActionIndex ja(2, 2);
    for (double eps : {0.1, 0.01}) {
      RunConfig cfg(two_state_env(0.9));
      cfg.dist = DistSpec::epsilon_greedy(eps);
      cfg.max_iters = 300;
      IterationLog log = run_onpolicy_fqi(cfg);
      if (log.status == RunStatus::Diverged) return false;
      if (log.last().q_tot_inf_norm > 30.0) return false;
      if (log.records.size() < 50) return false;
      for (std::size_t k = log.records.size() - 50; k < log.records.size(); ++k)
        if (log.records[k].greedy_joint[1] != ja.encode({0, 0})) return false;
    }
    RunConfig wild(two_state_env(0.9));
    wild.dist = DistSpec::epsilon_greedy(1.0);
    wild.max_iters = 300;
    return run_onpolicy_fqi(wild).status == RunStatus::Diverged;
  });

  run_criterion(4, "complete-class convergence: two-state fixed point 10 within 1e-6; geometric error decay on 50 random models (slack 1e-9)",
                10.0, [] {
    RunConfig cfg(two_state_env(0.9));
    cfg.op = OperatorKind::Igm;
    cfg.max_iters = 2000;
    cfg.tolerance = 1e-9;
    IterationLog log = run_fqi(cfg);
    JointActionIndex ja2(2, 2);
    if (log.status != RunStatus::Converged) return false;
    if (std::abs(log.final_joint->value(1, ja2.encode({0, 0})) - 10.0) > 1e-6) return false;

    Rng rng(8081);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(3));
      const int m = 2 + static_cast<int>(rng.below(2));
      const int S = 1 + static_cast<int>(rng.below(4));
      const double gamma = frand(rng, 0.3, 0.9);
      LatentMmdp env = random_mmdp(rng.below(1u << 31), n, S, m, gamma);
      JointDistribution dist = uniform_distribution(env);
      ValueIterationResult star = value_iteration(env, 1e-13);
      JointQ q = JointQ::zeros(env);
      const double d0 = q.sup_distance(star.q);
      double bound = d0;
      for (int t = 1; t <= 40; ++t) {
        q = igm_iterate(env, dist, q);
        bound *= gamma;
        if (q.sup_distance(star.q) > bound + 1e-9) return false;
      }
    }
    return true;
  });

  run_criterion(5, "oracle equivalence: 200 random instances, closed-form totals within 1e-8 of the numeric solve, residuals within 1e-9",
                30.0, [] {
    Rng rng(314159);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(3));
      const int m = 2 + static_cast<int>(rng.below(2));
      const int S = 1 + static_cast<int>(rng.below(4));
      LatentMmdp env = random_mmdp(rng.below(1u << 31), n, S, m, 0.7);
      ProductPolicy policy = ProductPolicy::uniform(env);
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < S; ++s) {
          std::vector<double> row(static_cast<std::size_t>(m));
          double total = 0.0;
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
          target.set_value(s, j, frand(rng, -3.0, 3.0));

      FactoredQ closed = lvf_project(env, dist, target);
      FactoredQ numeric = lvf_project_numeric(env, dist, target);
      JointActionIndex ja(n, m);
      for (int s = 0; s < S; ++s)
        for (std::int64_t j = 0; j < ja.count(); ++j)
          if (std::abs(closed.q_tot(s, ja, j) - numeric.q_tot(s, ja, j)) > 1e-8) return false;
      const double res_closed = weighted_fit_error(dist, target, closed.q_tot_table(S));
      const double res_numeric = weighted_fit_error(dist, target, numeric.q_tot_table(S));
      if (std::abs(res_closed - res_numeric) > 1e-9) return false;
    }
    return true;
  });

  run_criterion(6, "explicit pseudoinverse: all three defining conditions within 1e-9 for n in {1,2,3}, m in {2,3}, uniform + 10 random factor sets",
                10.0, [] {
    for (int n = 1; n <= 3; ++n) {
      for (int m = 2; m <= 3; ++m) {
        std::vector<std::vector<double>> uniform(static_cast<std::size_t>(n),
                                                 std::vector<double>(static_cast<std::size_t>(m), 1.0 / m));
        PseudoinverseReport report = verify_pseudoinverse(n, m, uniform, 10, 1000 + 10 * n + m);
        if (!report.ok(1e-9) || report.sets_checked != 11) return false;
      }
    }
    return true;
  });

  run_criterion(7, "expansion witness: random search over 10000 pairs finds a ratio above 0.9 on the two-state uniform projection",
                5.0, [] {
    LatentMmdp env = two_state_env(0.9);
    ContractionSearchResult res = contraction_ratio_search(env, uniform_distribution(env), 10000, 20260819);
    return res.max_ratio > 0.9;
  });

  run_criterion(8, "reduction round trip: 100 random binary least-squares instances match an independent affine solver within 1e-8",
                10.0, [] {
    Rng rng(271828);
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 1 + static_cast<int>(rng.below(4));
      const int r = 3 + static_cast<int>(rng.below(8));
      std::vector<std::vector<int>> rows(static_cast<std::size_t>(r));
      std::vector<double> labels(static_cast<std::size_t>(r));
      std::vector<double> weights(static_cast<std::size_t>(r));
      for (int k = 0; k < r; ++k) {
        rows[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = static_cast<int>(rng.below(2));
        labels[static_cast<std::size_t>(k)] = frand(rng, -2.0, 2.0);
        weights[static_cast<std::size_t>(k)] = 0.25 + rng.unit();
      }
      AffineReduction red = reduce_lstsq_to_mmdp(rows, labels, weights);
      AffineFit fit = fit_reduction(red);

      Eigen::MatrixXd design(r, d + 1);
      Eigen::VectorXd rhs(r);
      for (int k = 0; k < r; ++k) {
        const double root = std::sqrt(weights[static_cast<std::size_t>(k)]);
        for (int c = 0; c < d; ++c)
          design(k, c) = root * rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        design(k, d) = root;
        rhs(k) = root * labels[static_cast<std::size_t>(k)];
      }
      Eigen::VectorXd beta = design.completeOrthogonalDecomposition().solve(rhs);
      for (int k = 0; k < r; ++k) {
        double pred = beta(d);
        for (int c = 0; c < d; ++c) pred += beta(c) * rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        if (std::abs(fit.predictions[static_cast<std::size_t>(k)] - pred) > 1e-8) return false;
      }
    }
    return true;
  });

  run_criterion(9, "residue invariance: 100 random valid residue specs leave fitted totals within 1e-10 of the zero-residue output",
                10.0, [] {
    Rng rng(161803);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + static_cast<int>(rng.below(2));
      const int m = 2 + static_cast<int>(rng.below(2));
      const int S = 1 + static_cast<int>(rng.below(3));
      LatentMmdp env = random_mmdp(rng.below(1u << 31), n, S, m, 0.6);
      JointDistribution dist = uniform_distribution(env);
      TargetTable target = TargetTable::zeros(env);
      for (int s = 0; s < S; ++s)
        for (std::int64_t j = 0; j < env.joint_actions().count(); ++j)
          target.set_value(s, j, frand(rng, -2.0, 2.0));
      ResidueSpec w = ResidueSpec::zeros(env);
      for (int s = 0; s < S; ++s) {
        double sum = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
          const double u = frand(rng, -1.0, 1.0);
          w.set_value(i, s, u);
          sum += u;
        }
        w.set_value(n - 1, s, -sum);
      }
      if (!w.violations(env).empty()) return false;
      FactoredQ base = lvf_project(env, dist, target);
      FactoredQ shifted = lvf_project(env, dist, target, w);
      JointActionIndex ja(n, m);
      for (int s = 0; s < S; ++s)
        for (std::int64_t j = 0; j < ja.count(); ++j)
          if (std::abs(base.q_tot(s, ja, j) - shifted.q_tot(s, ja, j)) > 1e-10) return false;
    }
    return true;
  });

  run_criterion(10, "eta sweep on the numeric path: eta 0 diverges, eta 1 converges to the optimal greedy action; intermediates logged",
                60.0, [] {
    RunConfig base(two_state_env(0.9));
    base.op = OperatorKind::LvfNumeric;
    base.max_iters = 300;
    SweepResult res = sweep(base, SweepParam::Eta, {0.0, 0.25, 0.5, 0.75, 1.0});
    for (const SweepEntry& entry : res.entries) {
      if (entry.log)
        std::printf("      eta %.2f -> %s, final norm %.4f\n", entry.value,
                    status_name(entry.log->status).c_str(), entry.log->last().q_tot_inf_norm);
      else
        std::printf("      eta %.2f -> error: %s\n", entry.value, entry.error.c_str());
    }
    return res.entries.front().log && res.entries.front().log->status == RunStatus::Diverged &&
           res.entries.back().log && res.entries.back().log->status == RunStatus::Converged &&
           res.entries.back().log->last().greedy_optimal;
  });

  if (failures == 0) {
    std::printf("all 10 acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criterion(s) failed\n", failures);
  return 1;
}
