// Demo: one projection step on the cooperative matrix game, with the
// counterfactual credit terms that produce each agent's values.

#include <cstdio>

#include "fqlab/fqlab.hpp"

using namespace fqlab;

int main() {
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

  std::printf("credit terms per agent and action (uniform data):\n");
  std::printf("%s", credit_csv(env, dist, target).c_str());

  std::vector<double> totals(static_cast<std::size_t>(ja.count()));
  for (std::int64_t j = 0; j < ja.count(); ++j) totals[static_cast<std::size_t>(j)] = fit.q_tot(0, ja, j);
  std::printf("\nfitted totals: the averaged penalty drags the diagonal below zero\n%s\n",
              csv_pair_matrix(totals, m).c_str());

  std::printf("greedy actions after the fit: agent 1 -> A%d, agent 2 -> A%d (optimal is <A1,A1>)\n",
              fit.greedy_action(0, 0) + 1, fit.greedy_action(1, 0) + 1);
  return 0;
}
