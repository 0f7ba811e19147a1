#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/rng.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

/// Binary design matrix of the additive-fit regression.
///
/// Row j is the joint action with mixed-radix digits a_u; column
/// i = u * m + v carries a 1 exactly when a_u = v. Every row therefore
/// holds n ones, one per agent block.
class EncodingMatrix {
public:
  EncodingMatrix(int num_agents, int num_actions, std::int64_t row_cap = 4096)
      : ja_(num_agents, num_actions) {
    if (ja_.count() > row_cap)
      throw std::invalid_argument("EncodingMatrix: m^n exceeds the row cap of " + std::to_string(row_cap));
    dense_.assign(static_cast<std::size_t>(ja_.count()) * static_cast<std::size_t>(cols()), 0.0);
    for (std::int64_t j = 0; j < ja_.count(); ++j)
      for (int u = 0; u < num_agents; ++u)
        dense_[static_cast<std::size_t>(j) * static_cast<std::size_t>(cols()) +
               static_cast<std::size_t>(u * num_actions + ja_.digit(j, u))] = 1.0;
  }

  std::int64_t rows() const { return ja_.count(); }
  int cols() const { return ja_.num_agents() * ja_.num_actions(); }
  int num_agents() const { return ja_.num_agents(); }
  int num_actions() const { return ja_.num_actions(); }
  const JointActionIndex& joint_actions() const { return ja_; }

  double entry(std::int64_t row, int col) const {
    return dense_[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(col)];
  }
  const std::vector<double>& dense() const { return dense_; }

  /// Fitted value of joint action `row` under coefficients `x`.
  double predict(std::int64_t row, const std::vector<double>& x) const {
    double sum = 0.0;
    for (int u = 0; u < num_agents(); ++u)
      sum += x[static_cast<std::size_t>(u * num_actions() + ja_.digit(row, u))];
    return sum;
  }

private:
  JointActionIndex ja_;
  std::vector<double> dense_;  // row-major
};

inline EncodingMatrix build_encoding_matrix(int num_agents, int num_actions, std::int64_t row_cap = 4096) {
  return EncodingMatrix(num_agents, num_actions, row_cap);
}

/// One weighted least-squares problem over an encoding matrix.
///
/// `factors` is optional: when present it holds the per-agent action
/// probabilities whose outer product equals `weights`, enabling the
/// closed-form route.
struct WlsInstance {
  std::vector<double> weights;
  std::vector<double> targets;
  std::vector<std::vector<double>> factors;
};

struct WlsSolution {
  std::vector<double> x;
  double residual = 0.0;  // achieved weighted squared error
};

/// Minimum-norm minimizer of sum_j p_j (A_j x - b_j)^2.
///
/// Solves the normal equations through an eigendecomposition of the Gram
/// matrix, dropping eigenvalues below 1e-10 times the largest. The Gram
/// matrix is always rank deficient here (value can be shifted between
/// agents without changing fitted values), so the cutoff is structural,
/// not a numerical afterthought.
inline WlsSolution weighted_lstsq_solve(const WlsInstance& inst, const EncodingMatrix& A) {
  const std::int64_t rows = A.rows();
  const int cols = A.cols();
  if (static_cast<std::int64_t>(inst.weights.size()) != rows ||
      static_cast<std::int64_t>(inst.targets.size()) != rows)
    throw std::invalid_argument("weighted_lstsq_solve: weight/target length must equal m^n");
  double weight_sum = 0.0;
  for (double w : inst.weights) {
    if (w < 0.0) throw std::invalid_argument("weighted_lstsq_solve: negative weight");
    weight_sum += w;
  }
  if (!(weight_sum > 0.0)) throw std::invalid_argument("weighted_lstsq_solve: all weights are zero");

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Amat(
      A.dense().data(), rows, cols);
  Eigen::Map<const Eigen::VectorXd> p(inst.weights.data(), rows);
  Eigen::Map<const Eigen::VectorXd> b(inst.targets.data(), rows);

  const Eigen::MatrixXd gram = Amat.transpose() * p.asDiagonal() * Amat;
  const Eigen::VectorXd rhs = Amat.transpose() * p.cwiseProduct(b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(gram);
  if (eigen.info() != Eigen::Success)
    throw std::runtime_error("weighted_lstsq_solve: eigendecomposition failed");
  const Eigen::VectorXd& lambda = eigen.eigenvalues();
  const double cutoff = 1e-10 * std::max(lambda.maxCoeff(), 0.0);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols);
  for (int k = 0; k < cols; ++k) {
    if (lambda[k] > cutoff && lambda[k] > 0.0) {
      const Eigen::VectorXd v = eigen.eigenvectors().col(k);
      x += v * (v.dot(rhs) / lambda[k]);
    }
  }

  WlsSolution solution;
  solution.x.assign(x.data(), x.data() + cols);
  const Eigen::VectorXd fit = Amat * x;
  solution.residual = (p.array() * (fit - b).array().square()).sum();
  return solution;
}

namespace detail {

/// p(a) for joint action `joint` as the product of per-agent factors.
inline double factored_mass(const std::vector<std::vector<double>>& factors, const JointActionIndex& ja,
                            std::int64_t joint) {
  double p = 1.0;
  for (int u = 0; u < ja.num_agents(); ++u)
    p *= factors[static_cast<std::size_t>(u)][static_cast<std::size_t>(ja.digit(joint, u))];
  return p;
}

inline void check_factors(const std::vector<std::vector<double>>& factors, int num_actions) {
  if (factors.empty()) throw std::invalid_argument("factored solve: no factor vectors");
  for (const auto& f : factors) {
    if (static_cast<int>(f.size()) != num_actions)
      throw std::invalid_argument("factored solve: factor vector has wrong length");
    double sum = 0.0;
    for (double p : f) {
      if (!(p > 0.0)) throw std::invalid_argument("factored solve: factors must be strictly positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("factored solve: factor vector is not normalized");
  }
}

}  // namespace detail

/// Closed-form solution of the factored-weight regression.
///
/// For strictly positive product weights p(a) = prod_u p_u(a_u), the
/// coefficient of agent u, action v is the counterfactual evaluation of v
/// minus (n-1)/n times the weighted mean target, plus the free-vector
/// contribution (1/m) sum_{v'} w_{u m + v'} - (1/(mn)) sum w. Fitted
/// values A x are invariant to the free vector. Pass an empty `free_w`
/// for the canonical zero choice.
inline std::vector<double> factored_closed_form(const std::vector<std::vector<double>>& factors,
                                                const std::vector<double>& targets,
                                                const std::vector<double>& free_w = {}) {
  const int n = static_cast<int>(factors.size());
  detail::check_factors(factors, factors.empty() ? 0 : static_cast<int>(factors.front().size()));
  const int m = static_cast<int>(factors.front().size());
  const JointActionIndex ja(n, m);
  if (static_cast<std::int64_t>(targets.size()) != ja.count())
    throw std::invalid_argument("factored_closed_form: target length must equal m^n");
  if (!free_w.empty() && static_cast<int>(free_w.size()) != n * m)
    throw std::invalid_argument("factored_closed_form: free vector length must equal m*n");

  std::vector<double> slot_mass(static_cast<std::size_t>(n * m), 0.0);
  double total = 0.0;
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    const double pb = detail::factored_mass(factors, ja, j) * targets[static_cast<std::size_t>(j)];
    total += pb;
    for (int u = 0; u < n; ++u) slot_mass[static_cast<std::size_t>(u * m + ja.digit(j, u))] += pb;
  }

  double w_total = 0.0;
  for (double w : free_w) w_total += w;

  std::vector<double> x(static_cast<std::size_t>(n * m));
  const double baseline = (static_cast<double>(n - 1) / n) * total;
  for (int u = 0; u < n; ++u) {
    double w_block = 0.0;
    if (!free_w.empty())
      for (int v = 0; v < m; ++v) w_block += free_w[static_cast<std::size_t>(u * m + v)];
    for (int v = 0; v < m; ++v) {
      const double evaluation =
          slot_mass[static_cast<std::size_t>(u * m + v)] / factors[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)];
      double value = evaluation - baseline;
      if (!free_w.empty()) value += w_block / m - w_total / (m * static_cast<double>(n));
      x[static_cast<std::size_t>(u * m + v)] = value;
    }
  }
  return x;
}

/// Violations of the explicit pseudoinverse construction.
struct PseudoinverseReport {
  double max_symmetry = 0.0;        // both products against their transposes
  double max_reconstruction = 0.0;  // A = A Ad A, rows pre-scaled by sqrt(p)
  double max_idempotence = 0.0;     // Ad = Ad A Ad
  int sets_checked = 0;
  double max_violation() const {
    return std::max(max_symmetry, std::max(max_reconstruction, max_idempotence));
  }
  bool ok(double tol = 1e-9) const { return max_violation() <= tol; }
};

namespace detail {

/// Explicit entry formula for the pseudoinverse of the sqrt(p)-scaled
/// encoding matrix; verified numerically by verify_pseudoinverse.
inline Eigen::MatrixXd explicit_pseudoinverse(const EncodingMatrix& A,
                                              const std::vector<std::vector<double>>& factors) {
  const int n = A.num_agents();
  const int m = A.num_actions();
  const JointActionIndex& ja = A.joint_actions();
  Eigen::MatrixXd Ad(n * m, ja.count());
  for (std::int64_t j = 0; j < ja.count(); ++j) {
    const double mass = factored_mass(factors, ja, j);
    const double root_mass = std::sqrt(mass);
    // sqrt(p(a_{-u}) / p_u(a_u)) = sqrt(p(a)) / p_u(a_u)
    std::vector<double> root_ratio(static_cast<std::size_t>(n));
    double ratio_sum = 0.0;
    for (int u = 0; u < n; ++u) {
      root_ratio[static_cast<std::size_t>(u)] =
          root_mass / factors[static_cast<std::size_t>(u)][static_cast<std::size_t>(ja.digit(j, u))];
      ratio_sum += root_ratio[static_cast<std::size_t>(u)];
    }
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < m; ++v) {
        double value = -(static_cast<double>(n - 1) / n) * root_mass -
                       root_ratio[static_cast<std::size_t>(u)] / m + ratio_sum / (m * static_cast<double>(n));
        if (ja.digit(j, u) == v) value += root_ratio[static_cast<std::size_t>(u)];
        Ad(u * m + v, j) = value;
      }
    }
  }
  return Ad;
}

inline void accumulate_conditions(const EncodingMatrix& A, const std::vector<std::vector<double>>& factors,
                                  PseudoinverseReport& report) {
  const JointActionIndex& ja = A.joint_actions();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Amat(
      A.dense().data(), ja.count(), A.cols());
  Eigen::VectorXd root_p(ja.count());
  for (std::int64_t j = 0; j < ja.count(); ++j)
    root_p[j] = std::sqrt(factored_mass(factors, ja, j));
  const Eigen::MatrixXd Ap = root_p.asDiagonal() * Amat;
  const Eigen::MatrixXd Ad = explicit_pseudoinverse(A, factors);

  const Eigen::MatrixXd left = Ap * Ad;
  const Eigen::MatrixXd right = Ad * Ap;
  report.max_symmetry = std::max(report.max_symmetry, (left - left.transpose()).cwiseAbs().maxCoeff());
  report.max_symmetry = std::max(report.max_symmetry, (right - right.transpose()).cwiseAbs().maxCoeff());
  report.max_reconstruction =
      std::max(report.max_reconstruction, (Ap * Ad * Ap - Ap).cwiseAbs().maxCoeff());
  report.max_idempotence = std::max(report.max_idempotence, (Ad * Ap * Ad - Ad).cwiseAbs().maxCoeff());
  ++report.sets_checked;
}

inline std::vector<std::vector<double>> random_positive_factors(int n, int m, Rng& rng) {
  std::vector<std::vector<double>> factors(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) {
    auto& f = factors[static_cast<std::size_t>(u)];
    f.resize(static_cast<std::size_t>(m));
    double sum = 0.0;
    for (int v = 0; v < m; ++v) {
      f[static_cast<std::size_t>(v)] = 0.1 + rng.unit();  // bounded away from zero
      sum += f[static_cast<std::size_t>(v)];
    }
    for (int v = 0; v < m; ++v) f[static_cast<std::size_t>(v)] /= sum;
  }
  return factors;
}

}  // namespace detail

/// Builds the explicit pseudoinverse for the given factor set (plus
/// `random_trials` random strictly positive sets) and measures how far
/// the construction is from satisfying the defining conditions: both
/// products self-adjoint, reconstruction, and idempotence.
inline PseudoinverseReport verify_pseudoinverse(int num_agents, int num_actions,
                                                const std::vector<std::vector<double>>& factors,
                                                int random_trials = 0, std::uint64_t seed = 0) {
  const EncodingMatrix A(num_agents, num_actions, 256);
  PseudoinverseReport report;
  if (!factors.empty()) {
    detail::check_factors(factors, num_actions);
    detail::accumulate_conditions(A, factors, report);
  }
  Rng rng(seed);
  for (int t = 0; t < random_trials; ++t) {
    const auto random_factors = detail::random_positive_factors(num_agents, num_actions, rng);
    detail::accumulate_conditions(A, random_factors, report);
  }
  return report;
}

/// Expected entry of (I - Ad Ap): the projector onto the family of
/// coefficient shifts that leave all fitted values unchanged.
inline double residue_projector_entry(int num_agents, int num_actions, int i, int i2) {
  const double mn = static_cast<double>(num_agents) * num_actions;
  const bool same_agent = i / num_actions == i2 / num_actions;
  const double base = -1.0 / mn;
  return same_agent ? 1.0 / num_actions + base : base;
}

/// Binary affine least squares rewritten as a one-state environment.
///
/// Each input row c_j in {0,1}^n becomes the joint action whose agents
/// play c_j's bits; its label becomes the reward there and its weight the
/// data mass. Duplicate rows merge by weighted mean, which leaves the
/// minimizers of the original problem unchanged.
struct AffineReduction {
  LatentMmdp env;
  JointDistribution dist;
  TargetTable target;
  std::vector<std::int64_t> row_joints;  // joint action of each input row
};

inline AffineReduction reduce_lstsq_to_mmdp(const std::vector<std::vector<int>>& rows,
                                            const std::vector<double>& labels,
                                            const std::vector<double>& weights) {
  if (rows.empty()) throw std::invalid_argument("reduce_lstsq_to_mmdp: no rows");
  if (rows.size() != labels.size() || rows.size() != weights.size())
    throw std::invalid_argument("reduce_lstsq_to_mmdp: rows, labels and weights must align");
  const int n = static_cast<int>(rows.front().size());
  if (n < 1) throw std::invalid_argument("reduce_lstsq_to_mmdp: rows must have at least one column");

  LatentMmdp env(n, 1, 2, 0.0);
  const JointActionIndex& ja = env.joint_actions();
  for (std::int64_t j = 0; j < ja.count(); ++j) env.set_transition(0, j, 0, 1.0);

  std::map<std::int64_t, std::pair<double, double>> merged;  // joint -> (weight, weight*label)
  std::vector<std::int64_t> row_joints;
  row_joints.reserve(rows.size());
  double weight_sum = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != n)
      throw std::invalid_argument("reduce_lstsq_to_mmdp: ragged rows");
    std::vector<int> actions(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
      const int bit = rows[r][static_cast<std::size_t>(u)];
      if (bit != 0 && bit != 1) throw std::invalid_argument("reduce_lstsq_to_mmdp: rows must be binary");
      actions[static_cast<std::size_t>(u)] = bit;
    }
    if (!(weights[r] > 0.0)) throw std::invalid_argument("reduce_lstsq_to_mmdp: weights must be positive");
    const std::int64_t j = ja.encode(actions);
    row_joints.push_back(j);
    auto& slot = merged[j];
    slot.first += weights[r];
    slot.second += weights[r] * labels[r];
    weight_sum += weights[r];
  }

  JointDistribution dist(1, n, 2);
  TargetTable target(1, n, 2);
  for (const auto& [j, slot] : merged) {
    dist.set_prob(0, j, slot.first / weight_sum);
    const double label = slot.second / slot.first;
    env.set_reward(0, j, label);
    target.set_value(0, j, label);
  }
  dist.set_factored_origin(false);

  return AffineReduction{std::move(env), std::move(dist), std::move(target), std::move(row_joints)};
}

/// Affine parameters read back from a one-state factored fit with two
/// actions per agent: slope_i = Q_i(1) - Q_i(0), intercept = sum Q_i(0).
struct AffineRecovery {
  std::vector<double> slopes;
  double intercept = 0.0;
};

inline AffineRecovery recover_affine(const FactoredQ& q) {
  if (q.num_actions() != 2) throw std::invalid_argument("recover_affine: needs two actions per agent");
  AffineRecovery recovery;
  recovery.slopes.resize(static_cast<std::size_t>(q.num_agents()));
  for (int i = 0; i < q.num_agents(); ++i) {
    recovery.slopes[static_cast<std::size_t>(i)] = q.value(i, 0, 1) - q.value(i, 0, 0);
    recovery.intercept += q.value(i, 0, 0);
  }
  return recovery;
}

/// Runs the numeric fit on a reduction and recovers the affine solution.
struct AffineFit {
  AffineRecovery recovery;
  std::vector<double> predictions;  // c_j . slopes + intercept per input row
  double residual = 0.0;
};

inline AffineFit fit_reduction(const AffineReduction& reduction) {
  const int n = reduction.env.num_agents();
  const EncodingMatrix A(n, 2);
  WlsInstance inst;
  inst.weights.resize(static_cast<std::size_t>(A.rows()));
  inst.targets.resize(static_cast<std::size_t>(A.rows()));
  for (std::int64_t j = 0; j < A.rows(); ++j) {
    inst.weights[static_cast<std::size_t>(j)] = reduction.dist.prob(0, j);
    inst.targets[static_cast<std::size_t>(j)] = reduction.target.value(0, j);
  }
  const WlsSolution solution = weighted_lstsq_solve(inst, A);

  FactoredQ q(n, std::vector<int>(static_cast<std::size_t>(n), 1), 2);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < 2; ++v) q.set_value(u, 0, v, solution.x[static_cast<std::size_t>(u * 2 + v)]);

  AffineFit fit;
  fit.recovery = recover_affine(q);
  fit.residual = solution.residual;
  fit.predictions.reserve(reduction.row_joints.size());
  for (std::int64_t j : reduction.row_joints) fit.predictions.push_back(A.predict(j, solution.x));
  return fit;
}

}  // namespace fqlab
