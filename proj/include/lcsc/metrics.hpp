#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lcsc/detail/assignment.hpp"
#include "lcsc/estimators.hpp"
#include "lcsc/model.hpp"

namespace lcsc {

struct MetricsReport {
  double clustering_error = 0.0;
  double hamming_error = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  double rel_l1 = 0.0;
  double rel_l2 = 0.0;
};

namespace detail {

// Contingency counts n(a, b) = #{i : truth_i = a, est_i = b}.
inline Eigen::MatrixXd contingency(const Labeling& truth, const Labeling& est) {
  if (truth.n() != est.n())
    throw std::invalid_argument("metrics: labelings disagree on N");
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(truth.k(), est.k());
  for (Eigen::Index i = 0; i < truth.n(); ++i) n(truth[i], est[i]) += 1.0;
  return n;
}

inline void require_same_k(const Labeling& truth, const Labeling& est, const char* op) {
  if (truth.k() != est.k())
    throw std::invalid_argument(std::string(op) + ": labelings disagree on K (" +
                                std::to_string(truth.k()) + " vs " +
                                std::to_string(est.k()) + ")");
}

constexpr int kExhaustivePermutationLimit = 8;

}  // namespace detail

/// Minimax misclassification: min over permutations pi of
/// max_k (|C_k \ Chat_{pi(k)}| + |Chat_{pi(k)} \ C_k|) / N_k.
/// Exhaustive over K! permutations; K > 8 is rejected (a minimax objective
/// does not decompose into a linear assignment).
inline double clustering_error(const Labeling& truth, const Labeling& est) {
  detail::require_same_k(truth, est, "clustering_error");
  const int k = truth.k();
  if (k > detail::kExhaustivePermutationLimit)
    throw std::invalid_argument("clustering_error: K > 8 not supported");
  if (!truth.all_classes_nonempty())
    throw std::invalid_argument("clustering_error: ground-truth class sizes must be positive");

  const Eigen::MatrixXd n = detail::contingency(truth, est);
  const Eigen::VectorXd truth_sizes = n.rowwise().sum();
  const Eigen::VectorXd est_sizes = n.colwise().sum();

  double best = std::numeric_limits<double>::infinity();
  detail::for_each_permutation(k, [&](const std::vector<int>& perm) {
    double worst = 0.0;
    for (int c = 0; c < k; ++c) {
      const int p = perm[static_cast<std::size_t>(c)];
      const double overlap = n(c, p);
      const double value = (truth_sizes(c) - overlap) + (est_sizes(p) - overlap);
      worst = std::max(worst, value / truth_sizes(c));
    }
    best = std::min(best, worst);
  });
  return best;
}

/// Fraction of subjects whose one-hot rows disagree, minimized over
/// permutations of the estimated classes.
inline double hamming_error(const Labeling& truth, const Labeling& est) {
  detail::require_same_k(truth, est, "hamming_error");
  const int k = truth.k();
  const Eigen::MatrixXd n = detail::contingency(truth, est);

  double best_matches = -1.0;
  if (k <= detail::kExhaustivePermutationLimit) {
    detail::for_each_permutation(k, [&](const std::vector<int>& perm) {
      double matches = 0.0;
      for (int c = 0; c < k; ++c) matches += n(c, perm[static_cast<std::size_t>(c)]);
      best_matches = std::max(best_matches, matches);
    });
  } else {
    const auto assignment = detail::min_cost_assignment(-n);
    best_matches = 0.0;
    for (int c = 0; c < k; ++c) best_matches += n(c, assignment[static_cast<std::size_t>(c)]);
  }
  return (static_cast<double>(truth.n()) - best_matches) / static_cast<double>(truth.n());
}

/// Normalized mutual information with arithmetic-mean normalization of the
/// entropies; natural logarithms. Two single-class partitions score 1.
inline double nmi(const Labeling& truth, const Labeling& est) {
  const Eigen::MatrixXd n = detail::contingency(truth, est);
  const double total = static_cast<double>(truth.n());
  const Eigen::VectorXd a = n.rowwise().sum();
  const Eigen::VectorXd b = n.colwise().sum();

  auto entropy = [total](const Eigen::VectorXd& counts) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
      if (counts(i) > 0.0) {
        const double p = counts(i) / total;
        h -= p * std::log(p);
      }
    }
    return h;
  };
  const double ht = entropy(a);
  const double he = entropy(b);
  if (ht == 0.0 && he == 0.0) return 1.0;  // both partitions are a single class
  if (ht == 0.0 || he == 0.0) return 0.0;

  double mi = 0.0;
  for (Eigen::Index r = 0; r < n.rows(); ++r) {
    for (Eigen::Index c = 0; c < n.cols(); ++c) {
      if (n(r, c) > 0.0)
        mi += (n(r, c) / total) * std::log(n(r, c) * total / (a(r) * b(c)));
    }
  }
  const double value = mi / (0.5 * (ht + he));
  return std::min(1.0, std::max(0.0, value));
}

/// Adjusted Rand index (Hubert-Arabie). Identical pair structure scores 1.
inline double ari(const Labeling& truth, const Labeling& est) {
  const Eigen::MatrixXd n = detail::contingency(truth, est);
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };

  double index = 0.0;
  for (Eigen::Index r = 0; r < n.rows(); ++r)
    for (Eigen::Index c = 0; c < n.cols(); ++c) index += choose2(n(r, c));
  double sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index r = 0; r < n.rows(); ++r) sum_a += choose2(n.row(r).sum());
  for (Eigen::Index c = 0; c < n.cols(); ++c) sum_b += choose2(n.col(c).sum());

  const double pairs = choose2(static_cast<double>(truth.n()));
  const double expected = sum_a * sum_b / pairs;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Relative l1 and Frobenius errors of an item parameter estimate, each
/// minimized over column permutations (independently; the two norms may
/// prefer different matchings).
inline std::pair<double, double> relative_errors(const Eigen::MatrixXd& theta,
                                                 const Eigen::MatrixXd& theta_hat) {
  if (theta.rows() != theta_hat.rows() || theta.cols() != theta_hat.cols())
    throw std::invalid_argument("relative_errors: shapes disagree");
  const double norm_l1 = theta.cwiseAbs().sum();
  const double norm_l2 = theta.norm();
  if (norm_l1 == 0.0) throw std::invalid_argument("relative_errors: theta is all zero");
  const int k = static_cast<int>(theta.cols());

  // Pairwise column costs; a permutation's cost is the sum over matched pairs.
  Eigen::MatrixXd cost_l1(k, k), cost_sq(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      cost_l1(a, b) = (theta_hat.col(a) - theta.col(b)).cwiseAbs().sum();
      cost_sq(a, b) = (theta_hat.col(a) - theta.col(b)).squaredNorm();
    }
  }

  auto minimize = [k](const Eigen::MatrixXd& cost) {
    if (k <= detail::kExhaustivePermutationLimit) {
      double best = std::numeric_limits<double>::infinity();
      detail::for_each_permutation(k, [&](const std::vector<int>& perm) {
        double total = 0.0;
        for (int a = 0; a < k; ++a) total += cost(a, perm[static_cast<std::size_t>(a)]);
        best = std::min(best, total);
      });
      return best;
    }
    const auto assignment = detail::min_cost_assignment(cost);
    double total = 0.0;
    for (int a = 0; a < k; ++a) total += cost(a, assignment[static_cast<std::size_t>(a)]);
    return total;
  };

  return {minimize(cost_l1) / norm_l1, std::sqrt(minimize(cost_sq)) / norm_l2};
}

inline std::pair<double, double> relative_errors(const ItemParams& items,
                                                 const Eigen::MatrixXd& theta_hat) {
  return relative_errors(items.theta(), theta_hat);
}

/// All six scores of an estimation result against the generating truth.
inline MetricsReport score(const Labeling& truth, const ItemParams& items,
                           const EstimationResult& est) {
  MetricsReport report;
  report.clustering_error = clustering_error(truth, est.labeling);
  report.hamming_error = hamming_error(truth, est.labeling);
  report.nmi = nmi(truth, est.labeling);
  report.ari = ari(truth, est.labeling);
  std::tie(report.rel_l1, report.rel_l2) = relative_errors(items, est.theta_hat);
  return report;
}

// ---------------------------------------------------------------------------
// Modularity and selection of the number of classes
// ---------------------------------------------------------------------------

/// Co-response adjacency A = R R'. Entries are integral; the diagonal is the
/// sum of squared responses (equal to the response sum only for binary data).
inline Eigen::MatrixXd adjacency(const ResponseMatrix& r) {
  const Eigen::MatrixXd real = r.as_real();
  return real * real.transpose();
}

inline Eigen::MatrixXd adjacency(const Eigen::MatrixXd& r) { return r * r.transpose(); }

/// Newman-Girvan modularity of a partition on a symmetric non-negative
/// weight matrix, diagonal terms included:
///   Q = (1/2w) sum_{i,j same class} (A(i,j) - d_i d_j / 2w).
inline double modularity(const Eigen::MatrixXd& a, const Labeling& labeling) {
  if (a.rows() != a.cols()) throw std::invalid_argument("modularity: matrix must be square");
  if (a.rows() != labeling.n())
    throw std::invalid_argument("modularity: matrix and labeling disagree on N");
  const double scale = a.cwiseAbs().maxCoeff();
  if (((a - a.transpose()).cwiseAbs().maxCoeff()) > 1e-9 * std::max(scale, 1.0))
    throw std::invalid_argument("modularity: matrix must be symmetric");
  if (a.minCoeff() < 0.0)
    throw std::invalid_argument("modularity: matrix must be non-negative");

  const Eigen::VectorXd d = a.rowwise().sum();
  const double two_omega = d.sum();
  if (two_omega <= 0.0)
    throw std::invalid_argument("modularity: matrix is all zero (omega = 0)");

  // Per-class aggregation of the double sum.
  std::vector<double> within(static_cast<std::size_t>(labeling.k()), 0.0);
  std::vector<double> degree(static_cast<std::size_t>(labeling.k()), 0.0);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labeling[i]);
    degree[c] += d(i);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (labeling[j] == labeling[i]) within[c] += a(i, j);
    }
  }
  double q = 0.0;
  for (std::size_t c = 0; c < within.size(); ++c)
    q += within[c] - degree[c] * degree[c] / two_omega;
  return q / two_omega;
}

/// Per-k modularity profile and the selected number of classes.
struct ModularityProfile {
  std::map<int, double> q_values;        // k -> Q(k); absent where the run failed
  std::map<int, std::string> failures;   // k -> reason
  int k_hat = 0;                         // argmax of q_values, smallest k on ties
  Method method = Method::rsc;
};

namespace detail {

/// Selection sweep over a caller-supplied runner (k, seed) -> Labeling.
/// `start_k` lets ratio-based methods begin at 2 with Q(1) recorded as 0.
inline ModularityProfile modularity_sweep(
    const Eigen::MatrixXd& a, int k_max, int start_k, int repeats, const Prng& root,
    const std::function<Labeling(int, std::uint64_t)>& runner) {
  ModularityProfile profile;
  for (int k = 1; k < start_k && k <= k_max; ++k) profile.q_values[k] = 0.0;
  for (int k = start_k; k <= k_max; ++k) {
    double sum = 0.0;
    bool failed = false;
    for (int rep = 0; rep < repeats; ++rep) {
      const std::uint64_t seed = root.substream(static_cast<std::uint64_t>(k))
                                     .derive_seed(static_cast<std::uint64_t>(rep));
      try {
        sum += modularity(a, runner(k, seed));
      } catch (const std::exception& e) {
        profile.failures[k] = e.what();
        failed = true;
        break;
      }
    }
    if (!failed) profile.q_values[k] = sum / static_cast<double>(repeats);
  }
  if (profile.q_values.empty())
    throw std::runtime_error("estimate_k: every k in the sweep failed");
  int best_k = 0;
  double best_q = -std::numeric_limits<double>::infinity();
  for (const auto& [k, q] : profile.q_values) {  // ascending k, ties keep smallest
    if (q > best_q) {
      best_q = q;
      best_k = k;
    }
  }
  profile.k_hat = best_k;
  return profile;
}

}  // namespace detail

/// Run `method` for k = 1..k_max, score each fit by the modularity of its
/// partition on A = RR', and select the argmax (smallest k on ties). Each k
/// gets a fresh seed substream; failures are recorded, not fatal. The
/// ratio-of-singular-vectors method starts at k = 2 with Q(1) = 0 recorded.
inline ModularityProfile estimate_k(const Eigen::MatrixXd& r, int m_levels, Method method,
                                    int k_max, std::optional<double> tau, std::uint64_t seed,
                                    int repeats = 1, const EstimatorOptions& opts = {}) {
  if (k_max < 1 || static_cast<Eigen::Index>(k_max) > std::min(r.rows(), r.cols()))
    throw std::invalid_argument("estimate_k: need 1 <= k_max <= min(N, J)");
  if (repeats < 1) throw std::invalid_argument("estimate_k: repeats must be >= 1");

  const Eigen::MatrixXd a = adjacency(r);
  if (a.maxCoeff() <= 0.0)
    throw std::invalid_argument("estimate_k: response matrix is all zero (omega = 0)");
  const int start_k = (method == Method::rscors) ? 2 : 1;
  auto profile = detail::modularity_sweep(
      a, k_max, start_k, repeats, Prng(seed), [&](int k, std::uint64_t s) {
        return run_method(method, r, m_levels, k, tau, s, opts).labeling;
      });
  profile.method = method;
  return profile;
}

inline ModularityProfile estimate_k(const ResponseMatrix& r, Method method, int k_max,
                                    std::optional<double> tau, std::uint64_t seed,
                                    int repeats = 1, const EstimatorOptions& opts = {}) {
  return estimate_k(r.as_real(), r.m_levels(), method, k_max, tau, seed, repeats, opts);
}

}  // namespace lcsc
