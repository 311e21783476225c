// Independent reference implementations used to freeze expected values.
// Everything here computes by definition (full decompositions, exhaustive
// enumeration, literal double sums) and deliberately shares no code with the
// library paths under test.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

/// Singular values by a full Jacobi SVD.
inline Eigen::VectorXd full_singular_values(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues();
}

/// Best k-partition of points by within-cluster sum of squares, found by
/// enumerating all k^n assignments. n must be small.
inline double best_partition_wcss(const Eigen::MatrixXd& points, int k,
                                  std::vector<int>* best_assignment = nullptr) {
  const int n = static_cast<int>(points.rows());
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double wcss = 0.0;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == c) {
          mean += points.row(i);
          ++count;
        }
      }
      if (count == 0) continue;
      mean /= count;
      for (int i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == c)
          wcss += (points.row(i) - mean).squaredNorm();
      }
    }
    if (wcss < best) {
      best = wcss;
      if (best_assignment) *best_assignment = assign;
    }
    int pos = 0;
    while (pos < n && ++assign[static_cast<std::size_t>(pos)] == k) {
      assign[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == n) break;
  }
  return best;
}

/// Literal evaluation of the minimax per-class clustering error: for every
/// permutation pi, max_k (|C_k intersect complement(Chat_pi(k))| +
/// |complement(C_k) intersect Chat_pi(k)|) / |C_k|, minimized over pi.
inline double clustering_error(const std::vector<int>& truth, const std::vector<int>& est,
                               int k) {
  const int n = static_cast<int>(truth.size());
  std::vector<int> perm(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (int c = 0; c < k; ++c) {
      const int p = perm[static_cast<std::size_t>(c)];
      int in_c_not_p = 0, not_c_in_p = 0, size_c = 0;
      for (int i = 0; i < n; ++i) {
        const bool in_c = truth[static_cast<std::size_t>(i)] == c;
        const bool in_p = est[static_cast<std::size_t>(i)] == p;
        size_c += in_c ? 1 : 0;
        in_c_not_p += (in_c && !in_p) ? 1 : 0;
        not_c_in_p += (!in_c && in_p) ? 1 : 0;
      }
      worst = std::max(worst, static_cast<double>(in_c_not_p + not_c_in_p) / size_c);
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Fraction of subjects whose one-hot rows disagree, minimized over
/// permutations, by direct counting.
inline double hamming_error(const std::vector<int>& truth, const std::vector<int>& est,
                            int k) {
  const int n = static_cast<int>(truth.size());
  std::vector<int> perm(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
  int best = n + 1;
  do {
    int mismatches = 0;
    for (int i = 0; i < n; ++i) {
      if (est[static_cast<std::size_t>(i)] !=
          perm[static_cast<std::size_t>(truth[static_cast<std::size_t>(i)])])
        ++mismatches;
    }
    best = std::min(best, mismatches);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / n;
}

/// Literal double-sum Newman-Girvan modularity, diagonal included.
inline double modularity(const Eigen::MatrixXd& a, const std::vector<int>& labels) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i) += a(i, j);
  double two_omega = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) two_omega += d(i);
  double q = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
        q += a(i, j) - d(i) * d(j) / two_omega;
    }
  }
  return q / two_omega;
}

/// Binomial pmf by direct evaluation.
inline double binomial_pmf(int trials, double p, int m) {
  double coeff = 1.0;
  for (int t = 0; t < m; ++t) coeff *= static_cast<double>(trials - t) / (t + 1);
  return coeff * std::pow(p, m) * std::pow(1.0 - p, trials - m);
}

/// Upper critical values of the chi-square distribution at significance
/// 0.001, indexed by degrees of freedom 1..6.
inline double chi_square_critical_001(int df) {
  constexpr double table[] = {10.828, 13.816, 16.266, 18.467, 20.515, 22.458};
  return table[df - 1];
}

}  // namespace oracle
