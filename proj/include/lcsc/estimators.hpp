#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcsc/model.hpp"
#include "lcsc/spectral.hpp"

namespace lcsc {

/// The six latent class analysis algorithms. Every estimator accepts a
/// real-valued matrix, so feeding the expected response matrix runs the
/// ideal variant of the same pipeline.
enum class Method { rsc, rscn, rscors, pca, rmk, rlmk };

inline constexpr Method kAllMethods[] = {Method::rsc,  Method::rscn, Method::rscors,
                                         Method::pca,  Method::rmk,  Method::rlmk};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::rsc: return "rsc";
    case Method::rscn: return "rscn";
    case Method::rscors: return "rscors";
    case Method::pca: return "pca";
    case Method::rmk: return "rmk";
    case Method::rlmk: return "rlmk";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  for (Method m : kAllMethods) {
    if (name == method_name(m)) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

/// Whether the method uses the regularized Laplacian (and therefore tau).
inline bool method_uses_tau(Method m) { return m != Method::pca && m != Method::rmk; }

/// Raised when an estimated class ends up with no subjects; the item
/// parameter recovery (and every downstream metric) needs K occupied classes.
class EmptyClassError : public std::runtime_error {
 public:
  explicit EmptyClassError(int class_index)
      : std::runtime_error("estimated class " + std::to_string(class_index + 1) +
                           " is empty; item parameter recovery is undefined"),
        class_index_(class_index) {}
  int class_index() const { return class_index_; }

 private:
  int class_index_;
};

struct EstimationResult {
  Labeling labeling;
  Eigen::MatrixXd theta_hat;  // J x K, clipped to [0, M]
  Method method;
  std::optional<double> tau;
  int k;
};

/// Default regularizer: M * max(N, J).
inline double default_tau(Eigen::Index n, Eigen::Index j, int m_levels) {
  if (n < 1 || j < 1 || m_levels < 1)
    throw std::invalid_argument("default_tau: arguments must be positive");
  return static_cast<double>(m_levels) * static_cast<double>(std::max(n, j));
}

/// Item parameter recovery: theta_hat(j, k) is the mean response to item j
/// over subjects assigned to class k, clipped to [0, M]. This equals
/// R' Z (Z'Z)^{-1} since Z'Z is the diagonal of class sizes.
inline Eigen::MatrixXd recover_theta(const Eigen::MatrixXd& responses,
                                     const Labeling& labeling, int m_levels) {
  if (labeling.n() != responses.rows())
    throw std::invalid_argument("recover_theta: labeling and responses disagree on N");
  const int k = labeling.k();
  const auto sizes = labeling.class_sizes();
  for (int c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] == 0) throw EmptyClassError(c);
  }
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(responses.cols(), k);
  for (Eigen::Index i = 0; i < responses.rows(); ++i)
    theta.col(labeling[i]) += responses.row(i).transpose();
  for (int c = 0; c < k; ++c)
    theta.col(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
  return theta.cwiseMax(0.0).cwiseMin(static_cast<double>(m_levels));
}

inline Eigen::MatrixXd recover_theta(const ResponseMatrix& r, const Labeling& labeling) {
  return recover_theta(r.as_real(), labeling, r.m_levels());
}

struct EstimatorOptions {
  KMeansOptions kmeans;
};

namespace detail {

// SVD-based methods need k <= min(N, J); the plain row-clustering methods
// only need k <= N.
inline void check_estimator_args(const Eigen::MatrixXd& r, int m_levels, int k,
                                 bool needs_svd) {
  if (m_levels < 1) throw std::invalid_argument("estimator: m_levels must be >= 1");
  const Eigen::Index bound = needs_svd ? std::min(r.rows(), r.cols()) : r.rows();
  if (k < 1 || static_cast<Eigen::Index>(k) > bound)
    throw std::invalid_argument("estimator: need 1 <= k <= " + std::to_string(bound) +
                                ", got k = " + std::to_string(k));
}

inline EstimationResult finish(const Eigen::MatrixXd& r, int m_levels, Labeling labeling,
                               Method method, std::optional<double> tau, int k) {
  Eigen::MatrixXd theta_hat = recover_theta(r, labeling, m_levels);
  return EstimationResult{std::move(labeling), std::move(theta_hat), method, tau, k};
}

}  // namespace detail

/// Regularized spectral clustering: K-means on the rows of the top-K left
/// singular vectors of the regularized Laplacian.
inline EstimationResult lca_rsc(const Eigen::MatrixXd& r, int m_levels, int k, double tau,
                                std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, true);
  const auto emb = top_k_svd(regularized_laplacian(r, tau), k);
  auto km = kmeans(emb.u, k, seed, opts.kmeans);
  return detail::finish(r, m_levels, std::move(km.labeling), Method::rsc, tau, k);
}

/// As lca_rsc but clustering the row-normalized singular vectors. Rows of
/// the embedding that are numerically zero (all-zero response rows under a
/// large tau) are held out of the clustering and assigned to the nearest
/// centroid afterwards.
inline EstimationResult lca_rscn(const Eigen::MatrixXd& r, int m_levels, int k, double tau,
                                 std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, true);
  const auto emb = top_k_svd(regularized_laplacian(r, tau), k);
  const auto normalized = row_normalize(emb.u);
  if (normalized.zero_rows.empty()) {
    auto km = kmeans(normalized.rows, k, seed, opts.kmeans);
    return detail::finish(r, m_levels, std::move(km.labeling), Method::rscn, tau, k);
  }

  const Eigen::Index n = normalized.rows.rows();
  std::vector<bool> is_zero(static_cast<std::size_t>(n), false);
  for (Eigen::Index i : normalized.zero_rows) is_zero[static_cast<std::size_t>(i)] = true;
  const Eigen::Index n_live = n - static_cast<Eigen::Index>(normalized.zero_rows.size());
  if (n_live < static_cast<Eigen::Index>(k))
    throw std::runtime_error("lca_rscn: fewer nonzero embedding rows than clusters");

  Eigen::MatrixXd live(n_live, normalized.rows.cols());
  std::vector<Eigen::Index> live_index(static_cast<std::size_t>(n_live));
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_zero[static_cast<std::size_t>(i)]) continue;
    live.row(at) = normalized.rows.row(i);
    live_index[static_cast<std::size_t>(at)] = i;
    ++at;
  }
  auto km = kmeans(live, k, seed, opts.kmeans);

  // Zero rows sit at the origin; they all join the centroid closest to it.
  Eigen::Index nearest = 0;
  km.centroids.rowwise().squaredNorm().minCoeff(&nearest);
  std::vector<int> labels(static_cast<std::size_t>(n), static_cast<int>(nearest));
  for (Eigen::Index l = 0; l < n_live; ++l)
    labels[static_cast<std::size_t>(live_index[static_cast<std::size_t>(l)])] = km.labeling[l];
  return detail::finish(r, m_levels, Labeling(std::move(labels), k), Method::rscn, tau, k);
}

/// Spectral clustering on ratios-of-singular-vectors: K-means on the entrywise
/// ratios of singular vectors 2..K to the leading one. Needs K >= 2.
inline EstimationResult lca_rscors(const Eigen::MatrixXd& r, int m_levels, int k, double tau,
                                   std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, true);
  if (k < 2)
    throw std::invalid_argument(
        "lca_rscors: the ratio embedding needs k >= 2; use lca_rsc for k = 1");
  const auto emb = top_k_svd(regularized_laplacian(r, tau), k);
  auto km = kmeans(ratio_embedding(emb.u), k, seed, opts.kmeans);
  return detail::finish(r, m_levels, std::move(km.labeling), Method::rscors, tau, k);
}

/// K-means on the top-K left singular vectors of the response matrix itself.
inline EstimationResult lca_pca(const Eigen::MatrixXd& r, int m_levels, int k,
                                std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, true);
  const auto emb = top_k_svd(r, k);
  auto km = kmeans(emb.u, k, seed, opts.kmeans);
  return detail::finish(r, m_levels, std::move(km.labeling), Method::pca, std::nullopt, k);
}

/// K-means directly on the rows of the response matrix.
inline EstimationResult lca_rmk(const Eigen::MatrixXd& r, int m_levels, int k,
                                std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, false);
  auto km = kmeans(r, k, seed, opts.kmeans);
  return detail::finish(r, m_levels, std::move(km.labeling), Method::rmk, std::nullopt, k);
}

/// K-means on the rows of the regularized Laplacian.
inline EstimationResult lca_rlmk(const Eigen::MatrixXd& r, int m_levels, int k, double tau,
                                 std::uint64_t seed, const EstimatorOptions& opts = {}) {
  detail::check_estimator_args(r, m_levels, k, false);
  auto km = kmeans(regularized_laplacian(r, tau), k, seed, opts.kmeans);
  return detail::finish(r, m_levels, std::move(km.labeling), Method::rlmk, tau, k);
}

/// Dispatch by method; tau defaults to M * max(N, J) for the methods that
/// use it and is ignored otherwise.
inline EstimationResult run_method(Method method, const Eigen::MatrixXd& r, int m_levels,
                                   int k, std::optional<double> tau, std::uint64_t seed,
                                   const EstimatorOptions& opts = {}) {
  const double t = tau.value_or(default_tau(r.rows(), r.cols(), m_levels));
  switch (method) {
    case Method::rsc: return lca_rsc(r, m_levels, k, t, seed, opts);
    case Method::rscn: return lca_rscn(r, m_levels, k, t, seed, opts);
    case Method::rscors: return lca_rscors(r, m_levels, k, t, seed, opts);
    case Method::pca: return lca_pca(r, m_levels, k, seed, opts);
    case Method::rmk: return lca_rmk(r, m_levels, k, seed, opts);
    case Method::rlmk: return lca_rlmk(r, m_levels, k, t, seed, opts);
  }
  throw std::logic_error("run_method: unreachable");
}

// ResponseMatrix conveniences.
inline EstimationResult lca_rsc(const ResponseMatrix& r, int k, double tau, std::uint64_t seed,
                                const EstimatorOptions& opts = {}) {
  return lca_rsc(r.as_real(), r.m_levels(), k, tau, seed, opts);
}
inline EstimationResult lca_rscn(const ResponseMatrix& r, int k, double tau,
                                 std::uint64_t seed, const EstimatorOptions& opts = {}) {
  return lca_rscn(r.as_real(), r.m_levels(), k, tau, seed, opts);
}
inline EstimationResult lca_rscors(const ResponseMatrix& r, int k, double tau,
                                   std::uint64_t seed, const EstimatorOptions& opts = {}) {
  return lca_rscors(r.as_real(), r.m_levels(), k, tau, seed, opts);
}
inline EstimationResult lca_pca(const ResponseMatrix& r, int k, std::uint64_t seed,
                                const EstimatorOptions& opts = {}) {
  return lca_pca(r.as_real(), r.m_levels(), k, seed, opts);
}
inline EstimationResult lca_rmk(const ResponseMatrix& r, int k, std::uint64_t seed,
                                const EstimatorOptions& opts = {}) {
  return lca_rmk(r.as_real(), r.m_levels(), k, seed, opts);
}
inline EstimationResult lca_rlmk(const ResponseMatrix& r, int k, double tau,
                                 std::uint64_t seed, const EstimatorOptions& opts = {}) {
  return lca_rlmk(r.as_real(), r.m_levels(), k, tau, seed, opts);
}
inline EstimationResult run_method(Method method, const ResponseMatrix& r, int k,
                                   std::optional<double> tau, std::uint64_t seed,
                                   const EstimatorOptions& opts = {}) {
  return run_method(method, r.as_real(), r.m_levels(), k, tau, seed, opts);
}

}  // namespace lcsc
