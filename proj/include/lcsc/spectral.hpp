#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcsc/labeling.hpp"
#include "lcsc/rng.hpp"

namespace lcsc {

/// Top-K singular triple of a matrix: m ~ u * sigma.asDiagonal() * v'.
/// u is N x K with u'u = I, v is J x K with v'v = I, sigma is non-increasing.
struct SpectralEmbedding {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v;
};

/// Row sums; the diagonal of the degree matrix.
inline Eigen::VectorXd degree_vector(const Eigen::MatrixXd& r) {
  return r.rowwise().sum();
}

/// Row i of the output is row i of the input scaled by 1/sqrt(tau + rowsum_i).
/// With tau = 0 every row sum must be strictly positive.
inline Eigen::MatrixXd regularized_laplacian(const Eigen::MatrixXd& r, double tau) {
  if (tau < 0.0) throw std::invalid_argument("regularized_laplacian: tau must be >= 0");
  const Eigen::VectorXd degrees = degree_vector(r);
  Eigen::MatrixXd out(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double d = tau + degrees(i);
    if (d <= 0.0)
      throw std::invalid_argument("regularized_laplacian: row " + std::to_string(i + 1) +
                                  " has non-positive regularized degree " + std::to_string(d) +
                                  "; use tau > 0");
    out.row(i) = r.row(i) / std::sqrt(d);
  }
  return out;
}

namespace detail {

// Largest-magnitude entry of each left singular vector made positive
// (ties broken by lowest index). Purely a reproducibility convention;
// clustering is unaffected by column signs.
inline void fix_singular_vector_signs(Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, c));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (u(arg, c) < 0.0) {
      u.col(c) = -u.col(c);
      v.col(c) = -v.col(c);
    }
  }
}

// Gram-Schmidt a column against the previous ones and normalize; used only
// when a singular value is numerically zero and the quotient column is junk.
inline void orthonormalize_column(Eigen::MatrixXd& m, Eigen::Index c) {
  for (Eigen::Index p = 0; p < c; ++p) m.col(c) -= m.col(p).dot(m.col(c)) * m.col(p);
  double norm = m.col(c).norm();
  if (norm < 1e-12) {
    // Fall back to the first canonical basis vector not spanned yet.
    for (Eigen::Index e = 0; e < m.rows(); ++e) {
      m.col(c).setZero();
      m(e, c) = 1.0;
      for (Eigen::Index p = 0; p < c; ++p) m.col(c) -= m.col(p).dot(m.col(c)) * m.col(p);
      norm = m.col(c).norm();
      if (norm >= 1e-6) break;
    }
  }
  m.col(c) /= norm;
}

}  // namespace detail

/// Deterministic top-K SVD via an eigen-decomposition of the Gram matrix of
/// the smaller dimension. Column signs follow a fixed convention so repeated
/// runs are bit-identical.
inline SpectralEmbedding top_k_svd(const Eigen::MatrixXd& m, Eigen::Index k) {
  const Eigen::Index n = m.rows();
  const Eigen::Index j = m.cols();
  if (k < 1 || k > std::min(n, j))
    throw std::invalid_argument("top_k_svd: k = " + std::to_string(k) +
                                " out of range for a " + std::to_string(n) + "x" +
                                std::to_string(j) + " matrix");

  SpectralEmbedding emb;
  emb.sigma.resize(k);

  const bool tall = n >= j;
  const Eigen::MatrixXd gram = tall ? Eigen::MatrixXd(m.transpose() * m)
                                    : Eigen::MatrixXd(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("top_k_svd: eigensolver failed to converge");

  const Eigen::Index p = gram.rows();
  Eigen::MatrixXd small_vectors(p, k);  // singular vectors of the smaller side
  for (Eigen::Index c = 0; c < k; ++c) {
    // Eigenvalues come back in increasing order.
    const Eigen::Index src = p - 1 - c;
    emb.sigma(c) = std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
    small_vectors.col(c) = eig.eigenvectors().col(src);
  }

  // Recover the other side as m * x / sigma. The Gram route cannot resolve
  // singular values below sigma_1 * sqrt(eps); such columns (and any whose
  // quotient fails to come out unit-norm) are completed orthonormally.
  const double sigma_floor = std::max(emb.sigma(0), 1.0) *
                             std::sqrt(std::numeric_limits<double>::epsilon()) *
                             static_cast<double>(std::max(n, j));
  Eigen::MatrixXd other = tall ? Eigen::MatrixXd(m * small_vectors)
                               : Eigen::MatrixXd(m.transpose() * small_vectors);
  for (Eigen::Index c = 0; c < k; ++c) {
    bool resolved = emb.sigma(c) > sigma_floor;
    if (resolved) {
      other.col(c) /= emb.sigma(c);
      resolved = std::abs(other.col(c).norm() - 1.0) < 1e-8;
    }
    if (!resolved) detail::orthonormalize_column(other, c);
  }

  if (tall) {
    emb.u = std::move(other);
    emb.v = std::move(small_vectors);
  } else {
    emb.u = std::move(small_vectors);
    emb.v = std::move(other);
  }
  detail::fix_singular_vector_signs(emb.u, emb.v);
  return emb;
}

/// Rows divided by their Euclidean norm. Rows with norm below 1e-12 are left
/// as zero rows and reported in zero_rows.
struct RowNormalized {
  Eigen::MatrixXd rows;
  std::vector<Eigen::Index> zero_rows;
};

inline RowNormalized row_normalize(const Eigen::MatrixXd& u) {
  RowNormalized out;
  out.rows = u;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double norm = u.row(i).norm();
    if (norm < 1e-12) {
      out.rows.row(i).setZero();
      out.zero_rows.push_back(i);
    } else {
      out.rows.row(i) /= norm;
    }
  }
  return out;
}

/// Entrywise ratios of columns 2..K to column 1: out(i, k) = u(i, k+1) / u(i, 1).
/// Denominators smaller than 1e-10 * max_i |u(i, 1)| are replaced by the
/// signed floor so noise-level first-column entries cannot blow up a row.
inline Eigen::MatrixXd ratio_embedding(const Eigen::MatrixXd& u) {
  if (u.cols() < 2)
    throw std::invalid_argument("ratio_embedding: needs at least two columns");
  const double scale = u.col(0).cwiseAbs().maxCoeff();
  const double floor = std::max(1e-10 * scale, std::numeric_limits<double>::min());
  Eigen::MatrixXd xi(u.rows(), u.cols() - 1);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    double d = u(i, 0);
    if (std::abs(d) < floor) d = (d < 0.0) ? -floor : floor;
    xi.row(i) = u.row(i).tail(u.cols() - 1) / d;
  }
  return xi;
}

/// Largest singular value.
inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return top_k_svd(m, 1).sigma(0);
}

// ---------------------------------------------------------------------------
// K-means (Lloyd's algorithm with k-means++ seeding and restarts)
// ---------------------------------------------------------------------------

struct KMeansOptions {
  int max_iter = 100;
  int restarts = 10;
};

struct KMeansResult {
  Labeling labeling;
  Eigen::MatrixXd centroids;  // k x d, indexed by label
  double wcss = 0.0;
  int best_restart = 0;
};

namespace detail {

// Squared Euclidean distances from every point to every centroid, as one
// GEMM plus rank-one corrections.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points,
                                         const Eigen::MatrixXd& centroids) {
  Eigen::MatrixXd d = -2.0 * (points * centroids.transpose());
  d.colwise() += points.rowwise().squaredNorm();
  d.rowwise() += centroids.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

inline Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& points, int k, Prng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_below(n)));
  if (k == 1) return centers;
  Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      // Sample proportionally to squared distance from the chosen set.
      const double target = rng.uniform01() * total;
      double cumulative = 0.0;
      Eigen::Index last_positive = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2(i) > 0.0) last_positive = i;
        cumulative += d2(i);
        pick = i;
        if (cumulative >= target && d2(i) > 0.0) break;
      }
      if (d2(pick) <= 0.0) pick = last_positive;
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_below(n));
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace detail

/// One Lloyd run from the given centroids. Returns the final within-cluster
/// sum of squares; `wcss_history`, when provided, receives the assignment-step
/// WCSS of every iteration (a non-increasing sequence). Empty clusters are
/// repaired by donating the point currently farthest from its centroid.
inline double lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd& centroids,
                    std::vector<int>& labels, int max_iter,
                    std::vector<double>* wcss_history = nullptr) {
  const Eigen::Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  double wcss = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd d = detail::squared_distances(points, centroids);
    bool changed = false;
    wcss = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index c = 0;
      wcss += d.row(i).minCoeff(&c);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(c)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
        changed = true;
      }
      ++counts[static_cast<std::size_t>(c)];
    }
    if (wcss_history) wcss_history->push_back(wcss);

    // Repair: hand the globally worst-fitting point to each empty cluster.
    bool repaired = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index worst = -1;
      double worst_dist = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int owner = labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
        if (d(i, owner) > worst_dist) {
          worst_dist = d(i, owner);
          worst = i;
        }
      }
      if (worst < 0) break;  // fewer distinct points than clusters
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(worst)])];
      labels[static_cast<std::size_t>(worst)] = c;
      ++counts[static_cast<std::size_t>(c)];
      repaired = true;
    }

    if (!changed && !repaired && iter > 0) break;

    // Update step: centroids become the means of their members.
    centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      centroids.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0)
        centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  return wcss;
}

/// K-means with k-means++ seeding, best of `restarts` runs by WCSS
/// (ties broken by lowest restart index). Labels are relabeled in order of
/// first occurrence so the output is stable under centroid permutations.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                           const KMeansOptions& opts = {}) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (static_cast<Eigen::Index>(k) > n)
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(n) + " points");
  if (opts.restarts < 1 || opts.max_iter < 1)
    throw std::invalid_argument("kmeans: restarts and max_iter must be >= 1");

  const Prng root(seed);
  double best_wcss = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels;
  Eigen::MatrixXd best_centroids;
  int best_restart = 0;

  std::vector<int> labels;
  for (int r = 0; r < opts.restarts; ++r) {
    Prng stream = root.substream(static_cast<std::uint64_t>(r));
    Eigen::MatrixXd centroids = detail::kmeanspp_init(points, k, stream);
    const double wcss = lloyd(points, centroids, labels, opts.max_iter);
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best_labels = labels;
      best_centroids = centroids;
      best_restart = r;
    }
    if (best_wcss == 0.0) break;  // cannot improve on an exact clustering
  }

  // Relabel by first occurrence and permute centroids to match.
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& label : best_labels) {
    auto& m = remap[static_cast<std::size_t>(label)];
    if (m < 0) m = next++;
    label = m;
  }
  Eigen::MatrixXd centroids(k, points.cols());
  for (int c = 0; c < k; ++c) {
    if (remap[static_cast<std::size_t>(c)] >= 0)
      centroids.row(remap[static_cast<std::size_t>(c)]) = best_centroids.row(c);
  }
  // Clusters that stayed empty (only possible with duplicate-heavy inputs
  // where repair ran out of donors) keep their seeded centroid at the tail.
  for (int c = 0, tail = next; c < k; ++c) {
    if (remap[static_cast<std::size_t>(c)] < 0) centroids.row(tail++) = best_centroids.row(c);
  }

  return KMeansResult{Labeling(std::move(best_labels), k), std::move(centroids), best_wcss,
                      best_restart};
}

}  // namespace lcsc
