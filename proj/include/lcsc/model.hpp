#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lcsc/labeling.hpp"
#include "lcsc/rng.hpp"
#include "lcsc/spectral.hpp"

namespace lcsc {

/// Observed N x J response matrix with integer entries in {0, ..., M}.
/// For categorical data with M >= 2 a 0 usually means no-response.
class ResponseMatrix {
 public:
  ResponseMatrix(Eigen::MatrixXi entries, int m_levels)
      : entries_(std::move(entries)), m_levels_(m_levels) {
    if (entries_.rows() < 1 || entries_.cols() < 1)
      throw std::invalid_argument("ResponseMatrix: needs at least one subject and one item");
    if (m_levels_ < 1) throw std::invalid_argument("ResponseMatrix: m_levels must be >= 1");
    for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
      for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
        const int v = entries_(i, j);
        if (v < 0 || v > m_levels_)
          throw std::invalid_argument("ResponseMatrix: entry at row " + std::to_string(i + 1) +
                                      ", column " + std::to_string(j + 1) + " is " +
                                      std::to_string(v) + ", outside {0,...," +
                                      std::to_string(m_levels_) + "}");
      }
    }
  }

  Eigen::Index n() const { return entries_.rows(); }
  Eigen::Index j() const { return entries_.cols(); }
  int m_levels() const { return m_levels_; }
  const Eigen::MatrixXi& entries() const { return entries_; }
  int operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

  Eigen::MatrixXd as_real() const { return entries_.cast<double>(); }

 private:
  Eigen::MatrixXi entries_;
  int m_levels_;
};

/// J x K item parameter matrix. theta(j, k) is the expected response of a
/// class-k subject to item j; entries lie in [0, M]. The sparsity parameter
/// rho is the largest entry, and B = theta / rho has maximum entry exactly 1.
class ItemParams {
 public:
  ItemParams(Eigen::MatrixXd theta, int m_levels)
      : theta_(std::move(theta)), m_levels_(m_levels) {
    if (theta_.rows() < 1 || theta_.cols() < 1)
      throw std::invalid_argument("ItemParams: theta must be non-empty");
    if (m_levels_ < 1) throw std::invalid_argument("ItemParams: m_levels must be >= 1");
    rho_ = theta_.maxCoeff();
    if (theta_.minCoeff() < 0.0 || rho_ > static_cast<double>(m_levels_))
      throw std::invalid_argument("ItemParams: theta entries must lie in [0, M]");
    if (rho_ <= 0.0)
      throw std::invalid_argument("ItemParams: sparsity parameter must be positive");
  }

  const Eigen::MatrixXd& theta() const { return theta_; }
  Eigen::Index j() const { return theta_.rows(); }
  int k() const { return static_cast<int>(theta_.cols()); }
  int m_levels() const { return m_levels_; }

  double rho() const { return rho_; }
  Eigen::MatrixXd normalized() const { return theta_ / rho_; }

  /// K-th largest singular value of B = theta / rho.
  double sigma_k_b() const {
    const auto svd = top_k_svd(normalized(), theta_.cols());
    return svd.sigma(theta_.cols() - 1);
  }

 private:
  Eigen::MatrixXd theta_;
  int m_levels_;
  double rho_;
};

/// max entry of theta; the sparsity parameter rho.
inline double sparsity(const ItemParams& items) { return items.theta().maxCoeff(); }

/// Ground-truth generating model: a labeling with every class occupied and
/// item parameters of matching width. Derived quantities: the expected
/// response matrix Z * theta', its row sums (degrees), and their extremes.
class PopulationModel {
 public:
  PopulationModel(Labeling labeling, ItemParams items)
      : labeling_(std::move(labeling)), items_(std::move(items)) {
    if (labeling_.k() != items_.k())
      throw std::invalid_argument("PopulationModel: labeling and theta disagree on K");
    if (!labeling_.all_classes_nonempty())
      throw std::invalid_argument("PopulationModel: every class needs at least one subject");
    if (items_.sigma_k_b() < 1e-8)
      throw std::invalid_argument("PopulationModel: theta is numerically rank-deficient");
    expected_.resize(labeling_.n(), items_.j());
    for (Eigen::Index i = 0; i < labeling_.n(); ++i)
      expected_.row(i) = items_.theta().col(labeling_[i]).transpose();
    degrees_ = expected_.rowwise().sum();
  }

  const Labeling& labeling() const { return labeling_; }
  const ItemParams& items() const { return items_; }
  Eigen::Index n() const { return labeling_.n(); }
  Eigen::Index j() const { return items_.j(); }
  int k() const { return labeling_.k(); }
  int m_levels() const { return items_.m_levels(); }

  const Eigen::MatrixXd& expected() const { return expected_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }
  double delta_min() const { return degrees_.minCoeff(); }
  double delta_max() const { return degrees_.maxCoeff(); }

 private:
  Labeling labeling_;
  ItemParams items_;
  Eigen::MatrixXd expected_;
  Eigen::VectorXd degrees_;
};

/// Z * theta'; entry (i, j) equals theta(j, label_i).
inline Eigen::MatrixXd expected_responses(const PopulationModel& model) {
  return model.expected();
}

/// Each entry drawn independently as Binomial(M, expected(i, j) / M),
/// realized as M Bernoulli draws consumed row-major. Bit-identical per seed.
inline ResponseMatrix sample_response(const PopulationModel& model, std::uint64_t seed) {
  const int m = model.m_levels();
  Eigen::MatrixXi r(model.n(), model.j());
  Prng rng(seed);
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    for (Eigen::Index j = 0; j < model.j(); ++j) {
      const double p = model.expected()(i, j) / static_cast<double>(m);
      if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("sample_response: success probability " +
                                    std::to_string(p) + " at row " + std::to_string(i + 1) +
                                    ", column " + std::to_string(j + 1));
      r(i, j) = rng.binomial(m, p);
    }
  }
  return ResponseMatrix(std::move(r), m);
}

struct SyntheticData {
  Labeling labeling;
  ItemParams items;
  ResponseMatrix response;
};

/// The synthetic generator used throughout the experiments: labels uniform
/// over [K] (re-drawn until every class is occupied), item parameters
/// theta = rho * B with B a max-normalized matrix of Uniform[0,1] draws.
/// Substreams: 0 labels, 1 item parameters, 2 response sampling.
inline SyntheticData sample_synthetic(Eigen::Index n, Eigen::Index j, int k, int m_levels,
                                      double rho, std::uint64_t seed) {
  if (n < 1 || j < 1) throw std::invalid_argument("sample_synthetic: n and j must be >= 1");
  if (k < 1 || static_cast<Eigen::Index>(k) > std::min(n, j))
    throw std::invalid_argument("sample_synthetic: need 1 <= k <= min(n, j)");
  if (m_levels < 1) throw std::invalid_argument("sample_synthetic: m_levels must be >= 1");
  if (rho <= 0.0 || rho > static_cast<double>(m_levels))
    throw std::invalid_argument("sample_synthetic: rho must lie in (0, M]");

  const Prng root(seed);

  Prng label_rng = root.substream(0);
  std::vector<int> labels(static_cast<std::size_t>(n));
  while (true) {
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (auto& label : labels) {
      label = static_cast<int>(label_rng.uniform_below(static_cast<std::uint64_t>(k)));
      seen[static_cast<std::size_t>(label)] = true;
    }
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) break;
  }
  Labeling labeling(std::move(labels), k);

  Prng theta_rng = root.substream(1);
  Eigen::MatrixXd b(j, k);
  for (Eigen::Index row = 0; row < j; ++row)
    for (Eigen::Index col = 0; col < k; ++col) b(row, col) = theta_rng.uniform01();
  b /= b.maxCoeff();  // max entry exactly 1
  ItemParams items(rho * b, m_levels);

  PopulationModel model(labeling, items);
  ResponseMatrix response = sample_response(model, root.derive_seed(2));
  return SyntheticData{std::move(labeling), std::move(items), std::move(response)};
}

// ResponseMatrix conveniences for the spectral operations.
inline Eigen::VectorXd degree_vector(const ResponseMatrix& r) {
  return degree_vector(r.as_real());
}
inline Eigen::MatrixXd regularized_laplacian(const ResponseMatrix& r, double tau) {
  return regularized_laplacian(r.as_real(), tau);
}

}  // namespace lcsc
