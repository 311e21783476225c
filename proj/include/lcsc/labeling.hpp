#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace lcsc {

/// Class assignment of N subjects to K classes.
///
/// Labels are 0-based internally; file formats and error messages use
/// 1-based class ids. Empty classes are allowed here; ground-truth call
/// sites validate all_classes_nonempty() where the model requires it.
class Labeling {
 public:
  Labeling(std::vector<int> labels, int k) : labels_(std::move(labels)), k_(k) {
    if (k_ < 1) throw std::invalid_argument("Labeling: k must be >= 1");
    if (labels_.empty()) throw std::invalid_argument("Labeling: empty label vector");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || labels_[i] >= k_)
        throw std::invalid_argument("Labeling: label out of range at subject " +
                                    std::to_string(i + 1));
    }
  }

  /// Inverse of one_hot(); rows must contain a single 1 and zeros elsewhere.
  static Labeling from_one_hot(const Eigen::MatrixXd& z) {
    std::vector<int> labels(static_cast<std::size_t>(z.rows()), -1);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      int hit = -1;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double v = z(i, c);
        if (v == 1.0) {
          if (hit >= 0) throw std::invalid_argument("from_one_hot: multiple ones in a row");
          hit = static_cast<int>(c);
        } else if (v != 0.0) {
          throw std::invalid_argument("from_one_hot: entries must be 0 or 1");
        }
      }
      if (hit < 0) throw std::invalid_argument("from_one_hot: row without a 1");
      labels[static_cast<std::size_t>(i)] = hit;
    }
    return Labeling(std::move(labels), static_cast<int>(z.cols()));
  }

  Eigen::Index n() const { return static_cast<Eigen::Index>(labels_.size()); }
  int k() const { return k_; }
  int operator[](Eigen::Index i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& labels() const { return labels_; }

  /// N x K membership matrix with rows summing to 1.
  Eigen::MatrixXd one_hot() const {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n(), k_);
    for (Eigen::Index i = 0; i < n(); ++i) z(i, (*this)[i]) = 1.0;
    return z;
  }

  std::vector<Eigen::Index> class_sizes() const {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k_), 0);
    for (int label : labels_) ++sizes[static_cast<std::size_t>(label)];
    return sizes;
  }

  Eigen::Index n_min() const {
    Eigen::Index m = n();
    for (Eigen::Index s : class_sizes()) m = std::min(m, s);
    return m;
  }

  Eigen::Index n_max() const {
    Eigen::Index m = 0;
    for (Eigen::Index s : class_sizes()) m = std::max(m, s);
    return m;
  }

  bool all_classes_nonempty() const {
    for (Eigen::Index s : class_sizes()) {
      if (s == 0) return false;
    }
    return true;
  }

  /// First subject of each class, so one_hot()(representatives(), :) = I.
  /// Throws if a class is empty.
  std::vector<Eigen::Index> representatives() const {
    std::vector<Eigen::Index> reps(static_cast<std::size_t>(k_), -1);
    for (Eigen::Index i = 0; i < n(); ++i) {
      auto& r = reps[static_cast<std::size_t>((*this)[i])];
      if (r < 0) r = i;
    }
    for (int c = 0; c < k_; ++c) {
      if (reps[static_cast<std::size_t>(c)] < 0)
        throw std::invalid_argument("representatives: class " + std::to_string(c + 1) +
                                    " is empty");
    }
    return reps;
  }

  bool operator==(const Labeling& other) const = default;

 private:
  std::vector<int> labels_;
  int k_;
};

}  // namespace lcsc
