#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lcsc/estimators.hpp"
#include "lcsc/model.hpp"
#include "lcsc/spectral.hpp"
#include "oracles.hpp"

using namespace lcsc;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Prng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 2.0 * rng.uniform01() - 1.0;
  return m;
}

}  // namespace

TEST_CASE("degree vector is the row sums") {
  CHECK(degree_vector(Eigen::MatrixXd::Zero(3, 2)).isZero(0.0));
  Eigen::MatrixXd r(2, 2);
  r << 1, 2, 0, 5;
  const Eigen::VectorXd d = degree_vector(r);
  CHECK(d(0) == 3.0);
  CHECK(d(1) == 5.0);
}

TEST_CASE("regularized laplacian") {
  SUBCASE("tau = 0 scales by the plain degree") {
    Eigen::MatrixXd r(1, 2);
    r << 4, 0;
    const Eigen::MatrixXd l = regularized_laplacian(r, 0.0);
    CHECK(l(0, 0) == 2.0);
    CHECK(l(0, 1) == 0.0);
  }

  SUBCASE("zero rows survive under positive tau") {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2, 3);
    r(0, 0) = 2.0;
    const Eigen::MatrixXd l = regularized_laplacian(r, 1.0);
    CHECK(l.row(1).isZero(0.0));
  }

  SUBCASE("rows scale by 1/sqrt(tau + degree)") {
    Eigen::MatrixXd r(2, 2);
    r << 1, 2, 0, 5;
    const Eigen::MatrixXd l = regularized_laplacian(r, 2.0);
    CHECK(l(0, 0) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-15));
    CHECK(l(0, 1) == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-15));
    CHECK(l(1, 1) == doctest::Approx(5.0 / std::sqrt(7.0)).epsilon(1e-15));
  }

  SUBCASE("tau = 0 with a zero row names the offending row") {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(3, 2);
    r(0, 0) = 1.0;
    r(2, 1) = 1.0;
    CHECK_THROWS_WITH_AS(regularized_laplacian(r, 0.0),
                         doctest::Contains("row 2"), std::invalid_argument);
  }

  SUBCASE("negative tau rejected") {
    CHECK_THROWS_AS(regularized_laplacian(Eigen::MatrixXd::Ones(2, 2), -1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("top_k_svd") {
  SUBCASE("identity matrix has unit singular values") {
    const auto emb = top_k_svd(Eigen::MatrixXd::Identity(3, 3), 2);
    CHECK(emb.sigma(0) == doctest::Approx(1.0));
    CHECK(emb.sigma(1) == doctest::Approx(1.0));
  }

  SUBCASE("rank-one outer product") {
    Eigen::VectorXd a(4);
    a << 1, -2, 3, 0.5;
    Eigen::VectorXd b(3);
    b << 2, 1, -1;
    const auto emb = top_k_svd(a * b.transpose(), 1);
    CHECK(emb.sigma(0) == doctest::Approx(a.norm() * b.norm()).epsilon(1e-10));
  }

  SUBCASE("matches a full-SVD oracle on random matrices") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const Eigen::MatrixXd m = random_matrix(20, 10, seed);
      const auto emb = top_k_svd(m, 3);
      const Eigen::VectorXd reference = oracle::full_singular_values(m);
      for (int i = 0; i < 3; ++i)
        CHECK(emb.sigma(i) == doctest::Approx(reference(i)).epsilon(1e-8));
      // orthonormal factors
      CHECK((emb.u.transpose() * emb.u - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
            1e-8);
      CHECK((emb.v.transpose() * emb.v - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
            1e-8);
      // non-increasing spectrum
      CHECK(emb.sigma(0) >= emb.sigma(1));
      CHECK(emb.sigma(1) >= emb.sigma(2));
    }
  }

  SUBCASE("truncation is the best rank-k approximation") {
    const Eigen::MatrixXd m = random_matrix(12, 9, 17);
    const auto emb = top_k_svd(m, 4);
    const Eigen::MatrixXd residual = m - emb.u * emb.sigma.asDiagonal() * emb.v.transpose();
    const Eigen::VectorXd reference = oracle::full_singular_values(m);
    CHECK(spectral_norm(residual) == doctest::Approx(reference(4)).epsilon(1e-6));
  }

  SUBCASE("wide matrices go through the transposed gram path") {
    const Eigen::MatrixXd m = random_matrix(6, 15, 23);
    const auto emb = top_k_svd(m, 2);
    const Eigen::VectorXd reference = oracle::full_singular_values(m);
    CHECK(emb.sigma(0) == doctest::Approx(reference(0)).epsilon(1e-10));
    CHECK(emb.sigma(1) == doctest::Approx(reference(1)).epsilon(1e-10));
  }

  SUBCASE("deterministic with a positive leading entry per column") {
    const Eigen::MatrixXd m = random_matrix(10, 7, 5);
    const auto a = top_k_svd(m, 3);
    const auto b = top_k_svd(m, 3);
    CHECK(a.u == b.u);
    CHECK(a.v == b.v);
    for (Eigen::Index c = 0; c < 3; ++c) {
      Eigen::Index arg = 0;
      a.u.col(c).cwiseAbs().maxCoeff(&arg);
      CHECK(a.u(arg, c) > 0.0);
    }
  }

  SUBCASE("k beyond the rank still yields orthonormal factors") {
    Eigen::VectorXd a(5);
    a << 1, 2, 3, 4, 5;
    Eigen::VectorXd b(4);
    b << 1, -1, 2, 0.5;
    const auto emb = top_k_svd(a * b.transpose(), 3);
    CHECK(emb.sigma(0) == doctest::Approx(a.norm() * b.norm()));
    CHECK(emb.sigma(1) < 1e-6);
    CHECK((emb.u.transpose() * emb.u - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK((emb.v.transpose() * emb.v - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-8);
  }

  SUBCASE("k out of range") {
    CHECK_THROWS_AS(top_k_svd(Eigen::MatrixXd::Ones(3, 3), 0), std::invalid_argument);
    CHECK_THROWS_AS(top_k_svd(Eigen::MatrixXd::Ones(3, 3), 4), std::invalid_argument);
  }
}

TEST_CASE("row_normalize") {
  Eigen::MatrixXd u(3, 2);
  u << 3, 4, 1, 0, 0, 0;
  const auto rn = row_normalize(u);
  CHECK(rn.rows(0, 0) == doctest::Approx(0.6));
  CHECK(rn.rows(0, 1) == doctest::Approx(0.8));
  CHECK(rn.rows(1, 0) == 1.0);
  CHECK(rn.zero_rows == std::vector<Eigen::Index>{2});
  CHECK(rn.rows.row(2).isZero(0.0));

  // idempotent on unit rows
  const auto again = row_normalize(rn.rows);
  CHECK((again.rows - rn.rows).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ratio_embedding") {
  SUBCASE("constant first column scales the rest") {
    Eigen::MatrixXd u(2, 3);
    u << 0.5, 1.0, 2.0, 0.5, 3.0, -1.0;
    const Eigen::MatrixXd xi = ratio_embedding(u);
    CHECK(xi(0, 0) == doctest::Approx(2.0));
    CHECK(xi(0, 1) == doctest::Approx(4.0));
    CHECK(xi(1, 0) == doctest::Approx(6.0));
    CHECK(xi(1, 1) == doctest::Approx(-2.0));
  }

  SUBCASE("hand-computed 2x2 case") {
    Eigen::MatrixXd u(2, 2);
    u << 0.5, 0.1, 0.5, -0.1;
    const Eigen::MatrixXd xi = ratio_embedding(u);
    CHECK(xi(0, 0) == doctest::Approx(0.2));
    CHECK(xi(1, 0) == doctest::Approx(-0.2));
  }

  SUBCASE("tiny denominators are clamped to the signed floor") {
    Eigen::MatrixXd u(2, 2);
    u << 1.0, 0.3, 1e-14, 0.5;
    const Eigen::MatrixXd xi = ratio_embedding(u);
    CHECK(std::isfinite(xi(1, 0)));
    CHECK(xi(1, 0) == doctest::Approx(0.5 / 1e-10));  // floor = 1e-10 * max|u(:,1)|
    // sign carried through
    u(1, 0) = -1e-14;
    CHECK(ratio_embedding(u)(1, 0) == doctest::Approx(-0.5 / 1e-10));
  }

  SUBCASE("needs at least two columns") {
    CHECK_THROWS_AS(ratio_embedding(Eigen::MatrixXd::Ones(3, 1)), std::invalid_argument);
  }
}

TEST_CASE("spectral_norm") {
  CHECK(spectral_norm(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(1.0));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  CHECK(spectral_norm(d) == doctest::Approx(3.0));
  const Eigen::MatrixXd m = random_matrix(15, 7, 31);
  CHECK(spectral_norm(m) ==
        doctest::Approx(oracle::full_singular_values(m)(0)).epsilon(1e-8));
}

TEST_CASE("kmeans") {
  SUBCASE("k = 1 puts everything in one cluster") {
    const auto km = kmeans(random_matrix(8, 2, 3), 1, 0);
    for (Eigen::Index i = 0; i < 8; ++i) CHECK(km.labeling[i] == 0);
  }

  SUBCASE("duplicated locations separate perfectly with zero WCSS") {
    Eigen::MatrixXd pts(6, 2);
    pts << 0, 0, 0, 0, 5, 5, 5, 5, -3, 1, -3, 1;
    const auto km = kmeans(pts, 3, 42);
    CHECK(km.wcss == 0.0);
    CHECK(km.labeling[0] == km.labeling[1]);
    CHECK(km.labeling[2] == km.labeling[3]);
    CHECK(km.labeling[4] == km.labeling[5]);
    CHECK(km.labeling[0] != km.labeling[2]);
    CHECK(km.labeling[2] != km.labeling[4]);
  }

  SUBCASE("line of two triplets matches the exhaustive optimum") {
    Eigen::MatrixXd pts(6, 1);
    pts << 0.0, 0.1, 0.2, 10.0, 10.1, 10.2;
    const auto km = kmeans(pts, 2, 7);
    std::vector<int> oracle_assign;
    const double oracle_wcss = oracle::best_partition_wcss(pts, 2, &oracle_assign);
    CHECK(km.wcss == doctest::Approx(oracle_wcss).epsilon(1e-12));
    CHECK(km.labeling[0] == km.labeling[1]);
    CHECK(km.labeling[1] == km.labeling[2]);
    CHECK(km.labeling[3] == km.labeling[4]);
    CHECK(km.labeling[4] == km.labeling[5]);
    CHECK(km.labeling[0] != km.labeling[3]);
  }

  SUBCASE("labels are invariant under column sign flips") {
    const Eigen::MatrixXd pts = random_matrix(40, 3, 11);
    Eigen::MatrixXd flipped = pts;
    flipped.col(1) = -flipped.col(1);
    const auto a = kmeans(pts, 4, 9);
    const auto b = kmeans(flipped, 4, 9);
    // same partition up to permutation: first-occurrence canonical labels match
    CHECK(a.labeling == b.labeling);
  }

  SUBCASE("WCSS is monotone non-increasing within a Lloyd run") {
    const Eigen::MatrixXd pts = random_matrix(60, 2, 13);
    Prng rng(55);
    Eigen::MatrixXd centroids = lcsc::detail::kmeanspp_init(pts, 4, rng);
    std::vector<int> labels;
    std::vector<double> history;
    lloyd(pts, centroids, labels, 100, &history);
    REQUIRE(history.size() >= 2);
    for (std::size_t t = 1; t < history.size(); ++t)
      CHECK(history[t] <= history[t - 1] + 1e-9);
  }

  SUBCASE("deterministic given the seed") {
    const Eigen::MatrixXd pts = random_matrix(30, 2, 77);
    const auto a = kmeans(pts, 3, 123);
    const auto b = kmeans(pts, 3, 123);
    CHECK(a.labeling == b.labeling);
    CHECK(a.wcss == b.wcss);
  }

  SUBCASE("k larger than the point count is rejected") {
    CHECK_THROWS_AS(kmeans(Eigen::MatrixXd::Ones(2, 2), 3, 0), std::invalid_argument);
  }
}

TEST_CASE("population embedding structure") {
  // Population structure: the left singular vectors of the population
  // Laplacian are constant within classes, and the representative rows sit
  // at the prescribed distances.
  for (std::uint64_t seed : {3, 14, 27}) {
    const auto data = sample_synthetic(60, 12, 3, 5, 2.5, seed);
    const PopulationModel model(data.labeling, data.items);
    const double tau = default_tau(model.n(), model.j(), model.m_levels());
    const auto emb = top_k_svd(regularized_laplacian(model.expected(), tau), 3);

    const auto reps = data.labeling.representatives();
    Eigen::MatrixXd x(3, 3);
    for (int c = 0; c < 3; ++c) x.row(c) = emb.u.row(reps[static_cast<std::size_t>(c)]);

    // u = Z x
    for (Eigen::Index i = 0; i < model.n(); ++i)
      CHECK((emb.u.row(i) - x.row(data.labeling[i])).cwiseAbs().maxCoeff() < 1e-8);

    // representative distances: ||x_k - x_l|| = sqrt(1/N_k + 1/N_l)
    const auto sizes = data.labeling.class_sizes();
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const double expected =
            std::sqrt(1.0 / static_cast<double>(sizes[static_cast<std::size_t>(a)]) +
                      1.0 / static_cast<double>(sizes[static_cast<std::size_t>(b)]));
        CHECK(std::abs((x.row(a) - x.row(b)).norm() - expected) < 1e-6);
      }
    }

    // row-normalized representatives are mutually sqrt(2) apart
    const auto rn = row_normalize(emb.u);
    CHECK(rn.zero_rows.empty());
    Eigen::MatrixXd y(3, 3);
    for (int c = 0; c < 3; ++c) y.row(c) = rn.rows.row(reps[static_cast<std::size_t>(c)]);
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b)
        CHECK(std::abs((y.row(a) - y.row(b)).norm() - std::sqrt(2.0)) < 1e-6);

    // ratio embedding also collapses to K distinct rows
    const Eigen::MatrixXd xi = ratio_embedding(emb.u);
    for (Eigen::Index i = 0; i < model.n(); ++i)
      CHECK((xi.row(i) - xi.row(reps[static_cast<std::size_t>(data.labeling[i])]))
                .cwiseAbs()
                .maxCoeff() < 1e-8);
  }
}

TEST_CASE("profiling seed streams do not collide") {
  Prng root(1);
  CHECK(root.substream(0).next_u64() != root.substream(1).next_u64());
  CHECK(root.derive_seed(0) != root.derive_seed(1));
  Prng a(1), b(2);
  CHECK(a.next_u64() != b.next_u64());
  // uniform01 in [0, 1)
  Prng u(9);
  for (int t = 0; t < 1000; ++t) {
    const double x = u.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
