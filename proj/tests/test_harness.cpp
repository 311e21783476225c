#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lcsc/harness.hpp"
#include "lcsc/metrics.hpp"
#include "lcsc/model.hpp"

using namespace lcsc;

namespace {

PopulationModel uniform_degree_model() {
  // Both theta columns sum to the same value, so delta_min = delta_max.
  Labeling labeling({0, 0, 1}, 2);
  Eigen::MatrixXd theta(2, 2);
  theta << 0.5, 0.25, 0.25, 0.5;
  return PopulationModel(labeling, ItemParams(theta, 1));
}

}  // namespace

TEST_CASE("epsilon_tau") {
  const auto model = uniform_degree_model();

  SUBCASE("closed form checked by hand substitution") {
    // N = 3, J = 2, M = 1, rho = 0.5, delta = 0.75 everywhere.
    const double log_nj = std::log(5.0);
    for (double tau : {0.0, 2.0}) {
      const double denom = tau + 0.75;
      const double expected =
          (1.0 + std::sqrt(3.0 / denom)) * std::sqrt(0.5 * 3.0 * log_nj / denom);
      CHECK(epsilon_tau(model, tau) == doctest::Approx(expected).epsilon(1e-14));
    }
  }

  SUBCASE("strictly decreasing in tau, limit zero") {
    double previous = epsilon_tau(model, 0.0);
    for (double tau : {0.5, 1.0, 2.0, 8.0, 64.0, 1024.0}) {
      const double value = epsilon_tau(model, tau);
      CHECK(value < previous);
      previous = value;
    }
    CHECK(epsilon_tau(model, 1e18) < 1e-6);
  }
}

TEST_CASE("theory_diagnostics") {
  SUBCASE("equal degrees collapse the degree ratio to one") {
    const auto model = uniform_degree_model();
    const auto d = theory_diagnostics(model, 3.0);
    CHECK(d.delta_min == d.delta_max);
    const double ratio = 3.0 / (3.0 + d.delta_min);
    const double expected = (1.0 + ratio + 2.0 * std::sqrt(ratio));
    CHECK(d.varrho_tau == doctest::Approx(expected).epsilon(1e-14));
  }

  SUBCASE("the default regularizer keeps MN/(tau + delta_min) below one") {
    const auto data = sample_synthetic(40, 8, 2, 5, 1.0, 3);
    const PopulationModel model(data.labeling, data.items);
    const double tau = default_tau(model.n(), model.j(), model.m_levels());
    const double ratio = static_cast<double>(model.m_levels() * model.n()) /
                         (tau + model.delta_min());
    CHECK(ratio <= 1.0);
  }

  SUBCASE("sparsity condition flag") {
    // N = 500, J = 100, M = 5, rho = 0.2: 0.2 * 500 = 100 < 25 * log(600)
    const auto sparse = sample_synthetic(500, 100, 3, 5, 0.2, 1);
    CHECK_FALSE(theory_diagnostics(PopulationModel(sparse.labeling, sparse.items), 2500.0)
                    .assumption1_holds);
    // rho = 2 flips it: 1000 >= 159.9
    const auto dense = sample_synthetic(500, 100, 3, 5, 2.0, 1);
    CHECK(theory_diagnostics(PopulationModel(dense.labeling, dense.items), 2500.0)
              .assumption1_holds);
  }
}

TEST_CASE("bound_ratio_curve") {
  const auto data = sample_synthetic(80, 16, 3, 5, 1.0, 12);
  const PopulationModel model(data.labeling, data.items);
  const std::vector<double> grid{100.0, 400.0, 1600.0};

  SUBCASE("population input gives a zero curve") {
    const auto curve = bound_ratio_curve(model, model.expected(), grid);
    REQUIRE(curve.size() == 3);
    for (const auto& [tau, ratio] : curve) CHECK(ratio == 0.0);
  }

  SUBCASE("sampled input gives finite positive ratios") {
    const auto curve = bound_ratio_curve(model, 7, grid);
    for (const auto& [tau, ratio] : curve) {
      CHECK(ratio > 0.0);
      CHECK(std::isfinite(ratio));
    }
  }

  SUBCASE("empty grid rejected") {
    CHECK_THROWS_AS(bound_ratio_curve(model, 7, {}), std::invalid_argument);
  }
}

TEST_CASE("experiment config") {
  SUBCASE("canned configs validate and build their grids") {
    for (int id = 1; id <= 4; ++id) {
      const auto cfg = ExperimentConfig::canned(id);
      const auto grid = cfg.grid();
      CHECK(!grid.empty());
    }
    CHECK(ExperimentConfig::canned(1).grid().size() == 10);
    CHECK(ExperimentConfig::canned(3).grid().front().j == 200);
  }

  SUBCASE("rho above M is rejected") {
    auto cfg = ExperimentConfig::canned(2);
    cfg.rho_grid = {0.5, 5.5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  SUBCASE("indivisible N is rejected") {
    auto cfg = ExperimentConfig::canned(3);
    cfg.n_grid = {1001};
    CHECK_THROWS_AS(cfg.grid(), std::invalid_argument);
  }

  SUBCASE("two grids at once are rejected") {
    auto cfg = ExperimentConfig::canned(1);
    cfg.rho_grid = {0.5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("run_experiment") {
  ExperimentConfig cfg;
  cfg.n = 60;
  cfg.j_override = 12;
  cfg.k = 3;
  cfg.m_levels = 5;
  cfg.rho = 2.0;
  cfg.repetitions = 3;
  cfg.seed = 5;
  cfg.methods = {Method::rsc, Method::rmk};
  cfg.threads = 1;

  SUBCASE("single repetition equals a by-hand run") {
    auto single = cfg;
    single.repetitions = 1;
    const auto report = run_experiment(single);
    REQUIRE(report.points.size() == 1);

    const Prng rep_stream = Prng(single.seed).substream(0).substream(0);
    const auto data = sample_synthetic(60, 12, 3, 5, 2.0, rep_stream.derive_seed(0));
    const auto est = run_method(Method::rsc, data.response.as_real(), 5, 3,
                                report.points[0].point.tau, rep_stream.derive_seed(1));
    const auto metrics = score(data.labeling, data.items, est);

    const auto& agg = report.points[0].methods[0].second;
    CHECK(agg.completed == 1);
    CHECK(agg.means.clustering_error == metrics.clustering_error);
    CHECK(agg.means.rel_l2 == metrics.rel_l2);
  }

  SUBCASE("metric aggregates are independent of thread count") {
    auto serial = cfg;
    serial.threads = 1;
    auto parallel = cfg;
    parallel.threads = 4;
    const auto a = run_experiment(serial);
    const auto b = run_experiment(parallel);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t g = 0; g < a.points.size(); ++g) {
      for (std::size_t m = 0; m < a.points[g].methods.size(); ++m) {
        CHECK(a.points[g].methods[m].second.means.clustering_error ==
              b.points[g].methods[m].second.means.clustering_error);
        CHECK(a.points[g].methods[m].second.means.rel_l1 ==
              b.points[g].methods[m].second.means.rel_l1);
      }
    }
  }

  SUBCASE("reruns with the same master seed reproduce the report") {
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    for (std::size_t g = 0; g < a.points.size(); ++g) {
      for (std::size_t m = 0; m < a.points[g].methods.size(); ++m) {
        CHECK(a.points[g].methods[m].second.means.hamming_error ==
              b.points[g].methods[m].second.means.hamming_error);
        CHECK(a.points[g].methods[m].second.means.nmi ==
              b.points[g].methods[m].second.means.nmi);
      }
    }
  }

  SUBCASE("population input drives every error to zero") {
    auto ideal = cfg;
    ideal.population_input = true;
    const auto report = run_experiment(ideal);
    for (const auto& [method, agg] : report.points[0].methods) {
      CHECK(agg.means.clustering_error == 0.0);
      CHECK(agg.means.rel_l2 < 1e-9);
      CHECK(agg.failures == 0);
    }
  }

  SUBCASE("selection accuracy lands in the report when enabled") {
    auto with_selection = cfg;
    with_selection.select_k = true;
    with_selection.k_max = 5;
    with_selection.repetitions = 2;
    const auto report = run_experiment(with_selection);
    for (const auto& [method, agg] : report.points[0].methods) {
      CHECK(agg.k_accuracy >= 0.0);
      CHECK(agg.k_accuracy <= 1.0);
    }
  }

  SUBCASE("per-run failures are counted, not fatal") {
    auto doomed = cfg;
    doomed.k = 1;  // the ratio method cannot run with one class
    doomed.methods = {Method::rsc, Method::rscors};
    const auto report = run_experiment(doomed);
    const auto& rsc_agg = report.points[0].methods[0].second;
    const auto& rscors_agg = report.points[0].methods[1].second;
    CHECK(rsc_agg.completed == cfg.repetitions);
    CHECK(rscors_agg.completed == 0);
    CHECK(rscors_agg.failures == cfg.repetitions);
  }
}

TEST_CASE("consistency_trend") {
  ExperimentConfig cfg;
  cfg.k = 2;
  cfg.m_levels = 3;
  cfg.rho = 2.0;
  cfg.j_divisor = 5;
  cfg.n_grid = {40, 80};
  cfg.repetitions = 2;
  cfg.seed = 3;
  cfg.methods = {Method::rsc};
  cfg.threads = 1;

  SUBCASE("population inputs tie at zero and count as consistent") {
    auto ideal = cfg;
    ideal.population_input = true;
    const auto result = consistency_trend(ideal);
    CHECK(result.improves);
    CHECK(result.table.size() == 2);
    CHECK(result.table[0].second.at(Method::rsc) == 0.0);
  }

  SUBCASE("a single grid point is vacuously consistent") {
    auto single = cfg;
    single.n_grid = {40};
    CHECK(consistency_trend(single).improves);
  }

  SUBCASE("requires an n grid") {
    auto missing = cfg;
    missing.n_grid.clear();
    CHECK_THROWS_AS(consistency_trend(missing), std::invalid_argument);
  }
}

TEST_CASE("toy instance is separated as designed") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto data = make_toy_instance(seed);
    CHECK(data.response.n() == 16);
    CHECK(data.response.j() == 10);
    CHECK(data.items.m_levels() == 3);
    // columns differ by at least 1.5 in at least half the items
    int separated = 0;
    for (Eigen::Index j = 0; j < 10; ++j) {
      if (std::abs(data.items.theta()(j, 0) - data.items.theta()(j, 1)) >= 1.5) ++separated;
    }
    CHECK(separated >= 5);
  }
}
