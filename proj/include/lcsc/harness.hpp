#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lcsc/estimators.hpp"
#include "lcsc/metrics.hpp"
#include "lcsc/model.hpp"

namespace lcsc {

// ---------------------------------------------------------------------------
// Theory diagnostics
// ---------------------------------------------------------------------------

/// Closed-form concentration scale for || L_tau - population L_tau ||:
///   (1 + sqrt(MN / (tau + delta_min)))
///     * sqrt(rho * max(N, J) * log(N + J) / (tau + delta_min)).
inline double epsilon_tau(const PopulationModel& model, double tau) {
  if (tau < 0.0) throw std::invalid_argument("epsilon_tau: tau must be >= 0");
  const double denom = tau + model.delta_min();
  const double mn = static_cast<double>(model.m_levels()) * static_cast<double>(model.n());
  const double dims = static_cast<double>(std::max(model.n(), model.j()));
  const double rho = model.items().rho();
  return (1.0 + std::sqrt(mn / denom)) *
         std::sqrt(rho * dims * std::log(static_cast<double>(model.n() + model.j())) / denom);
}

struct TheoryDiagnostics {
  double delta_min = 0.0;
  double delta_max = 0.0;
  double sigma_k_b = 0.0;
  double rho = 0.0;
  double epsilon_tau = 0.0;
  double varrho_tau = 0.0;
  bool assumption1_holds = false;
};

/// The computable quantities the error bounds are stated in, evaluated at a
/// given regularizer. The sparsity condition checked is
/// rho * max(N, J) >= M^2 * log(N + J).
inline TheoryDiagnostics theory_diagnostics(const PopulationModel& model, double tau) {
  TheoryDiagnostics d;
  d.delta_min = model.delta_min();
  d.delta_max = model.delta_max();
  d.sigma_k_b = model.items().sigma_k_b();
  d.rho = model.items().rho();
  d.epsilon_tau = epsilon_tau(model, tau);
  const double ratio = static_cast<double>(model.m_levels()) * static_cast<double>(model.n()) /
                       (tau + d.delta_min);
  d.varrho_tau = (1.0 + ratio + 2.0 * std::sqrt(ratio)) * (tau + d.delta_max) /
                 (tau + d.delta_min);
  const double m2 = static_cast<double>(model.m_levels()) * static_cast<double>(model.m_levels());
  d.assumption1_holds = d.rho * static_cast<double>(std::max(model.n(), model.j())) >=
                        m2 * std::log(static_cast<double>(model.n() + model.j()));
  return d;
}

/// Observed-vs-population Laplacian deviation relative to epsilon_tau, per
/// tau: (tau, ||L_tau - population L_tau|| / epsilon_tau).
inline std::vector<std::pair<double, double>> bound_ratio_curve(
    const PopulationModel& model, const Eigen::MatrixXd& observed,
    const std::vector<double>& tau_grid) {
  if (tau_grid.empty()) throw std::invalid_argument("bound_ratio_curve: empty tau grid");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(tau_grid.size());
  for (double tau : tau_grid) {
    const Eigen::MatrixXd diff =
        regularized_laplacian(observed, tau) - regularized_laplacian(model.expected(), tau);
    curve.emplace_back(tau, spectral_norm(diff) / epsilon_tau(model, tau));
  }
  return curve;
}

/// Samples one response matrix from the model and evaluates the curve on it.
inline std::vector<std::pair<double, double>> bound_ratio_curve(
    const PopulationModel& model, std::uint64_t seed, const std::vector<double>& tau_grid) {
  return bound_ratio_curve(model, sample_response(model, seed).as_real(), tau_grid);
}

/// The toy-example model behind the bound-ratio plot: N=500, J=200, K=3,
/// M=5, rho=1, equal-probability classes, uniform item parameters.
inline PopulationModel figure1_model(std::uint64_t seed) {
  const auto data = sample_synthetic(500, 200, 3, 5, 1.0, seed);
  return PopulationModel(data.labeling, data.items);
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments
// ---------------------------------------------------------------------------

struct GridPoint {
  Eigen::Index n = 0;
  Eigen::Index j = 0;
  double rho = 0.0;
  double c0 = 1.0;   // tau multiplier; tau = c0 * M * max(N, J)
  double tau = 0.0;
};

/// Configuration of one Monte Carlo experiment. The canned experiments:
///   1  tau sweep      (rho = 0.8, N = 500, c0 grid)
///   2  sparsity sweep (N = 500, rho grid)
///   3  growth in N    (rho = 0.15, N grid)
///   4  single toy instance (K = 2, M = 3, N = 16, J = 10)
struct ExperimentConfig {
  int experiment = 0;  // 1..4 canned, 0 custom
  int k = 3;
  int m_levels = 5;
  int j_divisor = 5;             // J = N / j_divisor
  Eigen::Index j_override = 0;   // explicit J when nonzero
  Eigen::Index n = 500;
  double rho = 0.8;
  std::vector<double> c0_grid;        // sweep over the tau multiplier
  std::vector<double> rho_grid;       // sweep over sparsity
  std::vector<Eigen::Index> n_grid;   // sweep over subjects
  int repetitions = 20;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::rsc,  Method::rscn, Method::rscors,
                              Method::pca,  Method::rmk,  Method::rlmk};
  bool select_k = false;
  int k_max = 12;
  int select_repeats = 1;
  bool population_input = false;  // run estimators on the expected matrix
  int threads = 0;                // 0 = hardware concurrency
  EstimatorOptions estimator;

  static ExperimentConfig canned(int id) {
    ExperimentConfig cfg;
    cfg.experiment = id;
    switch (id) {
      case 1:
        cfg.rho = 0.8;
        cfg.n = 500;
        for (int i = 1; i <= 10; ++i) cfg.c0_grid.push_back(0.2 * i);
        cfg.methods = {Method::rsc, Method::rscn, Method::rscors, Method::rlmk};
        cfg.select_k = true;
        break;
      case 2:
        cfg.n = 500;
        for (int i = 1; i <= 10; ++i) cfg.rho_grid.push_back(0.2 * i);
        cfg.select_k = true;
        break;
      case 3:
        cfg.rho = 0.15;
        cfg.n_grid = {1000, 2000, 4000};
        break;
      case 4:
        cfg.k = 2;
        cfg.m_levels = 3;
        cfg.n = 16;
        cfg.j_override = 10;
        cfg.repetitions = 1;
        cfg.select_k = true;
        cfg.k_max = 6;
        break;
      default:
        throw std::invalid_argument("ExperimentConfig: experiment id must be 1..4");
    }
    return cfg;
  }

  Eigen::Index j_for(Eigen::Index subjects) const {
    if (j_override > 0) return j_override;
    if (subjects % j_divisor != 0)
      throw std::invalid_argument("ExperimentConfig: N = " + std::to_string(subjects) +
                                  " is not divisible by " + std::to_string(j_divisor));
    return subjects / j_divisor;
  }

  void validate() const {
    if (repetitions < 1) throw std::invalid_argument("ExperimentConfig: repetitions >= 1");
    if (methods.empty()) throw std::invalid_argument("ExperimentConfig: no methods");
    if (k < 1) throw std::invalid_argument("ExperimentConfig: k >= 1");
    if (m_levels < 1) throw std::invalid_argument("ExperimentConfig: m_levels >= 1");
    int grids = (!c0_grid.empty() ? 1 : 0) + (!rho_grid.empty() ? 1 : 0) +
                (!n_grid.empty() ? 1 : 0);
    if (grids > 1)
      throw std::invalid_argument("ExperimentConfig: at most one sweep grid may be set");
    auto check_rho = [this](double value) {
      if (value <= 0.0 || value > static_cast<double>(m_levels))
        throw std::invalid_argument("ExperimentConfig: rho = " + std::to_string(value) +
                                    " must lie in (0, M] with M = " + std::to_string(m_levels));
    };
    if (rho_grid.empty()) check_rho(rho);
    for (double value : rho_grid) check_rho(value);
    for (double value : c0_grid) {
      if (value <= 0.0) throw std::invalid_argument("ExperimentConfig: c0 must be positive");
    }
    for (Eigen::Index value : n_grid) {
      if (value < 1) throw std::invalid_argument("ExperimentConfig: n must be positive");
    }
    if (select_k && k_max < 1)
      throw std::invalid_argument("ExperimentConfig: k_max must be >= 1");
  }

  std::vector<GridPoint> grid() const {
    validate();
    std::vector<GridPoint> points;
    auto push = [this, &points](Eigen::Index subjects, double sparsity, double c0) {
      GridPoint p;
      p.n = subjects;
      p.j = j_for(subjects);
      p.rho = sparsity;
      p.c0 = c0;
      p.tau = c0 * default_tau(p.n, p.j, m_levels);
      points.push_back(p);
    };
    if (!c0_grid.empty()) {
      for (double c0 : c0_grid) push(n, rho, c0);
    } else if (!rho_grid.empty()) {
      for (double value : rho_grid) push(n, value, 1.0);
    } else if (!n_grid.empty()) {
      for (Eigen::Index value : n_grid) push(value, rho, 1.0);
    } else {
      push(n, rho, 1.0);
    }
    return points;
  }
};

/// The single-instance toy experiment: two classes with strongly separated
/// item parameter columns (high vs low blocks plus a little jitter), so every
/// method should recover the partition exactly.
inline SyntheticData make_toy_instance(std::uint64_t seed) {
  constexpr Eigen::Index n = 16, j = 10;
  constexpr int k = 2, m = 3;
  const Prng root(seed);

  Prng label_rng = root.substream(0);
  std::vector<int> labels(static_cast<std::size_t>(n));
  while (true) {
    bool seen[2] = {false, false};
    for (auto& label : labels) {
      label = static_cast<int>(label_rng.uniform_below(2));
      seen[label] = true;
    }
    if (seen[0] && seen[1]) break;
  }
  Labeling labeling(std::move(labels), k);

  Prng theta_rng = root.substream(1);
  Eigen::MatrixXd theta(j, k);
  for (Eigen::Index item = 0; item < j; ++item) {
    const bool first_block = item < j / 2;
    const double high = 2.5 + 0.4 * theta_rng.uniform01();
    const double low = 0.2 + 0.4 * theta_rng.uniform01();
    theta(item, 0) = first_block ? high : low;
    theta(item, 1) = first_block ? low : high;
  }
  ItemParams items(theta, m);
  PopulationModel model(labeling, items);
  ResponseMatrix response = sample_response(model, root.derive_seed(2));
  return SyntheticData{std::move(labeling), std::move(items), std::move(response)};
}

/// Per-method aggregate over the repetitions of one grid point.
struct MethodAggregate {
  MetricsReport means;
  double mean_seconds = 0.0;
  double k_accuracy = std::numeric_limits<double>::quiet_NaN();  // NaN when selection is off
  int completed = 0;
  int failures = 0;
};

struct GridPointReport {
  GridPoint point;
  std::vector<std::pair<Method, MethodAggregate>> methods;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<GridPointReport> points;
};

namespace detail {

struct RepOutcome {
  bool ok = false;
  MetricsReport metrics;
  double seconds = 0.0;
  bool k_correct = false;
  std::string error;
};

// Map [0, count) over at most `threads` workers; fn(index) must be pure.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int width = std::min(threads, count);
  pool.reserve(static_cast<std::size_t>(width));
  for (int t = 0; t < width; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Run the configured experiment: per grid point and repetition, draw a
/// dataset, run every method, score it, and (optionally) select K by the
/// modularity sweep. Streams are keyed by (master seed, grid index,
/// repetition index), and aggregation walks repetitions in index order, so
/// the metric aggregates do not depend on thread count. Reported seconds
/// cover the estimator call only.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto grid = config.grid();
  ExperimentReport report;
  report.config = config;

  int threads = config.threads;
  if (threads <= 0)
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  const Prng master(config.seed);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const GridPoint& point = grid[gi];
    const int reps = config.repetitions;
    const int n_methods = static_cast<int>(config.methods.size());

    // A tau sweep changes the algorithm, not the generator, so every c0
    // point sees the same datasets (matching the experimental protocol of
    // evaluating the whole tau grid on each generated matrix). Grids over
    // rho or N change the generator and get independent streams.
    const std::uint64_t data_grid_index = config.c0_grid.empty() ? gi : 0;

    // outcomes[rep * n_methods + method]
    std::vector<detail::RepOutcome> outcomes(
        static_cast<std::size_t>(reps) * static_cast<std::size_t>(n_methods));

    detail::parallel_for(reps, threads, [&](int rep) {
      const Prng rep_stream =
          master.substream(data_grid_index).substream(static_cast<std::uint64_t>(rep));
      std::optional<SyntheticData> drawn;
      Eigen::MatrixXd input;
      try {
        drawn = (config.experiment == 4)
                    ? make_toy_instance(rep_stream.derive_seed(0))
                    : sample_synthetic(point.n, point.j, config.k, config.m_levels,
                                       point.rho, rep_stream.derive_seed(0));
        input = config.population_input
                    ? PopulationModel(drawn->labeling, drawn->items).expected()
                    : drawn->response.as_real();
      } catch (const std::exception& e) {
        for (int mi = 0; mi < n_methods; ++mi)
          outcomes[static_cast<std::size_t>(rep) * n_methods + mi].error = e.what();
        return;
      }
      const SyntheticData& data = *drawn;

      for (int mi = 0; mi < n_methods; ++mi) {
        const Method method = config.methods[static_cast<std::size_t>(mi)];
        auto& out = outcomes[static_cast<std::size_t>(rep) * n_methods + mi];
        try {
          const auto t0 = std::chrono::steady_clock::now();
          const EstimationResult est =
              run_method(method, input, config.m_levels, config.k, point.tau,
                         rep_stream.derive_seed(1 + static_cast<std::uint64_t>(mi)),
                         config.estimator);
          const auto t1 = std::chrono::steady_clock::now();
          out.seconds = std::chrono::duration<double>(t1 - t0).count();
          out.metrics = score(data.labeling, data.items, est);
          // exact recovery must read the same through both measures
          if ((out.metrics.clustering_error == 0.0) !=
              (std::abs(out.metrics.ari - 1.0) < 1e-12))
            throw std::logic_error("run_experiment: clustering error and ARI disagree");
          if (config.select_k) {
            const int k_max = static_cast<int>(
                std::min<Eigen::Index>(config.k_max, std::min(point.n, point.j)));
            const auto profile = estimate_k(
                input, config.m_levels, method, k_max, point.tau,
                rep_stream.derive_seed(64 + static_cast<std::uint64_t>(mi)),
                config.select_repeats, config.estimator);
            out.k_correct = (profile.k_hat == config.k);
          }
          out.ok = true;
        } catch (const std::exception& e) {
          out.error = e.what();
        }
      }
    });

    GridPointReport point_report;
    point_report.point = point;
    for (int mi = 0; mi < n_methods; ++mi) {
      MethodAggregate agg;
      int correct = 0;
      for (int rep = 0; rep < reps; ++rep) {
        const auto& out = outcomes[static_cast<std::size_t>(rep) * n_methods + mi];
        if (!out.ok) {
          ++agg.failures;
          continue;
        }
        ++agg.completed;
        agg.means.clustering_error += out.metrics.clustering_error;
        agg.means.hamming_error += out.metrics.hamming_error;
        agg.means.nmi += out.metrics.nmi;
        agg.means.ari += out.metrics.ari;
        agg.means.rel_l1 += out.metrics.rel_l1;
        agg.means.rel_l2 += out.metrics.rel_l2;
        agg.mean_seconds += out.seconds;
        if (out.k_correct) ++correct;
      }
      if (agg.completed > 0) {
        const double c = agg.completed;
        agg.means.clustering_error /= c;
        agg.means.hamming_error /= c;
        agg.means.nmi /= c;
        agg.means.ari /= c;
        agg.means.rel_l1 /= c;
        agg.means.rel_l2 /= c;
        agg.mean_seconds /= c;
        if (config.select_k) agg.k_accuracy = correct / c;
      }
      point_report.methods.emplace_back(config.methods[static_cast<std::size_t>(mi)], agg);
    }
    report.points.push_back(std::move(point_report));
  }
  return report;
}

/// Mean clustering error per N, and whether the error at the largest N is
/// below the error at the smallest N for every method (two zero errors count
/// as consistent).
struct ConsistencyResult {
  bool improves = false;
  std::vector<std::pair<Eigen::Index, std::map<Method, double>>> table;
  ExperimentReport report;
};

inline ConsistencyResult consistency_trend(const ExperimentConfig& config) {
  if (config.n_grid.empty())
    throw std::invalid_argument("consistency_trend: config needs an n_grid");
  ConsistencyResult result;
  result.report = run_experiment(config);
  for (const auto& point : result.report.points) {
    std::map<Method, double> row;
    for (const auto& [method, agg] : point.methods) row[method] = agg.means.clustering_error;
    result.table.emplace_back(point.point.n, std::move(row));
  }
  result.improves = true;
  if (result.table.size() >= 2) {
    const auto& first = result.table.front().second;
    const auto& last = result.table.back().second;
    for (const auto& [method, first_error] : first) {
      const double last_error = last.at(method);
      const bool ok = last_error < first_error || (last_error == 0.0 && first_error == 0.0);
      if (!ok) result.improves = false;
    }
  }
  return result;
}

}  // namespace lcsc
