// lcsc: latent class analysis of categorical response matrices by regularized
// spectral clustering. Subcommands: simulate, fit, select-k, experiment,
// diagnose. Exit codes: 0 success, 2 bad flags or config, 3 data error,
// 4 estimation error.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lcsc/estimators.hpp"
#include "lcsc/harness.hpp"
#include "lcsc/io.hpp"
#include "lcsc/metrics.hpp"
#include "lcsc/model.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitEstimation = 4;

struct InputFlags {
  std::string path;
  std::string format = "dense-csv";
  int m_levels = 0;
  long long rows = 0;
  long long cols = 0;
  double max_mem_gib = 4.0;
};

void add_input_flags(CLI::App* cmd, InputFlags& in) {
  cmd->add_option("--input", in.path, "response matrix file")->required();
  cmd->add_option("--format", in.format, "dense-csv or sparse-triplet-csv")
      ->check(CLI::IsMember({"dense-csv", "sparse-triplet-csv"}));
  cmd->add_option("--m-levels", in.m_levels, "maximum response level M")->required();
  cmd->add_option("--rows", in.rows, "subject count (sparse input only)");
  cmd->add_option("--cols", in.cols, "item count (sparse input only)");
  cmd->add_option("--max-mem-gib", in.max_mem_gib, "dense materialization budget");
}

lcsc::ResponseMatrix load_input(const InputFlags& in) {
  lcsc::DatasetFile file;
  file.path = in.path;
  file.format = lcsc::dataset_format_from_name(in.format);
  file.m_levels = in.m_levels;
  file.rows = static_cast<Eigen::Index>(in.rows);
  file.cols = static_cast<Eigen::Index>(in.cols);
  file.max_mem_gib = in.max_mem_gib;
  return lcsc::load_response(file);
}

std::vector<lcsc::Method> parse_methods(const std::vector<std::string>& names) {
  if (names.empty())
    return {lcsc::Method::rsc, lcsc::Method::rscn, lcsc::Method::rscors,
            lcsc::Method::pca, lcsc::Method::rmk, lcsc::Method::rlmk};
  std::vector<lcsc::Method> methods;
  for (const auto& name : names) methods.push_back(lcsc::method_from_name(name));
  return methods;
}

// Anything thrown once estimation starts (as opposed to flag or data
// problems) maps to exit code 4.
struct EstimationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto estimation_phase(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw EstimationFailure(e.what());
  }
}

void check_k_bounds(int k, const lcsc::ResponseMatrix& r, lcsc::Method method) {
  const Eigen::Index bound =
      (method == lcsc::Method::rmk || method == lcsc::Method::rlmk) ? r.n()
                                                                    : std::min(r.n(), r.j());
  if (k < 1 || static_cast<Eigen::Index>(k) > bound)
    throw CLI::ValidationError("--k", "k = " + std::to_string(k) + " is outside [1, " +
                                          std::to_string(bound) + "] for this input");
}

int run_fit(const InputFlags& in, const std::string& method_name, int k, double tau_flag,
            std::uint64_t seed, int restarts, const std::string& output) {
  const auto r = load_input(in);
  const lcsc::Method method = lcsc::method_from_name(method_name);
  check_k_bounds(k, r, method);
  std::optional<double> tau;
  if (tau_flag >= 0.0) tau = tau_flag;
  lcsc::EstimatorOptions opts;
  opts.kmeans.restarts = restarts;
  const auto est = estimation_phase([&] { return lcsc::run_method(method, r, k, tau, seed, opts); });
  lcsc::write_json_atomic(output, lcsc::fit_result_json(est, seed, r.n(), r.j(), r.m_levels()));
  return kExitOk;
}

int run_select_k(const InputFlags& in, const std::string& method_name, int k_max, int repeats,
                 double tau_flag, std::uint64_t seed, int restarts, const std::string& output,
                 const std::string& csv_output) {
  const auto r = load_input(in);
  const lcsc::Method method = lcsc::method_from_name(method_name);
  if (k_max < 1) throw CLI::ValidationError("--k-max", "must be >= 1");
  std::optional<double> tau;
  if (tau_flag >= 0.0) tau = tau_flag;
  lcsc::EstimatorOptions opts;
  opts.kmeans.restarts = restarts;
  const int bound = static_cast<int>(std::min<Eigen::Index>(k_max, std::min(r.n(), r.j())));
  const auto profile = estimation_phase(
      [&] { return lcsc::estimate_k(r, method, bound, tau, seed, repeats, opts); });
  lcsc::write_json_atomic(output, lcsc::profile_json(profile, bound, repeats, seed, tau));
  std::string csv_path = csv_output;
  if (csv_path.empty())
    csv_path = std::filesystem::path(output).replace_extension(".csv").string();
  lcsc::write_text_atomic(csv_path, lcsc::profile_csv(profile));
  return kExitOk;
}

int run_simulate(long long n, long long j, int k, int m_levels, double rho,
                 std::uint64_t seed, const std::string& prefix) {
  const auto data = lcsc::sample_synthetic(static_cast<Eigen::Index>(n),
                                           static_cast<Eigen::Index>(j), k, m_levels, rho,
                                           seed);
  lcsc::write_dense_csv(prefix + "_R.csv", data.response.entries());
  lcsc::write_labels_csv(prefix + "_labels.csv", data.labeling);
  lcsc::write_matrix_csv(prefix + "_theta.csv", data.items.theta());
  return kExitOk;
}

void write_experiment_outputs(const lcsc::ExperimentReport& report,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  lcsc::write_json_atomic(dir / "report.json", lcsc::experiment_report_json(report));
  lcsc::write_text_atomic(dir / "report.csv", lcsc::experiment_report_csv(report));
  lcsc::write_text_atomic(dir / "timings.csv", lcsc::experiment_timings_csv(report));
}

int run_experiment_cmd(int experiment, const std::string& config_path, int reps,
                       std::uint64_t seed, bool reps_set, bool seed_set, bool select_set,
                       bool select_k, int threads, const std::vector<std::string>& methods,
                       const std::string& output_dir) {
  lcsc::ExperimentConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw lcsc::DataError(config_path + ": cannot open config");
    lcsc::ordered_json j;
    in >> j;
    cfg = lcsc::parse_experiment_config(j);
  } else if (experiment >= 1 && experiment <= 4) {
    cfg = lcsc::ExperimentConfig::canned(experiment);
  } else {
    throw CLI::ValidationError("experiment", "pass --experiment 1..4 or --config <json>");
  }
  if (reps_set) cfg.repetitions = reps;
  if (seed_set) cfg.seed = seed;
  if (select_set) cfg.select_k = select_k;
  if (!methods.empty()) cfg.methods = parse_methods(methods);
  if (threads > 0) cfg.threads = threads;
  cfg.validate();

  const auto report = estimation_phase([&] { return lcsc::run_experiment(cfg); });
  const std::filesystem::path dir(output_dir);
  write_experiment_outputs(report, dir);

  if (cfg.experiment == 4) {
    // The toy instance is a fixed, publishable example: write its matrices and
    // the per-method metric table alongside the aggregate report.
    const Eigen::Index gi = 0;
    const auto data =
        lcsc::make_toy_instance(lcsc::Prng(cfg.seed).substream(gi).substream(0).derive_seed(0));
    lcsc::write_dense_csv(dir / "instance_R.csv", data.response.entries());
    lcsc::write_labels_csv(dir / "instance_labels.csv", data.labeling);
    lcsc::write_matrix_csv(dir / "instance_theta.csv", data.items.theta());

    std::string table =
        "method,clustering_error,hamming_error,nmi,ari,rel_l1,rel_l2,k_hat\n";
    Eigen::MatrixXd theta_hat;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const lcsc::Method method = cfg.methods[mi];
      const lcsc::Prng rep_stream = lcsc::Prng(cfg.seed).substream(gi).substream(0);
      const auto est = lcsc::run_method(method, data.response, cfg.k, std::nullopt,
                                        rep_stream.derive_seed(1 + mi), cfg.estimator);
      const auto metrics = lcsc::score(data.labeling, data.items, est);
      const auto profile =
          lcsc::estimate_k(data.response, method, cfg.k_max, std::nullopt,
                           rep_stream.derive_seed(64 + mi), cfg.select_repeats, cfg.estimator);
      table += std::string(lcsc::method_name(method)) + "," +
               lcsc::format_double(metrics.clustering_error) + "," +
               lcsc::format_double(metrics.hamming_error) + "," +
               lcsc::format_double(metrics.nmi) + "," + lcsc::format_double(metrics.ari) +
               "," + lcsc::format_double(metrics.rel_l1) + "," +
               lcsc::format_double(metrics.rel_l2) + "," + std::to_string(profile.k_hat) +
               "\n";
      theta_hat = est.theta_hat;
    }
    lcsc::write_text_atomic(dir / "instance_table.csv", table);
    lcsc::write_matrix_csv(dir / "instance_theta_hat.csv", theta_hat);
  }
  return kExitOk;
}

int run_diagnose(bool figure1, long long n, long long j, int k, int m_levels, double rho,
                 std::uint64_t seed, const std::vector<double>& tau_grid_flag,
                 const std::string& output_dir) {
  std::optional<lcsc::PopulationModel> model;
  if (figure1) {
    model = lcsc::figure1_model(seed);
  } else {
    if (n < 1 || j < 1 || k < 1 || m_levels < 1 || rho <= 0.0)
      throw CLI::ValidationError("diagnose",
                                 "pass --figure1 or all of --n --j --k --m-levels --rho");
    const auto data = lcsc::sample_synthetic(static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(j), k, m_levels, rho,
                                             seed);
    model.emplace(data.labeling, data.items);
  }

  const double tau0 = lcsc::default_tau(model->n(), model->j(), model->m_levels());
  std::vector<double> tau_grid = tau_grid_flag;
  if (tau_grid.empty()) {
    for (int i = 1; i <= 10; ++i) tau_grid.push_back(0.2 * i * tau0);
  }
  for (double tau : tau_grid) {
    if (tau < 0.0) throw CLI::ValidationError("--tau-grid", "tau values must be >= 0");
  }

  const auto curve = lcsc::bound_ratio_curve(*model, lcsc::Prng(seed).derive_seed(1), tau_grid);
  const auto diag = lcsc::theory_diagnostics(*model, tau0);

  const std::filesystem::path dir(output_dir);
  std::filesystem::create_directories(dir);
  lcsc::write_text_atomic(dir / "ratio.csv", lcsc::ratio_curve_csv(curve, *model));
  lcsc::write_json_atomic(dir / "diagnostics.json", lcsc::diagnostics_json(diag, *model, tau0));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent class analysis by regularized spectral clustering"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "estimate classes and item parameters");
  InputFlags fit_in;
  add_input_flags(fit, fit_in);
  std::string fit_method = "rsc";
  int fit_k = 0;
  double fit_tau = -1.0;
  std::uint64_t fit_seed = 1;
  int fit_restarts = 10;
  std::string fit_output;
  fit->add_option("--k", fit_k, "number of latent classes")->required();
  fit->add_option("--method", fit_method, "rsc|rscn|rscors|pca|rmk|rlmk")
      ->check(CLI::IsMember({"rsc", "rscn", "rscors", "pca", "rmk", "rlmk"}));
  fit->add_option("--tau", fit_tau, "regularizer (default M*max(N,J))");
  fit->add_option("--seed", fit_seed, "random seed");
  fit->add_option("--restarts", fit_restarts, "k-means restarts");
  fit->add_option("--output", fit_output, "result JSON path")->required();

  // select-k
  auto* sel = app.add_subcommand("select-k", "choose K by modularity");
  InputFlags sel_in;
  add_input_flags(sel, sel_in);
  std::string sel_method = "rsc";
  int sel_k_max = 12;
  int sel_repeats = 1;
  double sel_tau = -1.0;
  std::uint64_t sel_seed = 1;
  int sel_restarts = 10;
  std::string sel_output;
  std::string sel_csv;
  sel->add_option("--method", sel_method, "rsc|rscn|rscors|pca|rmk|rlmk")
      ->check(CLI::IsMember({"rsc", "rscn", "rscors", "pca", "rmk", "rlmk"}));
  sel->add_option("--k-max", sel_k_max, "largest k to score");
  sel->add_option("--repeats", sel_repeats, "runs averaged per k");
  sel->add_option("--tau", sel_tau, "regularizer (default M*max(N,J))");
  sel->add_option("--seed", sel_seed, "random seed");
  sel->add_option("--restarts", sel_restarts, "k-means restarts");
  sel->add_option("--output", sel_output, "profile JSON path")->required();
  sel->add_option("--csv", sel_csv, "k,Q csv path (default: --output with .csv)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a synthetic dataset");
  long long sim_n = 0, sim_j = 0;
  int sim_k = 0, sim_m = 0;
  double sim_rho = 0.0;
  std::uint64_t sim_seed = 1;
  std::string sim_prefix;
  sim->add_option("--n", sim_n, "subjects")->required();
  sim->add_option("--j", sim_j, "items")->required();
  sim->add_option("--k", sim_k, "latent classes")->required();
  sim->add_option("--m-levels", sim_m, "maximum response level M")->required();
  sim->add_option("--rho", sim_rho, "sparsity parameter in (0, M]")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--output-prefix", sim_prefix, "prefix for _R/_labels/_theta csv files")
      ->required();

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a Monte Carlo experiment");
  int exp_id = 0;
  std::string exp_config;
  int exp_reps = 0;
  std::uint64_t exp_seed = 1;
  bool exp_select = false;
  int exp_threads = 0;
  std::string exp_dir;
  exp->add_option("--experiment", exp_id, "canned experiment 1..4");
  exp->add_option("--config", exp_config, "custom config JSON");
  auto* reps_opt = exp->add_option("--reps", exp_reps, "repetitions per grid point");
  auto* seed_opt = exp->add_option("--seed", exp_seed, "master seed");
  auto* select_opt = exp->add_flag("--select-k,!--no-select-k", exp_select,
                                   "run the modularity K-selection sweep");
  std::vector<std::string> exp_methods;
  exp->add_option("--methods", exp_methods, "subset of rsc,rscn,rscors,pca,rmk,rlmk")
      ->delimiter(',');
  exp->add_option("--threads", exp_threads, "worker threads (0 = auto)");
  exp->add_option("--output-dir", exp_dir, "directory for report files")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "concentration-bound diagnostics");
  bool diag_fig1 = false;
  long long diag_n = 0, diag_j = 0;
  int diag_k = 0, diag_m = 0;
  double diag_rho = 0.0;
  std::uint64_t diag_seed = 1;
  std::vector<double> diag_tau_grid;
  std::string diag_dir;
  diag->add_flag("--figure1", diag_fig1, "use the canned N=500, J=200, K=3, M=5, rho=1 model");
  diag->add_option("--n", diag_n, "subjects");
  diag->add_option("--j", diag_j, "items");
  diag->add_option("--k", diag_k, "latent classes");
  diag->add_option("--m-levels", diag_m, "maximum response level M");
  diag->add_option("--rho", diag_rho, "sparsity parameter");
  diag->add_option("--seed", diag_seed, "random seed");
  diag->add_option("--tau-grid", diag_tau_grid, "explicit tau values")->delimiter(',');
  diag->add_option("--output-dir", diag_dir, "directory for ratio.csv and diagnostics.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints help or the parse error
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit)
      return run_fit(fit_in, fit_method, fit_k, fit_tau, fit_seed, fit_restarts, fit_output);
    if (*sel)
      return run_select_k(sel_in, sel_method, sel_k_max, sel_repeats, sel_tau, sel_seed,
                          sel_restarts, sel_output, sel_csv);
    if (*sim) return run_simulate(sim_n, sim_j, sim_k, sim_m, sim_rho, sim_seed, sim_prefix);
    if (*exp)
      return run_experiment_cmd(exp_id, exp_config, exp_reps, exp_seed,
                                reps_opt->count() > 0, seed_opt->count() > 0,
                                select_opt->count() > 0, exp_select, exp_threads,
                                exp_methods, exp_dir);
    if (*diag)
      return run_diagnose(diag_fig1, diag_n, diag_j, diag_k, diag_m, diag_rho, diag_seed,
                          diag_tau_grid, diag_dir);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lcsc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const EstimationFailure& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEstimation;
  }
  return kExitUsage;
}
