#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcsc/harness.hpp"
#include "lcsc/metrics.hpp"
#include "lcsc/model.hpp"

namespace lcsc {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Raised for malformed or out-of-range input files; message carries the
/// file/line context.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetFormat { dense_csv, sparse_triplet_csv };

inline DatasetFormat dataset_format_from_name(const std::string& name) {
  if (name == "dense-csv") return DatasetFormat::dense_csv;
  if (name == "sparse-triplet-csv") return DatasetFormat::sparse_triplet_csv;
  throw std::invalid_argument("unknown format '" + name +
                              "' (expected dense-csv or sparse-triplet-csv)");
}

struct DatasetFile {
  std::string path;
  DatasetFormat format = DatasetFormat::dense_csv;
  int m_levels = 1;
  Eigen::Index rows = 0;  // required for sparse files
  Eigen::Index cols = 0;
  double max_mem_gib = 4.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline long long parse_int_field(const std::string& field, const std::string& path,
                                 std::size_t line_no) {
  long long value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError(path + ":" + std::to_string(line_no) + ": expected an integer, got '" +
                    field + "'");
  return value;
}

inline void check_memory_budget(Eigen::Index rows, Eigen::Index cols, double max_gib,
                                const std::string& path) {
  // Dense int storage plus one real-valued working copy.
  const double bytes = static_cast<double>(rows) * static_cast<double>(cols) * 12.0;
  if (bytes > max_gib * 1024.0 * 1024.0 * 1024.0)
    throw DataError(path + ": a " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " matrix exceeds the memory budget of " + std::to_string(max_gib) +
                    " GiB; raise --max-mem-gib to override");
}

}  // namespace detail

/// Load a response matrix from a header-free dense CSV of integers, or from
/// a sparse triplet CSV with header `i,j,value` and 1-based indices (unlisted
/// cells are 0, duplicates are rejected). Values outside {0,...,M} are
/// rejected with their coordinates.
inline ResponseMatrix load_response(const DatasetFile& file) {
  std::ifstream in(file.path);
  if (!in) throw DataError(file.path + ": cannot open file");
  if (file.m_levels < 1) throw DataError(file.path + ": m_levels must be >= 1");

  auto check_value = [&](long long v, Eigen::Index i, Eigen::Index j) {
    if (v < 0 || v > file.m_levels)
      throw DataError(file.path + ": value " + std::to_string(v) + " at row " +
                      std::to_string(i + 1) + ", column " + std::to_string(j + 1) +
                      " is outside {0,...," + std::to_string(file.m_levels) + "}");
  };

  std::string line;
  std::size_t line_no = 0;

  if (file.format == DatasetFormat::dense_csv) {
    std::vector<std::vector<int>> rows;
    std::size_t width = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto fields = detail::split_csv_line(line);
      if (width == 0) {
        width = fields.size();
      } else if (fields.size() != width) {
        throw DataError(file.path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " fields, got " +
                        std::to_string(fields.size()));
      }
      std::vector<int> row(fields.size());
      for (std::size_t c = 0; c < fields.size(); ++c) {
        const long long v = detail::parse_int_field(fields[c], file.path, line_no);
        check_value(v, static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c));
        row[c] = static_cast<int>(v);
      }
      rows.push_back(std::move(row));
      if (rows.size() % 1024 == 0)
        detail::check_memory_budget(static_cast<Eigen::Index>(rows.size()),
                                    static_cast<Eigen::Index>(width), file.max_mem_gib,
                                    file.path);
    }
    if (rows.empty()) throw DataError(file.path + ": no data rows");
    detail::check_memory_budget(static_cast<Eigen::Index>(rows.size()),
                                static_cast<Eigen::Index>(width), file.max_mem_gib, file.path);
    Eigen::MatrixXi m(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < width; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return ResponseMatrix(std::move(m), file.m_levels);
  }

  // Sparse triplets.
  if (file.rows < 1 || file.cols < 1)
    throw DataError(file.path + ": sparse input needs declared --rows and --cols");
  detail::check_memory_budget(file.rows, file.cols, file.max_mem_gib, file.path);
  if (!std::getline(in, line)) throw DataError(file.path + ": empty file");
  ++line_no;
  {
    auto header = detail::split_csv_line(line);
    if (header.size() != 3 || header[0] != "i" || header[1] != "j" || header[2] != "value")
      throw DataError(file.path + ":1: expected header 'i,j,value'");
  }
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(file.rows, file.cols);
  std::vector<bool> seen(static_cast<std::size_t>(file.rows) *
                             static_cast<std::size_t>(file.cols),
                         false);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3)
      throw DataError(file.path + ":" + std::to_string(line_no) + ": expected 3 fields");
    const long long i1 = detail::parse_int_field(fields[0], file.path, line_no);
    const long long j1 = detail::parse_int_field(fields[1], file.path, line_no);
    const long long v = detail::parse_int_field(fields[2], file.path, line_no);
    if (i1 < 1 || i1 > file.rows || j1 < 1 || j1 > file.cols)
      throw DataError(file.path + ":" + std::to_string(line_no) + ": index (" +
                      std::to_string(i1) + "," + std::to_string(j1) +
                      ") outside the declared " + std::to_string(file.rows) + "x" +
                      std::to_string(file.cols) + " shape (indices are 1-based)");
    const auto row = static_cast<Eigen::Index>(i1 - 1);
    const auto col = static_cast<Eigen::Index>(j1 - 1);
    const std::size_t flat = static_cast<std::size_t>(row) *
                                 static_cast<std::size_t>(file.cols) +
                             static_cast<std::size_t>(col);
    if (seen[flat])
      throw DataError(file.path + ":" + std::to_string(line_no) + ": duplicate entry for (" +
                      std::to_string(i1) + "," + std::to_string(j1) + ")");
    seen[flat] = true;
    check_value(v, row, col);
    m(row, col) = static_cast<int>(v);
  }
  return ResponseMatrix(std::move(m), file.m_levels);
}

// ---------------------------------------------------------------------------
// Writers (atomic: compose, write to a temp file, rename into place)
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal representation.
inline std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json_atomic(const std::filesystem::path& path, const ordered_json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

inline void write_dense_csv(const std::filesystem::path& path, const Eigen::MatrixXi& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += std::to_string(m(i, j));
    }
    out.push_back('\n');
  }
  write_text_atomic(path, out);
}

inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += format_double(m(i, j));
    }
    out.push_back('\n');
  }
  write_text_atomic(path, out);
}

/// One 1-based class id per line.
inline void write_labels_csv(const std::filesystem::path& path, const Labeling& labeling) {
  std::string out;
  for (Eigen::Index i = 0; i < labeling.n(); ++i) {
    out += std::to_string(labeling[i] + 1);
    out.push_back('\n');
  }
  write_text_atomic(path, out);
}

// ---------------------------------------------------------------------------
// JSON views of results
// ---------------------------------------------------------------------------

inline ordered_json to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ordered_json fit_result_json(const EstimationResult& est, std::uint64_t seed,
                                    Eigen::Index n, Eigen::Index j, int m_levels) {
  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = "fit";
  out["method"] = method_name(est.method);
  out["k"] = est.k;
  if (est.tau) out["tau"] = *est.tau; else out["tau"] = nullptr;
  out["seed"] = seed;
  out["n"] = n;
  out["j"] = j;
  out["m_levels"] = m_levels;
  ordered_json labels = ordered_json::array();
  for (Eigen::Index i = 0; i < est.labeling.n(); ++i) labels.push_back(est.labeling[i] + 1);
  out["labels"] = std::move(labels);
  out["theta_hat"] = to_json(est.theta_hat);
  return out;
}

inline ordered_json profile_json(const ModularityProfile& profile, int k_max, int repeats,
                                 std::uint64_t seed, std::optional<double> tau) {
  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = "select_k";
  out["method"] = method_name(profile.method);
  out["k_max"] = k_max;
  out["repeats"] = repeats;
  out["seed"] = seed;
  if (tau) out["tau"] = *tau; else out["tau"] = nullptr;
  ordered_json q = ordered_json::array();
  for (const auto& [k, value] : profile.q_values) {
    ordered_json entry;
    entry["k"] = k;
    entry["q"] = value;
    q.push_back(std::move(entry));
  }
  out["q"] = std::move(q);
  ordered_json failures = ordered_json::array();
  for (const auto& [k, what] : profile.failures) {
    ordered_json entry;
    entry["k"] = k;
    entry["error"] = what;
    failures.push_back(std::move(entry));
  }
  out["failures"] = std::move(failures);
  out["k_hat"] = profile.k_hat;
  return out;
}

inline std::string profile_csv(const ModularityProfile& profile) {
  std::string out = "k,Q\n";
  for (const auto& [k, value] : profile.q_values)
    out += std::to_string(k) + "," + format_double(value) + "\n";
  return out;
}

inline ordered_json grid_point_json(const GridPoint& p) {
  ordered_json out;
  out["n"] = p.n;
  out["j"] = p.j;
  out["rho"] = p.rho;
  out["c0"] = p.c0;
  out["tau"] = p.tau;
  return out;
}

/// Metric means per grid point and method. Wall-clock means are deliberately
/// left out (they go to a separate timings file) so reruns with the same seed
/// emit byte-identical reports.
inline ordered_json experiment_report_json(const ExperimentReport& report) {
  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = "experiment";
  out["experiment"] = report.config.experiment;
  out["seed"] = report.config.seed;
  out["repetitions"] = report.config.repetitions;
  out["k"] = report.config.k;
  out["m_levels"] = report.config.m_levels;
  ordered_json grid = ordered_json::array();
  for (const auto& point : report.points) {
    ordered_json entry = grid_point_json(point.point);
    ordered_json methods;
    for (const auto& [method, agg] : point.methods) {
      ordered_json m;
      m["clustering_error"] = agg.means.clustering_error;
      m["hamming_error"] = agg.means.hamming_error;
      m["nmi"] = agg.means.nmi;
      m["ari"] = agg.means.ari;
      m["rel_l1"] = agg.means.rel_l1;
      m["rel_l2"] = agg.means.rel_l2;
      if (std::isnan(agg.k_accuracy)) m["k_accuracy"] = nullptr;
      else m["k_accuracy"] = agg.k_accuracy;
      m["completed"] = agg.completed;
      m["failures"] = agg.failures;
      methods[method_name(method)] = std::move(m);
    }
    entry["methods"] = std::move(methods);
    grid.push_back(std::move(entry));
  }
  out["grid"] = std::move(grid);
  return out;
}

inline std::string experiment_report_csv(const ExperimentReport& report) {
  std::string out =
      "n,j,rho,c0,tau,method,clustering_error,hamming_error,nmi,ari,rel_l1,rel_l2,"
      "k_accuracy,completed,failures\n";
  for (const auto& point : report.points) {
    for (const auto& [method, agg] : point.methods) {
      out += std::to_string(point.point.n) + "," + std::to_string(point.point.j) + "," +
             format_double(point.point.rho) + "," + format_double(point.point.c0) + "," +
             format_double(point.point.tau) + "," + method_name(method) + "," +
             format_double(agg.means.clustering_error) + "," +
             format_double(agg.means.hamming_error) + "," + format_double(agg.means.nmi) +
             "," + format_double(agg.means.ari) + "," + format_double(agg.means.rel_l1) +
             "," + format_double(agg.means.rel_l2) + "," +
             (std::isnan(agg.k_accuracy) ? std::string("") : format_double(agg.k_accuracy)) +
             "," + std::to_string(agg.completed) + "," + std::to_string(agg.failures) + "\n";
    }
  }
  return out;
}

/// Measured wall-clock means; non-deterministic by nature, kept out of the
/// main report files.
inline std::string experiment_timings_csv(const ExperimentReport& report) {
  std::string out = "n,j,rho,c0,tau,method,mean_seconds\n";
  for (const auto& point : report.points) {
    for (const auto& [method, agg] : point.methods) {
      out += std::to_string(point.point.n) + "," + std::to_string(point.point.j) + "," +
             format_double(point.point.rho) + "," + format_double(point.point.c0) + "," +
             format_double(point.point.tau) + "," + method_name(method) + "," +
             format_double(agg.mean_seconds) + "\n";
    }
  }
  return out;
}

/// Custom experiment description. Starts from the canned defaults when
/// "experiment" is given, otherwise from a blank config; every other field
/// overrides.
inline ExperimentConfig parse_experiment_config(const ordered_json& j) {
  ExperimentConfig cfg;
  if (j.contains("experiment") && j.at("experiment").get<int>() != 0)
    cfg = ExperimentConfig::canned(j.at("experiment").get<int>());
  else
    cfg.experiment = 0;
  if (j.contains("k")) cfg.k = j.at("k").get<int>();
  if (j.contains("m_levels")) cfg.m_levels = j.at("m_levels").get<int>();
  if (j.contains("j_divisor")) cfg.j_divisor = j.at("j_divisor").get<int>();
  if (j.contains("j")) cfg.j_override = j.at("j").get<Eigen::Index>();
  if (j.contains("n")) cfg.n = j.at("n").get<Eigen::Index>();
  if (j.contains("rho")) cfg.rho = j.at("rho").get<double>();
  if (j.contains("c0_grid")) cfg.c0_grid = j.at("c0_grid").get<std::vector<double>>();
  if (j.contains("rho_grid")) cfg.rho_grid = j.at("rho_grid").get<std::vector<double>>();
  if (j.contains("n_grid")) cfg.n_grid = j.at("n_grid").get<std::vector<Eigen::Index>>();
  if (j.contains("repetitions")) cfg.repetitions = j.at("repetitions").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j.at("methods"))
      cfg.methods.push_back(method_from_name(name.get<std::string>()));
  }
  if (j.contains("select_k")) cfg.select_k = j.at("select_k").get<bool>();
  if (j.contains("k_max")) cfg.k_max = j.at("k_max").get<int>();
  if (j.contains("select_repeats")) cfg.select_repeats = j.at("select_repeats").get<int>();
  if (j.contains("population_input"))
    cfg.population_input = j.at("population_input").get<bool>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  if (j.contains("kmeans_restarts"))
    cfg.estimator.kmeans.restarts = j.at("kmeans_restarts").get<int>();
  cfg.validate();
  return cfg;
}

inline ordered_json diagnostics_json(const TheoryDiagnostics& d, const PopulationModel& model,
                                     double tau) {
  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = "diagnostics";
  out["n"] = model.n();
  out["j"] = model.j();
  out["k"] = model.k();
  out["m_levels"] = model.m_levels();
  out["tau"] = tau;
  out["rho"] = d.rho;
  out["delta_min"] = d.delta_min;
  out["delta_max"] = d.delta_max;
  out["sigma_k_b"] = d.sigma_k_b;
  out["epsilon_tau"] = d.epsilon_tau;
  out["varrho_tau"] = d.varrho_tau;
  out["assumption1_holds"] = d.assumption1_holds;
  return out;
}

inline std::string ratio_curve_csv(const std::vector<std::pair<double, double>>& curve,
                                   const PopulationModel& model) {
  std::string out = "tau,ratio,epsilon_tau\n";
  for (const auto& [tau, ratio] : curve)
    out += format_double(tau) + "," + format_double(ratio) + "," +
           format_double(epsilon_tau(model, tau)) + "\n";
  return out;
}

}  // namespace lcsc
