#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ddic/data.hpp"
#include "ddic/metrics.hpp"
#include "ddic/trainer.hpp"

// Experiment grid: missing ratios x runs x methods, one MetricsReport per
// cell, CSV output.
namespace ddic {

enum class Method { DdicOt, MeanFillKMeans, ZeroFillKMeans, KnnFillKMeans };

std::string to_string(Method m);
Method parse_method(const std::string& name);  // ConfigError on unknown names
std::vector<Method> parse_methods(const std::string& list);  // comma separated
std::vector<double> parse_ratios(const std::string& list);

enum class DatasetKind { Blobs, Csv, Idx };

// Text form: "blobs", "csv:<path>", "idx:<images>,<labels>" or
// "mnist:<dir>" for the standard training files inside <dir>.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::Blobs;
  std::filesystem::path path;
  std::filesystem::path labels_path;
  std::string label_column = "label";
  bool header = true;

  std::size_t blob_n = 600;
  std::size_t blob_d = 50;
  std::size_t blob_k = 3;
  double blob_separation = 10.0;
  double blob_std = 1.0;

  std::uint64_t seed = 0;  // blob draw and row subset
  std::size_t subset = 0;  // 0 keeps every row
  bool normalize = false;  // divide by the largest absolute value
};

DatasetSpec parse_dataset_spec(const std::string& text);
Dataset load_dataset(const DatasetSpec& spec);

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<Method> methods{Method::DdicOt};
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  std::size_t knn_k = 5;
  TrainConfig train;  // cluster_count 0 means the dataset's class count
  std::filesystem::path out = "results.csv";
  std::size_t jobs = 1;
  std::size_t reconstruction_rows = 0;  // per ddic-ot cell, 0 disables dumps

  void validate() const;
};

// `key = value` lines, `#` starts a comment. Keys left out keep their
// current value in `base`.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// Seed of one (ratio, run) cell. Methods share it, so every method sees the
// same mask.
std::uint64_t cell_seed(std::uint64_t base, double ratio, std::size_t run);

// Invoked with each fine-tuning epoch of a ddic-ot cell.
using CellProgressFn = std::function<void(const MetricsReport& cell, const EpochRecord&)>;

// Runs one cell. Failures are reported through MetricsReport::failed and
// never thrown.
MetricsReport run_cell(const ExperimentConfig& config, const Dataset& data, Method method, double ratio,
                       std::size_t run, const CellProgressFn& progress = {});

struct SweepResult {
  std::vector<MetricsReport> rows;  // ratio-major, then run, then method
  std::vector<AggregateRow> aggregates;  // per (method, ratio), failed cells left out
  std::size_t failures = 0;
};

using CellDoneFn = std::function<void(const MetricsReport&)>;

SweepResult sweep(const ExperimentConfig& config, const Dataset& data, const CellProgressFn& progress = {},
                  const CellDoneFn& done = {});

inline constexpr const char* kResultHeader = "dataset,method,ratio,seed,run,acc,nmi,purity,epochs,wall_time_s";
inline constexpr const char* kSummaryHeader =
    "dataset,method,ratio,runs,acc_mean,acc_std,nmi_mean,nmi_std,purity_mean,purity_std";

// Shortest text that reads back to the same double.
std::string format_double(double v);

void write_results(std::ostream& out, std::span<const MetricsReport> rows);
void write_summary(std::ostream& out, std::span<const AggregateRow> rows);
// Writes `path` and the summary next to it as <stem>_summary.csv.
void write_sweep(const std::filesystem::path& path, const SweepResult& result);
std::filesystem::path summary_path(const std::filesystem::path& results);

// Original, network input and imputed values of the chosen rows, side by
// side: row, then x_j, filled_j, imputed_j for every column j.
void dump_reconstructions(const Matrix& original, const FitResult& fit, std::span<const std::size_t> rows,
                          const std::filesystem::path& path);

}  // namespace ddic
