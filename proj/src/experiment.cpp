#include "ddic/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ddic/error.hpp"
#include "ddic/incomplete.hpp"
#include "ddic/kmeans.hpp"
#include "ddic/random.hpp"

namespace ddic {

namespace {

enum CellStream : std::uint64_t { kMaskStream = 1, kTrainStream, kKMeansStream };

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

LossMode to_loss_mode(const std::string& v) {
  if (v == "joint") return LossMode::Joint;
  if (v == "reconstruction") return LossMode::ReconstructionOnly;
  if (v == "clustering") return LossMode::ClusteringOnly;
  throw ConfigError("loss_mode: expected joint, reconstruction or clustering, got '" + v + "'");
}

FillStrategy to_fill(const std::string& v) {
  if (v == "mean") return FillStrategy::Mean;
  if (v == "zero") return FillStrategy::Zero;
  throw ConfigError("fill: expected mean or zero, got '" + v + "'");
}

using Setter = void (*)(ExperimentConfig&, const std::string& key, const std::string& value);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"dataset",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         // Keep the blob and CSV knobs that may already be set.
         const DatasetSpec parsed = parse_dataset_spec(v);
         c.dataset.kind = parsed.kind;
         c.dataset.path = parsed.path;
         c.dataset.labels_path = parsed.labels_path;
       }},
      {"label_column", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset.label_column = v; }},
      {"header", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.header = to_bool(k, v); }},
      {"blobs.n", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.blob_n = to_size(k, v); }},
      {"blobs.d", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.blob_d = to_size(k, v); }},
      {"blobs.k", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.blob_k = to_size(k, v); }},
      {"blobs.separation",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.blob_separation = to_double(k, v); }},
      {"blobs.std",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.blob_std = to_double(k, v); }},
      {"dataset_seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.seed = to_u64(k, v); }},
      {"subset", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.subset = to_size(k, v); }},
      {"normalize",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.normalize = to_bool(k, v); }},
      {"method", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.methods = parse_methods(v); }},
      {"ratios", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.ratios = parse_ratios(v); }},
      {"runs", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.runs = to_size(k, v); }},
      {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
      {"knn_k", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.knn_k = to_size(k, v); }},
      {"out", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"jobs", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.jobs = to_size(k, v); }},
      {"reconstruction_rows",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.reconstruction_rows = to_size(k, v); }},
      {"gamma", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.gamma = to_double(k, v); }},
      {"eps", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.eps = to_double(k, v); }},
      {"lr", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.lr = to_double(k, v); }},
      {"batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_size(k, v); }},
      {"max_iter", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.max_iter = to_size(k, v); }},
      {"delta", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.delta = to_double(k, v); }},
      {"pretrain_epochs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.pretrain_epochs = to_size(k, v); }},
      {"sinkhorn_unroll",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.sinkhorn_unroll = to_size(k, v); }},
      {"fill", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.fill = to_fill(v); }},
      {"clusters",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.cluster_count = to_size(k, v); }},
      {"hidden_dims",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.hidden_dims.clear();
         if (v.empty()) return;
         for (const auto& part : split(v, ',')) c.train.hidden_dims.push_back(to_size(k, part));
       }},
      {"embedding_dim",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.embedding_dim = to_size(k, v); }},
      {"loss_mode", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.loss_mode = to_loss_mode(v); }},
      {"kmeans_restarts",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.kmeans_restarts = to_size(k, v); }},
  };
  return table;
}

// MCAR mask from the cell seed, intersected with entries already missing in
// the source data.
MaskedDataset mask_dataset(const Dataset& data, double ratio, std::uint64_t seed) {
  const MaskMatrix drawn = generate_mask(data.rows(), data.cols(), ratio, seed);
  Matrix m = drawn.matrix();
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (std::isnan(data.features.values()[k])) m.values()[k] = 0.0;
  }
  return apply_mask(data.features, MaskMatrix(std::move(m)), data.labels);
}

void require_observed_kept(const MaskedDataset& ds, const Matrix& out, const char* what) {
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (ds.mask.observed(i, j) &&
          std::bit_cast<std::uint64_t>(out(i, j)) != std::bit_cast<std::uint64_t>(ds.observed(i, j))) {
        throw ContractError(std::string(what) + " changed observed entry (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
      }
    }
  }
}

std::string ratio_tag(double ratio) { return format_double(ratio); }

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::DdicOt:
      return "ddic-ot";
    case Method::MeanFillKMeans:
      return "mf-kmeans";
    case Method::ZeroFillKMeans:
      return "zf-kmeans";
    case Method::KnnFillKMeans:
      return "knn-kmeans";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::DdicOt, Method::MeanFillKMeans, Method::ZeroFillKMeans, Method::KnnFillKMeans}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "' (expected ddic-ot, mf-kmeans, zf-kmeans or knn-kmeans)");
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  for (const auto& part : split(list, ',')) {
    const Method m = parse_method(part);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("method: empty list");
  return out;
}

std::vector<double> parse_ratios(const std::string& list) {
  std::vector<double> out;
  for (const auto& part : split(list, ',')) {
    const double r = to_double("ratios", part);
    if (r < 0.0 || r > 1.0) throw ConfigError("ratios: " + part + " is outside [0, 1]");
    out.push_back(r);
  }
  if (out.empty()) throw ConfigError("ratios: empty list");
  return out;
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  DatasetSpec spec;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (kind == "blobs" && rest.empty()) {
    spec.kind = DatasetKind::Blobs;
  } else if (kind == "csv" && !rest.empty()) {
    spec.kind = DatasetKind::Csv;
    spec.path = rest;
  } else if (kind == "idx" && rest.find(',') != std::string::npos) {
    spec.kind = DatasetKind::Idx;
    spec.path = rest.substr(0, rest.find(','));
    spec.labels_path = rest.substr(rest.find(',') + 1);
  } else if (kind == "mnist" && !rest.empty()) {
    spec.kind = DatasetKind::Idx;
    spec.path = std::filesystem::path(rest) / "train-images-idx3-ubyte";
    spec.labels_path = std::filesystem::path(rest) / "train-labels-idx1-ubyte";
  } else {
    throw ConfigError("dataset: expected blobs, csv:<path>, idx:<images>,<labels> or mnist:<dir>, got '" + text +
                      "'");
  }
  return spec;
}

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset ds;
  switch (spec.kind) {
    case DatasetKind::Blobs:
      ds = make_blobs(spec.blob_n, spec.blob_d, spec.blob_k, spec.blob_separation, spec.blob_std, spec.seed);
      break;
    case DatasetKind::Csv: {
      CsvOptions options;
      options.header = spec.header;
      options.label_column = spec.label_column;
      ds = load_csv(spec.path, options);
      break;
    }
    case DatasetKind::Idx:
      ds = load_idx(spec.path, spec.labels_path);
      if (spec.path.filename() == "train-images-idx3-ubyte") ds.name = "mnist";
      break;
  }
  if (spec.subset > 0 && spec.subset < ds.rows()) ds = subset(ds, spec.subset, spec.seed);
  if (spec.normalize) ds.features = normalize_unit(ds.features);
  return ds;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("no methods selected");
  if (ratios.empty()) throw ConfigError("no missing ratios given");
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("missing ratio " + format_double(r) + " is outside [0, 1]");
  }
  if (runs == 0) throw ConfigError("runs must be >= 1");
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
  if (knn_k == 0) throw ConfigError("knn_k must be >= 1");
  TrainConfig t = train;
  if (t.cluster_count == 0) t.cluster_count = 1;
  t.validate();
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    try {
      it->second(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  return parse_config(in, std::move(base));
}

std::uint64_t cell_seed(std::uint64_t base, double ratio, std::size_t run) {
  return derive_seed(derive_seed(base, std::bit_cast<std::uint64_t>(ratio)), run);
}

MetricsReport run_cell(const ExperimentConfig& config, const Dataset& data, Method method, double ratio,
                       std::size_t run, const CellProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  MetricsReport report;
  report.dataset = data.name;
  report.method = to_string(method);
  report.ratio = ratio;
  report.run = run;
  report.seed = cell_seed(config.seed, ratio, run);
  try {
    const MaskedDataset ds = mask_dataset(data, ratio, derive_seed(report.seed, kMaskStream));
    const std::size_t k = config.train.cluster_count ? config.train.cluster_count : data.class_count;
    std::vector<int> labels;
    if (method == Method::DdicOt) {
      TrainConfig train = config.train;
      train.cluster_count = k;
      train.seed = derive_seed(report.seed, kTrainStream);
      ProgressFn on_epoch;
      if (progress) on_epoch = [&](const EpochRecord& rec) { progress(report, rec); };
      FitResult fit_result = fit(ds, train, on_epoch);
      require_observed_kept(ds, fit_result.imputed, "ddic-ot imputation");
      if (config.reconstruction_rows > 0) {
        std::vector<std::size_t> rows(std::min(config.reconstruction_rows, ds.rows()));
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        const auto stem = config.out.stem().string();
        dump_reconstructions(data.features, fit_result, rows,
                             config.out.parent_path() /
                                 (stem + "_recon_" + ratio_tag(ratio) + "_" + std::to_string(run) + ".csv"));
      }
      labels = std::move(fit_result.labels);
      report.epochs = fit_result.epochs_run;
    } else {
      Matrix filled;
      if (method == Method::MeanFillKMeans) {
        filled = mean_fill(ds);
      } else if (method == Method::ZeroFillKMeans) {
        filled = zero_fill(ds);
      } else {
        filled = knn_fill(ds, config.knn_k);
      }
      require_observed_kept(ds, filled, "fill");
      const KMeansResult km =
          kmeans(filled, k, derive_seed(report.seed, kKMeansStream), 300, config.train.kmeans_restarts);
      labels = km.labels;
      report.epochs = km.iterations;
    }
    report.acc = acc(data.labels, labels);
    report.nmi = nmi(data.labels, labels);
    report.purity = purity(data.labels, labels);
  } catch (const std::exception& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.failed = true;
    report.error = e.what();
    report.acc = report.nmi = report.purity = nan;
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SweepResult sweep(const ExperimentConfig& config, const Dataset& data, const CellProgressFn& progress,
                  const CellDoneFn& done) {
  config.validate();
  data.validate();

  struct Cell {
    double ratio;
    std::size_t run;
    Method method;
  };
  std::vector<Cell> cells;
  for (double ratio : config.ratios) {
    for (std::size_t run = 0; run < config.runs; ++run) {
      for (Method m : config.methods) cells.push_back({ratio, run, m});
    }
  }

  SweepResult result;
  result.rows.resize(cells.size());
  std::mutex callback_mutex;
  CellProgressFn locked_progress;
  if (progress) {
    locked_progress = [&](const MetricsReport& cell, const EpochRecord& rec) {
      const std::lock_guard lock(callback_mutex);
      progress(cell, rec);
    };
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      result.rows[i] = run_cell(config, data, cells[i].method, cells[i].ratio, cells[i].run, locked_progress);
      if (done) {
        const std::lock_guard lock(callback_mutex);
        done(result.rows[i]);
      }
    }
  };
  const std::size_t workers = std::min(config.jobs, cells.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (Method m : config.methods) {
    for (double ratio : config.ratios) {
      std::vector<MetricsReport> ok;
      for (const auto& r : result.rows) {
        if (r.method == to_string(m) && r.ratio == ratio && !r.failed) ok.push_back(r);
      }
      if (ok.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        AggregateRow row;
        row.dataset = data.name;
        row.method = to_string(m);
        row.ratio = ratio;
        row.acc = row.nmi = row.purity = {nan, nan};
        result.aggregates.push_back(row);
      } else {
        result.aggregates.push_back(aggregate(ok));
      }
    }
  }
  result.failures = static_cast<std::size_t>(
      std::count_if(result.rows.begin(), result.rows.end(), [](const MetricsReport& r) { return r.failed; }));
  return result;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_results(std::ostream& out, std::span<const MetricsReport> rows) {
  out << kResultHeader << '\n';
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << format_double(r.ratio) << ',' << r.seed << ',' << r.run << ','
        << format_double(r.acc) << ',' << format_double(r.nmi) << ',' << format_double(r.purity) << ',' << r.epochs
        << ',' << format_double(r.wall_time_s) << '\n';
  }
}

void write_summary(std::ostream& out, std::span<const AggregateRow> rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << format_double(r.ratio) << ',' << r.runs << ','
        << format_double(r.acc.mean) << ',' << format_double(r.acc.std) << ',' << format_double(r.nmi.mean) << ','
        << format_double(r.nmi.std) << ',' << format_double(r.purity.mean) << ',' << format_double(r.purity.std)
        << '\n';
  }
}

std::filesystem::path summary_path(const std::filesystem::path& results) {
  return results.parent_path() / (results.stem().string() + "_summary.csv");
}

void write_sweep(const std::filesystem::path& path, const SweepResult& result) {
  {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_results(out, result.rows);
    if (!out) throw IoError("write failed: " + path.string());
  }
  const auto summary = summary_path(path);
  std::ofstream out(summary);
  if (!out) throw IoError("cannot write " + summary.string());
  write_summary(out, result.aggregates);
  if (!out) throw IoError("write failed: " + summary.string());
}

void dump_reconstructions(const Matrix& original, const FitResult& fit, std::span<const std::size_t> rows,
                          const std::filesystem::path& path) {
  if (!original.same_shape(fit.filled) || !original.same_shape(fit.imputed)) {
    throw ShapeError("dump_reconstructions: original " + shape_string(original) + " vs fitted " +
                     shape_string(fit.imputed));
  }
  for (std::size_t r : rows) {
    if (r >= original.rows()) throw ContractError("dump_reconstructions: row " + std::to_string(r) + " out of range");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row";
  for (std::size_t j = 0; j < original.cols(); ++j) out << ",x_" << j << ",filled_" << j << ",imputed_" << j;
  out << '\n';
  for (std::size_t r : rows) {
    out << r;
    for (std::size_t j = 0; j < original.cols(); ++j) {
      out << ',' << format_double(original(r, j)) << ',' << format_double(fit.filled(r, j)) << ','
          << format_double(fit.imputed(r, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ddic
