#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>

#include "ddic/error.hpp"
#include "ddic/experiment.hpp"

namespace ddic::cli {

namespace {

nlohmann::json cell_json(const MetricsReport& r) {
  nlohmann::json j{{"dataset", r.dataset}, {"method", r.method}, {"ratio", r.ratio},
                   {"run", r.run},         {"seed", r.seed},     {"epochs", r.epochs},
                   {"wall_time_s", r.wall_time_s}};
  if (r.failed) {
    j["error"] = r.error;
  } else {
    j["acc"] = r.acc;
    j["nmi"] = r.nmi;
    j["purity"] = r.purity;
  }
  return j;
}

std::string pct(const MetricStats& s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%6.2f +- %5.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

void print_table(std::ostream& out, const SweepResult& result) {
  char line[160];
  std::snprintf(line, sizeof line, "%-11s %6s %4s  %-15s  %-15s  %-15s\n", "method", "ratio", "runs", "ACC", "NMI",
                "Purity");
  out << line;
  for (const auto& a : result.aggregates) {
    std::snprintf(line, sizeof line, "%-11s %6.2f %4zu  %s  %s  %s\n", a.method.c_str(), a.ratio, a.runs,
                  pct(a.acc).c_str(), pct(a.nmi).c_str(), pct(a.purity).c_str());
    out << line;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustering of incomplete data: deep embedded clustering with a Sinkhorn reconstruction loss, "
               "compared with fill-then-k-means baselines."};
  app.name("ddic_run");

  std::string config_path;
  std::optional<std::string> dataset, method, ratios, out_path;
  std::optional<std::size_t> runs, jobs, clusters;
  std::optional<double> gamma, eps;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  app.add_option("--config", config_path, "key = value experiment file; flags override it")->check(CLI::ExistingFile);
  app.add_option("--dataset", dataset, "blobs, csv:<path>, idx:<images>,<labels> or mnist:<dir>");
  app.add_option("--method", method, "comma list of ddic-ot, mf-kmeans, zf-kmeans, knn-kmeans");
  app.add_option("--ratios", ratios, "comma list of missing ratios in [0, 1]");
  app.add_option("--runs", runs, "independent runs per ratio");
  app.add_option("--gamma", gamma, "weight of the clustering loss");
  app.add_option("--eps", eps, "entropic regularization of the Sinkhorn loss");
  app.add_option("--seed", seed, "base seed of the sweep");
  app.add_option("--out", out_path, "per-run CSV; the summary goes to <stem>_summary.csv");
  app.add_option("--jobs", jobs, "cells run in parallel");
  app.add_option("--clusters", clusters, "cluster count (default: number of classes)");
  app.add_flag("--verbose,-v", verbose, "JSON lines with per-epoch progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  ExperimentConfig config;
  try {
    if (!config_path.empty()) config = load_config(config_path);
    if (dataset) {
      const DatasetSpec parsed = parse_dataset_spec(*dataset);
      config.dataset.kind = parsed.kind;
      config.dataset.path = parsed.path;
      config.dataset.labels_path = parsed.labels_path;
    }
    if (method) config.methods = parse_methods(*method);
    if (ratios) config.ratios = parse_ratios(*ratios);
    if (runs) config.runs = *runs;
    if (gamma) config.train.gamma = *gamma;
    if (eps) config.train.eps = *eps;
    if (seed) config.seed = *seed;
    if (out_path) config.out = *out_path;
    if (jobs) config.jobs = *jobs;
    if (clusters) config.train.cluster_count = *clusters;
    config.validate();
  } catch (const Error& e) {
    err << "ddic_run: " << e.what() << '\n';
    return 2;
  }

  Dataset data;
  try {
    data = load_dataset(config.dataset);
    data.validate();
  } catch (const ConfigError& e) {
    err << "ddic_run: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "ddic_run: cannot load dataset: " << e.what() << '\n';
    return 3;
  }

  CellProgressFn on_epoch;
  CellDoneFn on_cell;
  if (verbose) {
    on_epoch = [&](const MetricsReport& cell, const EpochRecord& rec) {
      err << nlohmann::json{{"event", "epoch"},
                            {"method", cell.method},
                            {"ratio", cell.ratio},
                            {"run", cell.run},
                            {"epoch", rec.epoch},
                            {"reconstruction", rec.reconstruction},
                            {"clustering", rec.clustering},
                            {"total", rec.total},
                            {"label_change", rec.label_change}}
                 .dump()
          << '\n';
    };
  }
  on_cell = [&](const MetricsReport& r) {
    if (verbose) {
      nlohmann::json j = cell_json(r);
      j["event"] = "cell";
      err << j.dump() << '\n';
    } else if (r.failed) {
      err << "ddic_run: " << r.method << " ratio " << r.ratio << " run " << r.run << " failed: " << r.error << '\n';
    }
  };

  const SweepResult result = sweep(config, data, on_epoch, on_cell);
  try {
    write_sweep(config.out, result);
  } catch (const Error& e) {
    err << "ddic_run: " << e.what() << '\n';
    return 3;
  }

  print_table(out, result);
  out << "results: " << config.out.string() << "\nsummary: " << summary_path(config.out).string() << '\n';
  if (result.failures > 0) {
    err << "ddic_run: " << result.failures << " of " << result.rows.size() << " cells failed\n";
    return 1;
  }
  return 0;
}

}  // namespace ddic::cli
