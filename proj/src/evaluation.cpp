#include "tempoproj/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "tempoproj/error.hpp"
#include "tempoproj/hungarian.hpp"
#include "tempoproj/parallel.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs a stage, timing it and prefixing any library error with the stage name.
template <typename Fn>
auto timed_stage(const char* name, double& elapsed, Fn&& fn) {
  const auto start = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      elapsed = seconds_since(start);
    } else {
      auto result = fn();
      elapsed = seconds_since(start);
      return result;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + name + "': " + e.what());
  }
}

// N x (V*T), variable-major rows.
Matrix flatten_series(const Dataset& ds) {
  if (!ds.equal_length()) fail(ErrorKind::Shape, "this pipeline needs equal-length series");
  const std::size_t cols = ds.variables() * ds.samples.front().length;
  Matrix m(ds.size(), cols);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.samples[i].values.begin(), ds.samples[i].values.end(), m.row(i).begin());
  }
  return m;
}

// N x (T*V), time-major rows: the layout of a T x V single-channel image.
Matrix series_images(const Dataset& ds) {
  if (!ds.equal_length()) fail(ErrorKind::Shape, "this pipeline needs equal-length series");
  const std::size_t t_len = ds.samples.front().length, vars = ds.variables();
  Matrix m(ds.size(), t_len * vars);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t v = 0; v < vars; ++v) {
      for (std::size_t t = 0; t < t_len; ++t) m(i, t * vars + v) = ds.samples[i].values[v * t_len + t];
    }
  }
  return m;
}

Assignment cluster_points(const Matrix& points, const PipelineConfig& cfg, std::size_t k, std::uint64_t seed) {
  switch (cfg.algorithm) {
    case Algorithm::Kmeans: return kmeans(points, k, seed, cfg.max_iter);
    case Algorithm::Spectral: return spectral(points, k, seed);
    case Algorithm::Dbscan: return dbscan(points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    case Algorithm::KmeansDtw:
    case Algorithm::Kshape: break;
  }
  fail(ErrorKind::Config, to_string(cfg.algorithm) + " cannot cluster vector embeddings");
}

ProjectionMatrix project(const Dataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  ProjectionMatrix pm;
  if (cfg.cache_dir.empty()) {
    pm = gen_proj_space(ds, select_pivots(ds, cfg.pivots, seed), cfg.metric);
  } else {
    pm = cached_projection(ds, cfg.pivots, seed, cfg.metric, cfg.cache_dir).projection;
  }
  return cfg.normalize_projection ? normalize_projection(pm) : pm;
}

PipelineInput input_for(const Dataset& ds, const PipelineConfig& cfg, const StageSeeds& seeds) {
  PipelineInput in;
  switch (cfg.pipeline) {
    case Pipeline::Os:
    case Pipeline::Ls:
      in.data = flatten_series(ds);
      in.shape = {in.data.cols};
      break;
    case Pipeline::Pr:
    case Pipeline::PrLs:
      if (cfg.pipeline == Pipeline::PrLs && cfg.raw_autoencoder_input) {
        in.data = series_images(ds);
        in.shape = {ds.samples.front().length, ds.variables(), 1};
        break;
      }
      auto pm = project(ds, cfg, seeds.pivots);
      in.pivots = pm.pivot_set.indices;
      in.shape = {pm.pivots, pm.width, 1};
      in.data = pm.flatten();
      break;
  }
  return in;
}

std::string cell_metric(const PipelineConfig& cfg) {
  if (cfg.pipeline == Pipeline::Pr || cfg.pipeline == Pipeline::PrLs) return to_string(cfg.metric.tag);
  if (cfg.algorithm == Algorithm::KmeansDtw) return "dtw";
  if (cfg.algorithm == Algorithm::Kshape) return "sbd";
  return "euclidean";
}

}  // namespace

std::size_t resolve_k(const Dataset& ds, const PipelineConfig& cfg) {
  if (cfg.k) return *cfg.k;
  if (ds.k_hint) return *ds.k_hint;
  if (ds.labels && !ds.labels->empty()) {
    return static_cast<std::size_t>(*std::max_element(ds.labels->begin(), ds.labels->end())) + 1;
  }
  fail(ErrorKind::Config, "cluster count unknown: pass k or use a labelled dataset");
}

double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    fail(ErrorKind::Shape, "accuracy needs equal lengths, got " + std::to_string(pred.size()) + " predictions and " +
                               std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) fail(ErrorKind::EmptyDataset, "accuracy of an empty labelling");
  std::map<int, std::size_t> classes, clusters;
  for (int t : truth) {
    if (t < 0) fail(ErrorKind::Label, "ground-truth labels must be non-negative");
    classes.emplace(t, classes.size());
  }
  std::vector<std::size_t> cluster_of(pred.size());
  std::size_t singletons = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == kNoise) {
      cluster_of[i] = std::numeric_limits<std::size_t>::max() - singletons++;
    } else {
      cluster_of[i] = static_cast<std::size_t>(clusters.emplace(pred[i], clusters.size()).first->second);
    }
  }
  const std::size_t named = clusters.size();
  const std::size_t n_clusters = named + singletons;
  // Rows are classes so the matching stays K x P even with many noise points;
  // this reaches the same optimum as zero-padding the table to square.
  const std::size_t side = std::max(classes.size(), n_clusters);
  Matrix cost(classes.size(), side, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t c = cluster_of[i] < named ? cluster_of[i]
                                                : named + (std::numeric_limits<std::size_t>::max() - cluster_of[i]);
    cost(classes.at(truth[i]), c) -= 1.0;
  }
  const auto match = hungarian_rectangular(cost);
  return -match.cost / static_cast<double>(pred.size());
}

std::string to_string(Pipeline p) {
  switch (p) {
    case Pipeline::Os: return "os";
    case Pipeline::Ls: return "ls";
    case Pipeline::Pr: return "pr";
    case Pipeline::PrLs: return "prls";
  }
  return "?";
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Kmeans: return "kmeans";
    case Algorithm::KmeansDtw: return "kmeans-dtw";
    case Algorithm::Kshape: return "kshape";
    case Algorithm::Spectral: return "spectral";
    case Algorithm::Dbscan: return "dbscan";
  }
  return "?";
}

Pipeline parse_pipeline(const std::string& name) {
  for (auto p : {Pipeline::Os, Pipeline::Ls, Pipeline::Pr, Pipeline::PrLs}) {
    if (to_string(p) == name) return p;
  }
  fail(ErrorKind::Config, "unknown pipeline '" + name + "' (expected os, ls, pr or prls)");
}

Algorithm parse_algorithm(const std::string& name) {
  for (auto a : {Algorithm::Kmeans, Algorithm::KmeansDtw, Algorithm::Kshape, Algorithm::Spectral, Algorithm::Dbscan}) {
    if (to_string(a) == name) return a;
  }
  fail(ErrorKind::Config, "unknown algorithm '" + name + "'");
}

bool PipelineConfig::znormalizes() const {
  if (znormalize) return *znormalize;
  const bool projected = pipeline == Pipeline::Pr || pipeline == Pipeline::PrLs;
  return !projected || raw_autoencoder_input || metric.tag == MetricTag::Sbd;
}

void PipelineConfig::validate() const {
  if ((algorithm == Algorithm::KmeansDtw || algorithm == Algorithm::Kshape) && pipeline != Pipeline::Os) {
    fail(ErrorKind::Config, to_string(algorithm) + " is only available with the os pipeline");
  }
  if ((pipeline == Pipeline::Pr || pipeline == Pipeline::PrLs) && pivots == 0) {
    fail(ErrorKind::Config, "pivot count must be at least 1");
  }
  if (k && *k == 0) fail(ErrorKind::Config, "k must be at least 1");
  if (dbscan_min_pts == 0) fail(ErrorKind::Config, "dbscan min_pts must be at least 1");
  if (dbscan_eps && !(*dbscan_eps >= 0.0)) fail(ErrorKind::Config, "dbscan eps must be non-negative");
  if (pipeline == Pipeline::Ls) dense_dae.validate();
  if (pipeline == Pipeline::PrLs) cnn_gru.validate();
}

json to_json(const PipelineConfig& cfg) {
  json j{{"pipeline", to_string(cfg.pipeline)},
         {"algorithm", to_string(cfg.algorithm)},
         {"seed", cfg.seed},
         {"znormalize", cfg.znormalizes()},
         {"k", cfg.k ? json(*cfg.k) : json(nullptr)}};
  if (cfg.pipeline == Pipeline::Pr || cfg.pipeline == Pipeline::PrLs) {
    j["metric"] = to_string(cfg.metric.tag);
    j["dtw_band"] = cfg.metric.dtw_band ? json(*cfg.metric.dtw_band) : json(nullptr);
    j["pivots"] = cfg.pivots;
    j["normalize_projection"] = cfg.normalize_projection;
  }
  if (cfg.pipeline == Pipeline::PrLs) {
    ModelParams probe;
    probe.config = cfg.cnn_gru;
    j["autoencoder"] = config_to_json(probe)["config"];
    j["raw_autoencoder_input"] = cfg.raw_autoencoder_input;
  }
  if (cfg.pipeline == Pipeline::Ls) {
    ModelParams probe;
    probe.architecture = Architecture::DenseDae;
    probe.config = cfg.dense_dae;
    j["autoencoder"] = config_to_json(probe)["config"];
  }
  if (cfg.algorithm == Algorithm::Dbscan) {
    j["dbscan_eps"] = cfg.dbscan_eps ? json(*cfg.dbscan_eps) : json("auto");
    j["dbscan_min_pts"] = cfg.dbscan_min_pts;
  }
  return j;
}

PipelineInput pipeline_input(const Dataset& raw, const PipelineConfig& cfg) {
  cfg.validate();
  raw.validate();
  if (raw.size() == 0) fail(ErrorKind::EmptyDataset, "dataset has no samples");
  return input_for(cfg.znormalizes() ? znormalize(raw) : raw, cfg, stage_seeds(cfg.seed));
}

StageSeeds stage_seeds(std::uint64_t run_seed) {
  return {Rng::mix(run_seed, 1), Rng::mix(run_seed, 2), Rng::mix(run_seed, 3)};
}

RunReport run_pipeline(const Dataset& raw, const PipelineConfig& cfg) {
  cfg.validate();
  raw.validate();
  if (raw.size() == 0) fail(ErrorKind::EmptyDataset, "dataset has no samples");
  RunReport report;
  report.config = cfg;
  report.seed = cfg.seed;
  report.k = resolve_k(raw, cfg);
  const auto seeds = stage_seeds(cfg.seed);
  const Dataset ds = cfg.znormalizes() ? znormalize(raw) : raw;
  const std::size_t k = report.k;

  switch (cfg.pipeline) {
    case Pipeline::Os:
      report.assignment = timed_stage("cluster", report.times.cluster, [&] {
        if (cfg.algorithm == Algorithm::KmeansDtw) return kmeans_dtw(ds, k, seeds.cluster, cfg.max_iter);
        if (cfg.algorithm == Algorithm::Kshape) return kshape(ds, k, seeds.cluster, cfg.max_iter);
        return cluster_points(flatten_series(ds), cfg, k, seeds.cluster);
      });
      break;
    case Pipeline::Ls: {
      const auto input = timed_stage("project", report.times.project, [&] { return input_for(ds, cfg, seeds); });
      const Matrix latent = timed_stage("train", report.times.train, [&] {
        auto dae_cfg = cfg.dense_dae;
        dae_cfg.seed = seeds.model;
        auto model = build_dense_dae(input.data.cols, dae_cfg);
        report.loss_history = train(model, input.data);
        return encode(model, input.data);
      });
      report.assignment = timed_stage("cluster", report.times.cluster,
                                      [&] { return cluster_points(latent, cfg, k, seeds.cluster); });
      break;
    }
    case Pipeline::Pr: {
      const auto input = timed_stage("project", report.times.project, [&] { return input_for(ds, cfg, seeds); });
      report.pivots = input.pivots;
      report.assignment = timed_stage("cluster", report.times.cluster,
                                      [&] { return cluster_points(input.data, cfg, k, seeds.cluster); });
      break;
    }
    case Pipeline::PrLs: {
      const auto input = timed_stage("project", report.times.project, [&] { return input_for(ds, cfg, seeds); });
      report.pivots = input.pivots;
      const Matrix latent = timed_stage("train", report.times.train, [&] {
        auto ae_cfg = cfg.cnn_gru;
        ae_cfg.seed = seeds.model;
        auto model = build_cnn_gru(input.shape[0], input.shape[1], input.shape[2], ae_cfg);
        report.loss_history = train(model, input.data);
        return encode(model, input.data);
      });
      report.assignment = timed_stage("cluster", report.times.cluster,
                                      [&] { return cluster_points(latent, cfg, k, seeds.cluster); });
      break;
    }
  }
  if (raw.labels) report.accuracy = clustering_accuracy(report.assignment.labels, *raw.labels);
  return report;
}

double sample_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = sample_mean(values);
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / static_cast<double>(values.size() - 1));
}

double improvement(double accuracy, double baseline_os, double baseline_ls) {
  return accuracy - std::max(baseline_os, baseline_ls);
}

BenchmarkResult benchmark(const Dataset& ds, const PipelineConfig& cfg, std::size_t runs,
                          std::optional<double> baseline_os, std::optional<double> baseline_ls) {
  if (runs == 0) fail(ErrorKind::Config, "runs must be at least 1");
  cfg.validate();
  BenchmarkResult result;
  result.config = cfg;
  result.runs.resize(runs);
  parallel_for(runs, [&](std::size_t r) {
    PipelineConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + r;
    result.runs[r] = run_pipeline(ds, run_cfg);
    spdlog::debug("{} {} run {} accuracy {}", to_string(cfg.pipeline), to_string(cfg.algorithm), r,
                  result.runs[r].accuracy.value_or(-1.0));
  });
  std::vector<double> acc;
  for (const auto& run : result.runs) {
    if (run.accuracy) acc.push_back(*run.accuracy);
  }
  if (!acc.empty()) {
    result.mean = sample_mean(acc);
    result.stddev = sample_stddev(acc);
    if (baseline_os || baseline_ls) {
      result.improvement = improvement(result.mean, baseline_os.value_or(-1.0), baseline_ls.value_or(-1.0));
    }
  }
  return result;
}

json to_json(const RunReport& report) {
  json j{{"config", to_json(report.config)},
         {"seed", report.seed},
         {"k", report.k},
         {"labels", report.assignment.labels},
         {"clusters", report.assignment.k},
         {"accuracy", report.accuracy ? json(*report.accuracy) : json(nullptr)},
         {"pivots", report.pivots},
         {"loss_history", report.loss_history}};
  j["timing"] = {{"project_s", report.times.project},
                 {"train_s", report.times.train},
                 {"cluster_s", report.times.cluster}};
  return j;
}

json to_json(const BenchmarkResult& result) {
  json runs = json::array();
  for (const auto& r : result.runs) runs.push_back(to_json(r));
  return {{"config", to_json(result.config)},
          {"runs", result.runs.size()},
          {"mean", result.mean},
          {"std", result.stddev},
          {"improvement", result.improvement ? json(*result.improvement) : json(nullptr)},
          {"reports", runs}};
}

void write_benchmark_csv(const std::filesystem::path& path, const std::string& dataset,
                         const std::vector<BenchmarkResult>& results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "dataset,pipeline,algorithm,metric,pivots,runs,mean,std,improvement\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& r : results) {
    const bool projected = r.config.pipeline == Pipeline::Pr || r.config.pipeline == Pipeline::PrLs;
    out << dataset << ',' << to_string(r.config.pipeline) << ',' << to_string(r.config.algorithm) << ','
        << cell_metric(r.config) << ','
        << (projected ? std::to_string(r.config.pivots) : std::string()) << ',' << r.runs.size() << ',' << r.mean
        << ',' << r.stddev << ',';
    if (r.improvement) out << *r.improvement;
    out << '\n';
  }
}

}  // namespace tempoproj
