#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempoproj/autoencoder.hpp"
#include "tempoproj/clustering.hpp"
#include "tempoproj/dataset.hpp"
#include "tempoproj/metrics.hpp"
#include "tempoproj/projection.hpp"

namespace tempoproj {

/// Best matched fraction over bijections between predicted clusters and
/// classes. Noise labels (-1) each count as their own singleton cluster.
double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

enum class Pipeline { Os, Ls, Pr, PrLs };
enum class Algorithm { Kmeans, KmeansDtw, Kshape, Spectral, Dbscan };

std::string to_string(Pipeline p);
std::string to_string(Algorithm a);
Pipeline parse_pipeline(const std::string& name);
Algorithm parse_algorithm(const std::string& name);

struct PipelineConfig {
  Pipeline pipeline = Pipeline::PrLs;
  Algorithm algorithm = Algorithm::Kmeans;
  /// Distance used to build projections (Pr, PrLs).
  MetricKind metric{MetricTag::Sbd, std::nullopt};
  std::size_t pivots = 16;
  /// Cluster count; defaults to the dataset's hint or its label count.
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;

  /// Z-normalize raw series first. Unset means yes for OS, LS and SBD
  /// projections, and raw values for Euclidean and DTW projections.
  std::optional<bool> znormalize;
  /// Scale each projected sample to unit norm before clustering or training.
  bool normalize_projection = true;
  /// PrLs ablation: feed raw series to the CNN-GRU instead of projections.
  bool raw_autoencoder_input = false;

  CnnGruConfig cnn_gru;
  DenseDaeConfig dense_dae;

  std::optional<double> dbscan_eps;
  std::size_t dbscan_min_pts = 4;
  std::size_t max_iter = 300;

  /// Projection cache directory; empty disables caching.
  std::filesystem::path cache_dir;

  bool znormalizes() const;

  /// Throws ErrorKind::Config for illegal combinations.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);

struct StageTimes {
  double project = 0.0;
  double train = 0.0;
  double cluster = 0.0;
};

struct RunReport {
  PipelineConfig config;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  Assignment assignment;
  std::optional<double> accuracy;
  StageTimes times;
  std::vector<double> loss_history;
  std::vector<std::size_t> pivots;
};

/// Seeds derived from a run seed for each stochastic stage.
struct StageSeeds {
  std::uint64_t pivots;
  std::uint64_t model;
  std::uint64_t cluster;
};
StageSeeds stage_seeds(std::uint64_t run_seed);

RunReport run_pipeline(const Dataset& ds, const PipelineConfig& cfg);

/// What a pipeline hands to its autoencoder (LS, PrLs) or to a vector
/// clusterer (OS, Pr): one row per sample, plus the model input shape.
struct PipelineInput {
  Matrix data;
  std::vector<std::size_t> shape;
  std::vector<std::size_t> pivots;
};
PipelineInput pipeline_input(const Dataset& ds, const PipelineConfig& cfg);

/// Cluster count from cfg.k, the dataset's hint or its labels.
std::size_t resolve_k(const Dataset& ds, const PipelineConfig& cfg);

struct BenchmarkResult {
  PipelineConfig config;
  std::vector<RunReport> runs;
  double mean = 0.0;
  /// Sample standard deviation; 0 for a single run.
  double stddev = 0.0;
  std::optional<double> improvement;
};

/// `runs` executions seeded cfg.seed + r. Baseline means (OS, LS), when given,
/// produce the improvement mean - max(os, ls).
BenchmarkResult benchmark(const Dataset& ds, const PipelineConfig& cfg, std::size_t runs,
                          std::optional<double> baseline_os = std::nullopt,
                          std::optional<double> baseline_ls = std::nullopt);

double improvement(double accuracy, double baseline_os, double baseline_ls);

double sample_mean(const std::vector<double>& values);
double sample_stddev(const std::vector<double>& values);

/// Everything except wall times lives outside the "timing" field, so repeated
/// runs serialize identically apart from it.
nlohmann::json to_json(const RunReport& report);
nlohmann::json to_json(const BenchmarkResult& result);

/// One row per benchmark cell.
void write_benchmark_csv(const std::filesystem::path& path, const std::string& dataset,
                         const std::vector<BenchmarkResult>& results);

}  // namespace tempoproj
