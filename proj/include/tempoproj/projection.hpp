#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tempoproj/dataset.hpp"
#include "tempoproj/matrix.hpp"
#include "tempoproj/metrics.hpp"

namespace tempoproj {

/// Distinct sample indices used as reference points, sorted ascending.
struct PivotSet {
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;

  std::size_t size() const { return indices.size(); }
  bool operator==(const PivotSet&) const = default;
};

/// N x p x W tensor of sample-to-pivot distances.
struct ProjectionMatrix {
  std::size_t samples = 0;
  std::size_t pivots = 0;
  std::size_t width = 0;
  std::vector<double> values;
  MetricKind metric;
  PivotSet pivot_set;

  double at(std::size_t i, std::size_t j, std::size_t w) const { return values[(i * pivots + j) * width + w]; }
  std::span<const double> block(std::size_t i) const { return {values.data() + i * pivots * width, pivots * width}; }
  std::span<double> block(std::size_t i) { return {values.data() + i * pivots * width, pivots * width}; }

  /// N x (p*W) view for the Euclidean clustering back-ends.
  Matrix flatten() const { return Matrix(samples, pivots * width, values); }

  bool operator==(const ProjectionMatrix&) const = default;
};

/// Uniform sample of p indices without replacement, reproducible per seed.
PivotSet select_pivots(std::size_t n, std::size_t p, std::uint64_t seed);
PivotSet select_pivots(const Dataset& ds, std::size_t p, std::uint64_t seed);

ProjectionMatrix gen_proj_space(const Dataset& ds, const PivotSet& pivots, const MetricKind& metric);

/// Scales each sample's p x W block to unit Euclidean norm; zero blocks stay zero.
ProjectionMatrix normalize_projection(const ProjectionMatrix& pm);

void save_projection(const std::filesystem::path& path, const ProjectionMatrix& pm);
ProjectionMatrix load_projection(const std::filesystem::path& path);

/// File name keyed by (dataset hash, metric, p, seed).
std::string projection_cache_name(std::uint64_t dataset_hash, const MetricKind& metric, std::size_t p,
                                  std::uint64_t seed);

struct CachedProjection {
  ProjectionMatrix projection;
  std::filesystem::path path;
  bool from_cache = false;
};

/// Loads the projection from `cache_dir` when present, otherwise computes and stores it.
CachedProjection cached_projection(const Dataset& ds, std::size_t p, std::uint64_t seed, const MetricKind& metric,
                                   const std::filesystem::path& cache_dir);

}  // namespace tempoproj
