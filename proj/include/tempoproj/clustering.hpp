#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tempoproj/dataset.hpp"
#include "tempoproj/matrix.hpp"

namespace tempoproj {

inline constexpr int kNoise = -1;

struct Assignment {
  std::vector<int> labels;  // kNoise for DBSCAN outliers
  std::size_t k = 0;
  std::optional<double> inertia_or_score;

  /// Non-noise labels must be contiguous in [0, k).
  void validate() const;
};

struct KmeansResult {
  Assignment assignment;
  Matrix centroids;
  /// Inertia after every assignment step; non-increasing.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. An emptied cluster is
/// re-seeded from the point farthest from its current centroid.
KmeansResult kmeans_detailed(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);
/// Best of `n_init` seeded restarts by final inertia.
Assignment kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                  std::size_t n_init = 10);

/// k-means under DTW (averaged over variables) with DTW barycenter averaging
/// centroids, initialized from members drawn k-means++ style under DTW.
Assignment kmeans_dtw(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);

/// DBA refinement of `centroid` against `members`, `iterations` rounds.
std::vector<double> dba_update(std::vector<double> centroid, const std::vector<std::span<const double>>& members,
                               std::size_t iterations = 10);

struct KshapeResult {
  Assignment assignment;
  std::vector<std::vector<double>> centroids;
};

/// k-shape on univariate equal-length series (z-normalized internally).
KshapeResult kshape_detailed(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);
Assignment kshape(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);

/// Principal-eigenvector shape of a set of series after aligning each to
/// `reference` by its SBD shift. An all-zero reference skips the alignment.
std::vector<double> extract_shape(const std::vector<std::span<const double>>& members,
                                  std::span<const double> reference);

/// Ng-Jordan-Weiss spectral clustering with a Gaussian affinity whose sigma
/// is the median of the non-zero pairwise distances.
Assignment spectral(const Matrix& points, std::size_t k, std::uint64_t seed);

/// Density clustering; neighbourhoods include the point itself. Border points
/// join the cluster of their nearest core neighbour. Without `eps` the knee
/// of the sorted min_pts-distance curve is used.
Assignment dbscan(const Matrix& points, std::optional<double> eps, std::size_t min_pts = 4);

/// Distance from every point to its min_pts-th nearest neighbour (counting itself), ascending.
std::vector<double> sorted_k_distances(const Matrix& points, std::size_t min_pts);
double knee_eps(const std::vector<double>& sorted_distances);

/// `sample_id,cluster` CSV.
void write_assignment_csv(const std::filesystem::path& path, const Assignment& a);

}  // namespace tempoproj
