#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempoproj/dataset.hpp"

namespace tempoproj {

enum class MetricTag { Euclidean, Dtw, Sbd };

struct MetricKind {
  MetricTag tag = MetricTag::Sbd;
  /// Sakoe-Chiba radius; only meaningful for Dtw.
  std::optional<std::size_t> dtw_band;

  bool operator==(const MetricKind&) const = default;
};

std::string to_string(MetricTag tag);
MetricTag parse_metric(const std::string& name);

/// Cross-correlation over all 2m-1 lags. Index w holds lag w-(m-1), i.e.
/// values[w] = sum_l x[l + w - (m-1)] * y[l]; index m-1 is the inner product.
struct CrossCorrelationSequence {
  std::vector<double> values;
  std::size_t m = 0;

  double zero_lag() const { return values[m - 1]; }
};

double euclidean(std::span<const double> x, std::span<const double> y);

/// DTW with squared-difference local cost and the symmetric
/// {(1,0),(0,1),(1,1)} step pattern. `band` is a Sakoe-Chiba radius on |i-j|.
double dtw(std::span<const double> x, std::span<const double> y, std::optional<std::size_t> band = std::nullopt);

/// Optimal warping path as (index in x, index in y) pairs from (0,0) to (m-1,n-1).
std::vector<std::pair<std::size_t, std::size_t>> dtw_path(std::span<const double> x, std::span<const double> y,
                                                          std::optional<std::size_t> band = std::nullopt);

/// FFT-based cross-correlation; the shorter input is zero-padded to max length.
CrossCorrelationSequence cross_correlate(std::span<const double> x, std::span<const double> y);

/// Shape-based distance, 1 - max_w NCC_c(x, y), in [0, 2].
double sbd(std::span<const double> x, std::span<const double> y);

/// SBD together with the lag (shift of y relative to x) achieving it.
struct SbdResult {
  double distance = 0.0;
  long shift = 0;
};
SbdResult sbd_with_shift(std::span<const double> x, std::span<const double> y);

double scalar_distance(std::span<const double> x, std::span<const double> y, const MetricKind& kind);

/// Per-variable distances, W = V entries.
std::vector<double> sample_distance(const TimeSeries& a, const TimeSeries& b, const MetricKind& kind);

}  // namespace tempoproj
