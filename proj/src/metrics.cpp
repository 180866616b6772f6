#include "tempoproj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "tempoproj/error.hpp"
#include "tempoproj/fft.hpp"

namespace tempoproj {

std::string to_string(MetricTag tag) {
  switch (tag) {
    case MetricTag::Euclidean: return "euclidean";
    case MetricTag::Dtw: return "dtw";
    case MetricTag::Sbd: return "sbd";
  }
  return "sbd";
}

MetricTag parse_metric(const std::string& name) {
  if (name == "euclidean") return MetricTag::Euclidean;
  if (name == "dtw") return MetricTag::Dtw;
  if (name == "sbd") return MetricTag::Sbd;
  fail(ErrorKind::Config, "unknown metric '" + name + "' (expected euclidean, dtw or sbd)");
}

double euclidean(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::Shape, "euclidean distance needs equal lengths (got " + std::to_string(x.size()) + " and " +
                               std::to_string(y.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

namespace {

void check_dtw_inputs(std::span<const double> x, std::span<const double> y, std::optional<std::size_t> band) {
  if (x.empty() || y.empty()) fail(ErrorKind::Shape, "dtw needs non-empty sequences");
  if (band) {
    const std::size_t gap = x.size() > y.size() ? x.size() - y.size() : y.size() - x.size();
    if (*band < gap) {
      fail(ErrorKind::Parameter, "dtw band " + std::to_string(*band) + " is narrower than the length difference " +
                                     std::to_string(gap));
    }
  }
}

// Column range [lo, hi] of row i admitted by the band.
std::pair<std::size_t, std::size_t> band_range(std::size_t i, std::size_t n, std::optional<std::size_t> band) {
  if (!band) return {0, n - 1};
  const std::size_t lo = i > *band ? i - *band : 0;
  const std::size_t hi = std::min(n - 1, i + *band);
  return {lo, hi};
}

}  // namespace

double dtw(std::span<const double> x, std::span<const double> y, std::optional<std::size_t> band) {
  check_dtw_inputs(x, y, band);
  const std::size_t m = x.size();
  const std::size_t n = y.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // prev/curr are shifted by one column so index 0 is the boundary.
  std::vector<double> prev(n + 1, inf), curr(n + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(curr.begin(), curr.end(), inf);
    const auto [lo, hi] = band_range(i, n, band);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double d = x[i] - y[j];
      const double best = std::min({prev[j + 1], curr[j], prev[j]});
      curr[j + 1] = d * d + best;
    }
    std::swap(prev, curr);
    prev[0] = inf;
  }
  return prev[n];
}

std::vector<std::pair<std::size_t, std::size_t>> dtw_path(std::span<const double> x, std::span<const double> y,
                                                          std::optional<std::size_t> band) {
  check_dtw_inputs(x, y, band);
  const std::size_t m = x.size();
  const std::size_t n = y.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cost((m + 1) * (n + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return cost[i * (n + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto [lo, hi] = band_range(i, n, band);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double d = x[i] - y[j];
      at(i + 1, j + 1) = d * d + std::min({at(i, j + 1), at(i + 1, j), at(i, j)});
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t i = m, j = n;
  while (i > 0 && j > 0) {
    path.emplace_back(i - 1, j - 1);
    const double diag = at(i - 1, j - 1);
    const double up = at(i - 1, j);
    const double left = at(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

CrossCorrelationSequence cross_correlate(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) fail(ErrorKind::Shape, "cross-correlation needs non-empty sequences");
  const std::size_t m = std::max(x.size(), y.size());
  const std::size_t size = fft::next_pow2(2 * m - 1);
  std::vector<std::complex<double>> fx(size), fy(size);
  std::copy(x.begin(), x.end(), fx.begin());
  std::copy(y.begin(), y.end(), fy.begin());
  fft::transform(fx, false);
  fft::transform(fy, false);
  for (std::size_t k = 0; k < size; ++k) fx[k] *= std::conj(fy[k]);
  fft::transform(fx, true);

  CrossCorrelationSequence cc;
  cc.m = m;
  cc.values.resize(2 * m - 1);
  for (std::size_t w = 0; w < 2 * m - 1; ++w) {
    const auto lag = static_cast<long>(w) - static_cast<long>(m - 1);
    const std::size_t idx = lag >= 0 ? static_cast<std::size_t>(lag) : size - static_cast<std::size_t>(-lag);
    cc.values[w] = fx[idx].real();
  }
  return cc;
}

SbdResult sbd_with_shift(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) fail(ErrorKind::Shape, "sbd needs non-empty sequences");
  double rx = 0.0, ry = 0.0;
  for (double v : x) rx += v * v;
  for (double v : y) ry += v * v;
  if (rx == 0.0 || ry == 0.0) fail(ErrorKind::DegenerateInput, "sbd is undefined for an all-zero sequence");
  const auto cc = cross_correlate(x, y);
  const double denom = std::sqrt(rx * ry);
  std::size_t best = 0;
  for (std::size_t w = 1; w < cc.values.size(); ++w) {
    if (cc.values[w] > cc.values[best]) best = w;
  }
  SbdResult result;
  result.distance = std::clamp(1.0 - cc.values[best] / denom, 0.0, 2.0);
  result.shift = static_cast<long>(best) - static_cast<long>(cc.m - 1);
  return result;
}

double sbd(std::span<const double> x, std::span<const double> y) { return sbd_with_shift(x, y).distance; }

double scalar_distance(std::span<const double> x, std::span<const double> y, const MetricKind& kind) {
  switch (kind.tag) {
    case MetricTag::Euclidean: return euclidean(x, y);
    case MetricTag::Dtw: return dtw(x, y, kind.dtw_band);
    case MetricTag::Sbd: return sbd(x, y);
  }
  return 0.0;
}

std::vector<double> sample_distance(const TimeSeries& a, const TimeSeries& b, const MetricKind& kind) {
  if (a.variables != b.variables) {
    fail(ErrorKind::Shape, "samples " + std::to_string(a.id) + " and " + std::to_string(b.id) +
                               " have different variable counts");
  }
  std::vector<double> out(a.variables);
  for (std::size_t v = 0; v < a.variables; ++v) out[v] = scalar_distance(a.variable(v), b.variable(v), kind);
  return out;
}

}  // namespace tempoproj
