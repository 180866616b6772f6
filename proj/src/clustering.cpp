#include "tempoproj/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tempoproj/eigen.hpp"
#include "tempoproj/error.hpp"
#include "tempoproj/metrics.hpp"
#include "tempoproj/parallel.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj {

namespace {

constexpr std::size_t kDbaIterations = 10;

void check_k(std::size_t k, std::size_t n) {
  if (k == 0) fail(ErrorKind::Parameter, "k must be at least 1");
  if (k > n) fail(ErrorKind::Parameter, "k = " + std::to_string(k) + " exceeds sample count " + std::to_string(n));
}

std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

Matrix kmeanspp(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows, d = points.cols;
  Matrix centers(k, d);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(points.row(pick).begin(), d, centers.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(points.row(i), centers.row(c)));
      total += closest[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.below(n));
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += closest[i];
      if (acc > target && closest[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

// Aligns y to x using the SBD shift convention (y'[t] = y[t - shift]).
std::vector<double> shift_series(std::span<const double> y, long shift) {
  const long m = static_cast<long>(y.size());
  std::vector<double> out(y.size(), 0.0);
  for (long t = 0; t < m; ++t) {
    const long src = t - shift;
    if (src >= 0 && src < m) out[static_cast<std::size_t>(t)] = y[static_cast<std::size_t>(src)];
  }
  return out;
}

bool all_zero(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
}

// SBD that treats an all-zero side as uncorrelated rather than an error.
SbdResult sbd_or_flat(std::span<const double> x, std::span<const double> y) {
  if (all_zero(x) || all_zero(y)) return {1.0, 0};
  return sbd_with_shift(x, y);
}

std::vector<double> znorm_vector(std::vector<double> v) {
  const auto ts = znormalize(TimeSeries::univariate(std::move(v)));
  return ts.values;
}

// Compacts used labels to [0, k') in order of first appearance; returns the
// old id for each new id.
std::vector<std::size_t> compact_labels(std::vector<int>& labels) {
  std::vector<std::size_t> old_ids;
  std::vector<int> remap;
  int next = 0;
  for (int& l : labels) {
    if (l < 0) continue;
    if (static_cast<std::size_t>(l) >= remap.size()) remap.resize(static_cast<std::size_t>(l) + 1, -1);
    if (remap[static_cast<std::size_t>(l)] < 0) {
      remap[static_cast<std::size_t>(l)] = next++;
      old_ids.push_back(static_cast<std::size_t>(l));
    }
    l = remap[static_cast<std::size_t>(l)];
  }
  return old_ids;
}

Matrix pairwise_distances(const Matrix& points) {
  const std::size_t n = points.rows;
  Matrix dist(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) dist(i, j) = std::sqrt(squared_distance(points.row(i), points.row(j)));
    }
  });
  return dist;
}

}  // namespace

void Assignment::validate() const {
  std::vector<bool> seen(k, false);
  for (int l : labels) {
    if (l == kNoise) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= k) fail(ErrorKind::Label, "cluster label out of range");
    seen[static_cast<std::size_t>(l)] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    fail(ErrorKind::Label, "cluster labels are not contiguous");
  }
}

KmeansResult kmeans_detailed(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  const std::size_t n = points.rows, d = points.cols;
  check_k(k, n);
  if (d == 0) fail(ErrorKind::Shape, "k-means needs at least one feature");
  Rng rng(seed);
  KmeansResult r;
  r.centroids = kmeanspp(points, k, rng);
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  std::vector<double> scratch(k);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) scratch[c] = squared_distance(points.row(i), r.centroids.row(c));
      const auto best = static_cast<int>(argmin(scratch));
      dist[i] = scratch[static_cast<std::size_t>(best)];
      inertia += dist[i];
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    r.inertia_history.push_back(inertia);
    r.iterations = iter + 1;
    if (!changed) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums(c, j) += points(i, j);
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) r.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > best) {
          best = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      std::copy_n(points.row(far).begin(), d, r.centroids.row(c).begin());
    }
  }
  r.assignment.labels = std::move(labels);
  r.assignment.k = k;
  r.assignment.inertia_or_score = r.inertia_history.back();
  return r;
}

Assignment kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter, std::size_t n_init) {
  Assignment best;
  for (std::size_t i = 0; i < std::max<std::size_t>(n_init, 1); ++i) {
    auto r = kmeans_detailed(points, k, Rng::mix(seed, i), max_iter);
    if (i == 0 || *r.assignment.inertia_or_score < *best.inertia_or_score) best = std::move(r.assignment);
  }
  return best;
}

std::vector<double> dba_update(std::vector<double> centroid, const std::vector<std::span<const double>>& members,
                               std::size_t iterations) {
  if (members.empty() || centroid.empty()) return centroid;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> sums(centroid.size(), 0.0);
    std::vector<std::size_t> counts(centroid.size(), 0);
    for (const auto& x : members) {
      for (const auto& [i, j] : dtw_path(centroid, x)) {
        sums[i] += x[j];
        ++counts[i];
      }
    }
    std::vector<double> next(centroid.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = sums[i] / static_cast<double>(counts[i]);
    if (next == centroid) break;
    centroid = std::move(next);
  }
  return centroid;
}

Assignment kmeans_dtw(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  ds.validate();
  const std::size_t n = ds.size(), vars = ds.variables();
  check_k(k, n);
  auto distance = [&](const TimeSeries& c, const TimeSeries& x) {
    double s = 0.0;
    for (std::size_t v = 0; v < vars; ++v) s += dtw(c.variable(v), x.variable(v));
    return s / static_cast<double>(vars);
  };

  // Members drawn with probability proportional to squared distance from
  // the members already chosen (k-means++ under DTW).
  Rng rng(seed);
  std::vector<TimeSeries> centroids;
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    centroids.push_back(ds.samples[pick]);
    if (c + 1 == k) break;
    parallel_for(n, [&](std::size_t i) {
      const double d = distance(centroids.back(), ds.samples[i]);
      closest[i] = std::min(closest[i], d * d);
    });
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.below(n));
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += closest[i];
      if (acc > target && closest[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  double inertia = 0.0;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    std::vector<int> next(n);
    parallel_for(n, [&](std::size_t i) {
      std::vector<double> d(k);
      for (std::size_t c = 0; c < k; ++c) d[c] = distance(centroids[c], ds.samples[i]);
      const auto best = argmin(d);
      next[i] = static_cast<int>(best);
      dist[i] = d[best];
    });
    inertia = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (next == labels) break;
    labels = std::move(next);

    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == static_cast<int>(c)) members.push_back(i);
      }
      if (members.empty()) {
        std::size_t far = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!taken[i] && dist[i] > best) {
            best = dist[i];
            far = i;
          }
        }
        taken[far] = true;
        centroids[c] = ds.samples[far];
        continue;
      }
      TimeSeries& cen = centroids[c];
      for (std::size_t v = 0; v < vars; ++v) {
        std::vector<std::span<const double>> spans;
        for (auto i : members) spans.push_back(ds.samples[i].variable(v));
        const auto cv = cen.variable(v);
        const auto updated = dba_update(std::vector<double>(cv.begin(), cv.end()), spans, kDbaIterations);
        std::copy(updated.begin(), updated.end(), cen.variable(v).begin());
      }
    }
  }
  Assignment a;
  a.labels = std::move(labels);
  a.k = compact_labels(a.labels).size();
  a.inertia_or_score = inertia;
  return a;
}

std::vector<double> extract_shape(const std::vector<std::span<const double>>& members,
                                  std::span<const double> reference) {
  const std::size_t m = reference.size();
  if (members.empty()) return std::vector<double>(m, 0.0);
  const bool align = !all_zero(reference);
  std::vector<std::vector<double>> aligned;
  aligned.reserve(members.size());
  for (const auto& x : members) {
    if (x.size() != m) fail(ErrorKind::Shape, "shape extraction needs equal-length series");
    if (align && !all_zero(x)) {
      aligned.push_back(shift_series(x, sbd_with_shift(reference, x).shift));
    } else {
      aligned.emplace_back(x.begin(), x.end());
    }
  }
  // M = Q^T S Q with S = X^T X and Q = I - 11^T / m; QX^T centres each aligned row.
  for (auto& row : aligned) {
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(m);
    for (double& v : row) v -= mean;
  }
  SymmetricMatrix s(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      double acc = 0.0;
      for (const auto& row : aligned) acc += row[i] * row[j];
      s(i, j) = acc;
    }
  }
  const auto eig = jacobi_eigen(s);
  std::vector<double> shape(m);
  for (std::size_t i = 0; i < m; ++i) shape[i] = eig.vectors(i, 0);

  double d_pos = 0.0, d_neg = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    d_pos += (aligned[0][i] - shape[i]) * (aligned[0][i] - shape[i]);
    d_neg += (aligned[0][i] + shape[i]) * (aligned[0][i] + shape[i]);
  }
  if (d_neg < d_pos) {
    for (double& v : shape) v = -v;
  }
  return znorm_vector(std::move(shape));
}

KshapeResult kshape_detailed(const Dataset& raw, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  raw.validate();
  if (raw.variables() != 1) fail(ErrorKind::UnsupportedInput, "k-shape supports univariate series only");
  if (!raw.equal_length()) fail(ErrorKind::Shape, "k-shape needs equal-length series");
  const std::size_t n = raw.size();
  check_k(k, n);
  const Dataset ds = znormalize(raw);
  const std::size_t m = ds.samples.front().length;

  Rng rng(seed);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(k));
  std::vector<std::vector<double>> centroids(k, std::vector<double>(m, 0.0));
  std::vector<double> dist(n, 0.0);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::span<const double>> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == static_cast<int>(c)) members.push_back(ds.samples[i].variable(0));
      }
      if (members.empty()) {
        std::size_t far = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!taken[i] && dist[i] > best) {
            best = dist[i];
            far = i;
          }
        }
        taken[far] = true;
        labels[far] = static_cast<int>(c);
        centroids[c] = ds.samples[far].values;
        continue;
      }
      centroids[c] = extract_shape(members, centroids[c]);
    }

    std::vector<int> next(n);
    parallel_for(n, [&](std::size_t i) {
      std::vector<double> d(k);
      for (std::size_t c = 0; c < k; ++c) d[c] = sbd_or_flat(centroids[c], ds.samples[i].variable(0)).distance;
      const auto best = argmin(d);
      next[i] = static_cast<int>(best);
      dist[i] = d[best];
    });
    if (next == labels) break;
    labels = std::move(next);
  }

  KshapeResult r;
  r.assignment.labels = std::move(labels);
  const auto old_ids = compact_labels(r.assignment.labels);
  r.assignment.k = old_ids.size();
  r.assignment.inertia_or_score = std::accumulate(dist.begin(), dist.end(), 0.0);
  for (auto id : old_ids) r.centroids.push_back(std::move(centroids[id]));
  return r;
}

Assignment kshape(const Dataset& ds, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  return kshape_detailed(ds, k, seed, max_iter).assignment;
}

Assignment spectral(const Matrix& points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.rows;
  check_k(k, n);
  const Matrix dist = pairwise_distances(points);
  std::vector<double> nonzero;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dist(i, j) > 0.0) nonzero.push_back(dist(i, j));
    }
  }
  if (nonzero.empty()) {
    if (n == 1) return Assignment{{0}, 1, std::nullopt};
    fail(ErrorKind::DegenerateInput, "spectral clustering: all points are identical");
  }
  const auto mid = nonzero.begin() + static_cast<std::ptrdiff_t>(nonzero.size() / 2);
  std::nth_element(nonzero.begin(), mid, nonzero.end());
  double sigma = *mid;
  if (nonzero.size() % 2 == 0) sigma = 0.5 * (sigma + *std::max_element(nonzero.begin(), mid));
  const double denom = 2.0 * sigma * sigma;

  Matrix affinity(n, n);
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) affinity(i, j) = std::exp(-dist(i, j) * dist(i, j) / denom);
      degree[i] += affinity(i, j);
    }
  }
  SymmetricMatrix normalized(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double scale = degree[i] > 0.0 && degree[j] > 0.0 ? 1.0 / std::sqrt(degree[i] * degree[j]) : 0.0;
      normalized(i, j) = affinity(i, j) * scale;
    }
  }
  // The top-k eigenvectors of D^-1/2 A D^-1/2 are the bottom-k of the normalized Laplacian.
  const auto eig = jacobi_eigen(normalized);
  Matrix embedding(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      embedding(i, c) = eig.vectors(i, c);
      norm += embedding(i, c) * embedding(i, c);
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t c = 0; c < k; ++c) embedding(i, c) /= norm;
    }
  }
  Assignment a = kmeans(embedding, k, seed);
  a.inertia_or_score.reset();
  return a;
}

std::vector<double> sorted_k_distances(const Matrix& points, std::size_t min_pts) {
  const std::size_t n = points.rows;
  if (n == 0) return {};
  const Matrix dist = pairwise_distances(points);
  const std::size_t rank = std::min(min_pts, n) - 1;  // row includes the point itself at distance 0
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dist.row(i).begin(), dist.row(i).end());
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(rank), row.end());
    out[i] = row[rank];
  }
  std::sort(out.begin(), out.end());
  return out;
}

double knee_eps(const std::vector<double>& d) {
  if (d.empty()) return 0.0;
  const std::size_t n = d.size();
  const double lo = d.front(), hi = d.back();
  if (n < 3 || hi <= lo) return hi;
  // Largest gap below the chord of the normalized ascending curve.
  std::size_t best = n - 1;
  double best_gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    const double y = (d[i] - lo) / (hi - lo);
    if (x - y > best_gap) {
      best_gap = x - y;
      best = i;
    }
  }
  return d[best];
}

Assignment dbscan(const Matrix& points, std::optional<double> eps_opt, std::size_t min_pts) {
  if (min_pts == 0) fail(ErrorKind::Parameter, "min_pts must be at least 1");
  const std::size_t n = points.rows;
  const double eps = eps_opt ? *eps_opt : knee_eps(sorted_k_distances(points, min_pts));
  if (std::isnan(eps) || eps < 0.0) fail(ErrorKind::Parameter, "eps must be non-negative");
  const Matrix dist = pairwise_distances(points);

  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) count += dist(i, j) <= eps ? 1 : 0;
    core[i] = count >= min_pts;
  }
  std::vector<int> labels(n, kNoise);
  int next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (!core[s] || labels[s] != kNoise) continue;
    labels[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (core[j] && labels[j] == kNoise && dist(i, j) <= eps) {
          labels[j] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && dist(i, j) <= eps && dist(i, j) < best) {
        best = dist(i, j);
        labels[i] = labels[j];
      }
    }
  }
  Assignment a;
  a.labels = std::move(labels);
  a.k = static_cast<std::size_t>(next);
  a.inertia_or_score = eps;
  return a;
}

void write_assignment_csv(const std::filesystem::path& path, const Assignment& a) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "sample_id,cluster\n";
  for (std::size_t i = 0; i < a.labels.size(); ++i) out << i << ',' << a.labels[i] << '\n';
}

}  // namespace tempoproj
