#include "tempoproj/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tempoproj/binary_io.hpp"
#include "tempoproj/error.hpp"
#include "tempoproj/parallel.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj {

namespace fs = std::filesystem;

PivotSet select_pivots(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (p == 0) fail(ErrorKind::Parameter, "pivot count must be at least 1");
  if (p > n) fail(ErrorKind::Parameter, "pivot count " + std::to_string(p) + " exceeds sample count " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < p; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  PivotSet set;
  set.seed = seed;
  set.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p));
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

PivotSet select_pivots(const Dataset& ds, std::size_t p, std::uint64_t seed) {
  return select_pivots(ds.size(), p, seed);
}

ProjectionMatrix gen_proj_space(const Dataset& ds, const PivotSet& pivots, const MetricKind& metric) {
  ds.validate();
  const std::size_t n = ds.size();
  for (std::size_t j = 0; j < pivots.size(); ++j) {
    if (pivots.indices[j] >= n) fail(ErrorKind::Parameter, "pivot index out of range");
    if (j > 0 && pivots.indices[j] == pivots.indices[j - 1]) fail(ErrorKind::Parameter, "pivot indices must be distinct");
  }
  if (metric.tag == MetricTag::Euclidean) {
    for (std::size_t i = 0; i < n; ++i) {
      for (auto pj : pivots.indices) {
        if (ds.samples[i].length != ds.samples[pj].length) {
          fail(ErrorKind::Shape, "euclidean projection needs equal lengths: sample " + std::to_string(i) + " (T=" +
                                     std::to_string(ds.samples[i].length) + ") vs pivot sample " + std::to_string(pj) +
                                     " (T=" + std::to_string(ds.samples[pj].length) + ")");
        }
      }
    }
  }

  ProjectionMatrix pm;
  pm.samples = n;
  pm.pivots = pivots.size();
  pm.width = ds.variables();
  pm.metric = metric;
  pm.pivot_set = pivots;
  pm.values.assign(pm.samples * pm.pivots * pm.width, 0.0);
  parallel_for(n, [&](std::size_t i) {
    auto block = pm.block(i);
    for (std::size_t j = 0; j < pm.pivots; ++j) {
      const auto pj = pivots.indices[j];
      if (pj == i) continue;  // self-distance stays exactly zero
      const auto d = sample_distance(ds.samples[i], ds.samples[pj], metric);
      std::copy(d.begin(), d.end(), block.begin() + static_cast<std::ptrdiff_t>(j * pm.width));
    }
  });
  return pm;
}

ProjectionMatrix normalize_projection(const ProjectionMatrix& pm) {
  ProjectionMatrix out = pm;
  for (std::size_t i = 0; i < out.samples; ++i) {
    auto block = out.block(i);
    double norm = 0.0;
    for (double v : block) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& v : block) v /= norm;
  }
  return out;
}

namespace {

constexpr char kProjectionMagic[8] = {'T', 'P', 'P', 'R', 'O', 'J', '\0', '\0'};
constexpr std::uint32_t kProjectionVersion = 1;

}  // namespace

void save_projection(const fs::path& path, const ProjectionMatrix& pm) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(kProjectionMagic, sizeof kProjectionMagic);
    binary::write_u32(out, kProjectionVersion);
    binary::write_u64(out, pm.samples);
    binary::write_u64(out, pm.pivots);
    binary::write_u64(out, pm.width);
    binary::write_u32(out, static_cast<std::uint32_t>(pm.metric.tag));
    binary::write_u64(out, pm.pivot_set.seed);
    binary::write_i64(out, pm.metric.dtw_band ? static_cast<std::int64_t>(*pm.metric.dtw_band) : -1);
    for (auto idx : pm.pivot_set.indices) binary::write_u64(out, idx);
    binary::write_f64s(out, pm.values);
    if (!out) fail(ErrorKind::Io, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

ProjectionMatrix load_projection(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kProjectionMagic)) fail(ErrorKind::Format, path.string() + " is not a projection cache");
  const auto version = binary::read_u32(in);
  if (version != kProjectionVersion) fail(ErrorKind::Format, "unsupported projection cache version " + std::to_string(version));
  ProjectionMatrix pm;
  pm.samples = binary::read_u64(in);
  pm.pivots = binary::read_u64(in);
  pm.width = binary::read_u64(in);
  const auto tag = binary::read_u32(in);
  if (tag > static_cast<std::uint32_t>(MetricTag::Sbd)) fail(ErrorKind::Format, "unknown metric tag in projection cache");
  pm.metric.tag = static_cast<MetricTag>(tag);
  pm.pivot_set.seed = binary::read_u64(in);
  if (const auto band = binary::read_i64(in); band >= 0) pm.metric.dtw_band = static_cast<std::size_t>(band);
  if (pm.pivots > pm.samples || pm.samples * pm.pivots * pm.width > (1ULL << 34)) {
    fail(ErrorKind::Format, "projection cache header out of range");
  }
  pm.pivot_set.indices.resize(pm.pivots);
  for (auto& idx : pm.pivot_set.indices) idx = binary::read_u64(in);
  pm.values = binary::read_f64s(in, pm.samples * pm.pivots * pm.width);
  return pm;
}

std::string projection_cache_name(std::uint64_t dataset_hash, const MetricKind& metric, std::size_t p,
                                  std::uint64_t seed) {
  std::string name = "proj-" + binary::hex(dataset_hash) + "-" + to_string(metric.tag);
  if (metric.tag == MetricTag::Dtw && metric.dtw_band) name += "b" + std::to_string(*metric.dtw_band);
  return name + "-p" + std::to_string(p) + "-s" + std::to_string(seed) + ".bin";
}

CachedProjection cached_projection(const Dataset& ds, std::size_t p, std::uint64_t seed, const MetricKind& metric,
                                   const fs::path& cache_dir) {
  CachedProjection result;
  result.path = cache_dir / projection_cache_name(dataset_hash(ds), metric, p, seed);
  if (fs::exists(result.path)) {
    result.projection = load_projection(result.path);
    if (result.projection.samples == ds.size() && result.projection.pivots == p &&
        result.projection.metric == metric && result.projection.pivot_set.seed == seed) {
      result.from_cache = true;
      return result;
    }
  }
  result.projection = gen_proj_space(ds, select_pivots(ds, p, seed), metric);
  save_projection(result.path, result.projection);
  return result;
}

}  // namespace tempoproj
