#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tempoproj/autoencoder.hpp"
#include "tempoproj/binary_io.hpp"
#include "tempoproj/clustering.hpp"
#include "tempoproj/dataset.hpp"
#include "tempoproj/error.hpp"
#include "tempoproj/evaluation.hpp"
#include "tempoproj/matrix.hpp"
#include "tempoproj/plot.hpp"
#include "tempoproj/projection.hpp"

namespace tempoproj::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Options {
  std::string data;
  std::string format = "auto";
  std::uint64_t data_seed = 0;
  std::string metric = "sbd";
  std::size_t dtw_band = 0;
  std::size_t pivots = 16;
  std::uint64_t seed = 0;
  std::size_t runs = 10;
  std::string pipeline;
  std::string algorithm;
  std::size_t k = 0;
  std::size_t epochs = 0;
  std::string out = "runs";
  std::string sweep;
  std::string latent;
  std::string labels;
  std::string checkpoint;
  std::string title;
  bool raw_input = false;
  bool verbose = false;

  // Which optional flags were given.
  bool has_band = false, has_k = false, has_epochs = false;
};

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

Dataset load(const Options& o) {
  if (o.data.empty()) fail(ErrorKind::Config, "--data is required");
  return load_dataset(o.data, parse_dataset_format(o.format), o.data_seed);
}

MetricKind metric_of(const Options& o) {
  MetricKind m{parse_metric(o.metric), std::nullopt};
  if (o.has_band) {
    if (m.tag != MetricTag::Dtw) fail(ErrorKind::Config, "--dtw-band only applies to --metric dtw");
    m.dtw_band = o.dtw_band;
  }
  return m;
}

PipelineConfig pipeline_config(const Options& o, Pipeline fallback_pipeline) {
  PipelineConfig cfg;
  cfg.pipeline = o.pipeline.empty() ? fallback_pipeline : parse_pipeline(o.pipeline);
  if (!o.algorithm.empty()) cfg.algorithm = parse_algorithm(o.algorithm);
  cfg.metric = metric_of(o);
  if (o.pivots == 0) fail(ErrorKind::Config, "--pivots must be at least 1");
  cfg.pivots = o.pivots;
  cfg.seed = o.seed;
  if (o.has_k) {
    if (o.k == 0) fail(ErrorKind::Config, "--k must be at least 1");
    cfg.k = o.k;
  }
  if (o.has_epochs) {
    if (o.epochs == 0) fail(ErrorKind::Config, "--epochs must be at least 1");
    cfg.cnn_gru.epochs = o.epochs;
    cfg.dense_dae.epochs = o.epochs;
  }
  cfg.raw_autoencoder_input = o.raw_input;
  cfg.cache_dir = fs::path(o.out) / "cache";
  cfg.validate();
  return cfg;
}

void check_pivots(const Dataset& ds, const PipelineConfig& cfg) {
  const bool projected = cfg.pipeline == Pipeline::Pr || cfg.pipeline == Pipeline::PrLs;
  if (projected && cfg.pivots > ds.size()) {
    fail(ErrorKind::Config, "--pivots " + std::to_string(cfg.pivots) + " exceeds the " + std::to_string(ds.size()) +
                                " samples in the dataset");
  }
}

// Run directories are named by a hash of everything that determines their content.
fs::path run_dir(const Options& o, const std::string& command, const json& identity, const Dataset& ds) {
  binary::Fnv1a h;
  h.update_string(command);
  h.update_string(identity.dump());
  h.update_u64(dataset_hash(ds));
  const auto dir = fs::path(o.out) / (command + "-" + binary::hex(h.digest()));
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad pivot count '" + item + "' in --sweep-pivots");
    }
  }
  if (out.empty()) fail(ErrorKind::Config, "--sweep-pivots needs at least one value");
  return out;
}

// ---- subcommands ----

int cmd_info(const Options& o, std::ostream& out) {
  const auto ds = load(o);
  std::size_t tmin = ds.size() ? ds.samples.front().length : 0, tmax = tmin;
  for (const auto& s : ds.samples) tmin = std::min(tmin, s.length), tmax = std::max(tmax, s.length);
  out << "name: " << ds.name << '\n';
  out << "samples: " << ds.size() << '\n';
  out << "variables: " << ds.variables() << '\n';
  out << "length: " << (tmin == tmax ? std::to_string(tmin) : std::to_string(tmin) + "-" + std::to_string(tmax))
      << '\n';
  if (ds.labels) {
    std::map<int, std::size_t> counts;
    for (int l : *ds.labels) ++counts[l];
    out << "classes: " << counts.size() << " (";
    bool first = true;
    for (const auto& [label, n] : counts) {
      out << (first ? "" : ", ") << label << ":" << n;
      first = false;
    }
    out << ")\n";
  } else {
    out << "classes: unlabelled\n";
  }
  out << "hash: " << binary::hex(dataset_hash(ds)) << '\n';
  return kExitOk;
}

int cmd_project(const Options& o, std::ostream& out) {
  const auto raw = load(o);
  const auto cfg = pipeline_config(o, Pipeline::Pr);
  check_pivots(raw, cfg);
  const auto ds = cfg.znormalizes() ? znormalize(raw) : raw;
  const auto start = Clock::now();
  const auto cached = cached_projection(ds, cfg.pivots, stage_seeds(cfg.seed).pivots, cfg.metric, cfg.cache_dir);
  const auto& pm = cached.projection;
  out << (cached.from_cache ? "cached" : "computed") << ": N=" << pm.samples << " p=" << pm.pivots
      << " W=" << pm.width << " metric=" << to_string(pm.metric.tag) << " elapsed=" << fixed(since(start), 3)
      << "s\n";
  out << "cache: " << cached.path.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto ds = load(o);
  const auto cfg = pipeline_config(o, Pipeline::PrLs);
  if (cfg.pipeline != Pipeline::Ls && cfg.pipeline != Pipeline::PrLs) {
    fail(ErrorKind::Config, "train needs --pipeline ls or prls");
  }
  check_pivots(ds, cfg);
  const auto seeds = stage_seeds(cfg.seed);
  const auto start = Clock::now();
  const auto input = pipeline_input(ds, cfg);
  ModelParams model;
  if (cfg.pipeline == Pipeline::Ls) {
    auto c = cfg.dense_dae;
    c.seed = seeds.model;
    model = build_dense_dae(input.data.cols, c);
  } else {
    auto c = cfg.cnn_gru;
    c.seed = seeds.model;
    model = build_cnn_gru(input.shape[0], input.shape[1], input.shape[2], c);
  }
  const auto losses = train(model, input.data);
  const auto latent = encode(model, input.data);
  const double elapsed = since(start);

  const auto dir = run_dir(o, "train", to_json(cfg), ds);
  save_checkpoint(dir / "model.ckpt", model);
  write_loss_csv(dir / "loss.csv", losses);
  write_matrix_csv(dir / "latent.csv", latent);
  json report{{"config", to_json(cfg)},
              {"model", config_to_json(model)},
              {"pivots", input.pivots},
              {"final_loss", losses.back()},
              {"timing", {{"train_s", elapsed}}}};
  write_json(dir / "report.json", report);
  out << "trained " << to_string(model.architecture) << " epochs=" << losses.size()
      << " final_loss=" << fixed(losses.back(), 6) << " elapsed=" << fixed(elapsed, 2) << "s\n";
  out << "run: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_cluster(const Options& o, std::ostream& out) {
  const auto ds = load(o);
  const auto cfg = pipeline_config(o, Pipeline::PrLs);
  check_pivots(ds, cfg);
  const auto report = run_pipeline(ds, cfg);
  const auto dir = run_dir(o, "cluster", to_json(cfg), ds);
  write_json(dir / "report.json", to_json(report));
  write_assignment_csv(dir / "assignments.csv", report.assignment);
  out << to_string(cfg.pipeline) << "+" << to_string(cfg.algorithm) << " k=" << report.k
      << " clusters=" << report.assignment.k;
  if (report.accuracy) out << " accuracy=" << fixed(*report.accuracy);
  out << '\n' << "run: " << dir.string() << '\n';
  return kExitOk;
}

std::vector<Algorithm> algorithms_for(Pipeline p) {
  if (p == Pipeline::Os) {
    return {Algorithm::Kmeans, Algorithm::KmeansDtw, Algorithm::Kshape, Algorithm::Spectral, Algorithm::Dbscan};
  }
  return {Algorithm::Kmeans, Algorithm::Spectral, Algorithm::Dbscan};
}

int cmd_benchmark(const Options& o, std::ostream& out) {
  const auto ds = load(o);
  if (!ds.labels) fail(ErrorKind::Config, "benchmark needs a labelled dataset");
  if (o.runs == 0) fail(ErrorKind::Config, "--runs must be at least 1");

  if (!o.sweep.empty()) {
    const auto ps = parse_list(o.sweep);
    auto base = pipeline_config(o, Pipeline::PrLs);
    if (base.pipeline != Pipeline::Pr && base.pipeline != Pipeline::PrLs) {
      fail(ErrorKind::Config, "--sweep-pivots needs --pipeline pr or prls");
    }
    for (auto p : ps) {
      base.pivots = p;
      check_pivots(ds, base);
    }
    std::vector<BenchmarkResult> results;
    json identity{{"config", to_json(base)}, {"runs", o.runs}, {"sweep", ps}};
    out << "pivots,runs,mean,std\n";
    for (auto p : ps) {
      auto cfg = base;
      cfg.pivots = p;
      results.push_back(benchmark(ds, cfg, o.runs));
      out << p << ',' << o.runs << ',' << fixed(results.back().mean) << ',' << fixed(results.back().stddev) << '\n';
    }
    const auto dir = run_dir(o, "sweep", identity, ds);
    std::ofstream csv(dir / "sweep.csv");
    csv << "pivots,runs,mean,std\n";
    json all = json::array();
    for (const auto& r : results) {
      csv << r.config.pivots << ',' << o.runs << ',' << fixed(r.mean, 6) << ',' << fixed(r.stddev, 6) << '\n';
      all.push_back(to_json(r));
    }
    write_json(dir / "report.json", {{"dataset", ds.name}, {"results", all}});
    out << "run: " << dir.string() << '\n';
    return kExitOk;
  }

  std::vector<Pipeline> pipelines{Pipeline::Os, Pipeline::Ls, Pipeline::Pr, Pipeline::PrLs};
  if (!o.pipeline.empty()) pipelines = {parse_pipeline(o.pipeline)};
  const auto template_cfg = pipeline_config(o, pipelines.front());

  std::vector<PipelineConfig> cells;
  for (auto p : pipelines) {
    for (auto a : algorithms_for(p)) {
      if (!o.algorithm.empty() && a != parse_algorithm(o.algorithm)) continue;
      auto cfg = template_cfg;
      cfg.pipeline = p;
      cfg.algorithm = a;
      cfg.validate();
      check_pivots(ds, cfg);
      cells.push_back(cfg);
    }
  }
  if (cells.empty()) fail(ErrorKind::Config, "no legal (pipeline, algorithm) cell selected");

  // Baselines first so projected cells can report their improvement.
  std::map<std::pair<Pipeline, Algorithm>, double> means;
  std::vector<BenchmarkResult> results;
  json identity = json::array();
  for (const auto& cfg : cells) identity.push_back(to_json(cfg));
  for (const auto& cfg : cells) {
    std::optional<double> os, ls;
    if (cfg.pipeline == Pipeline::Pr || cfg.pipeline == Pipeline::PrLs) {
      if (auto it = means.find({Pipeline::Os, cfg.algorithm}); it != means.end()) os = it->second;
      if (auto it = means.find({Pipeline::Ls, cfg.algorithm}); it != means.end()) ls = it->second;
    }
    results.push_back(benchmark(ds, cfg, o.runs, os, ls));
    means[{cfg.pipeline, cfg.algorithm}] = results.back().mean;
    out << to_string(cfg.pipeline) << ',' << to_string(cfg.algorithm) << ": " << fixed(results.back().mean) << " +- "
        << fixed(results.back().stddev);
    if (results.back().improvement) out << " (improvement " << fixed(*results.back().improvement) << ")";
    out << '\n';
  }
  const auto dir = run_dir(o, "benchmark", {{"cells", identity}, {"runs", o.runs}}, ds);
  write_benchmark_csv(dir / "table.csv", ds.name, results);
  json all = json::array();
  for (const auto& r : results) all.push_back(to_json(r));
  write_json(dir / "report.json", {{"dataset", ds.name}, {"results", all}});
  out << "run: " << dir.string() << '\n';
  return kExitOk;
}

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.find_first_not_of("-0123456789,\r ") != std::string::npos)) continue;
    const auto comma = line.rfind(',');
    try {
      labels.push_back(std::stoi(comma == std::string::npos ? line : line.substr(comma + 1)));
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": bad label");
    }
  }
  return labels;
}

int cmd_plot(const Options& o, std::ostream& out) {
  if (o.latent.empty() == o.checkpoint.empty()) {
    fail(ErrorKind::Config, "plot needs exactly one of --latent or --checkpoint");
  }
  Matrix latent;
  std::optional<std::vector<int>> labels;
  json identity;
  std::uint64_t content = 0;
  if (!o.latent.empty()) {
    latent = read_matrix_csv(o.latent);
    binary::Fnv1a h;
    for (double v : latent.data) h.update_f64(v);
    content = h.digest();
    identity = {{"latent", o.latent}};
  } else {
    const auto ds = load(o);
    auto model = load_checkpoint(o.checkpoint);
    Options adjusted = o;
    adjusted.pipeline = model.architecture == Architecture::DenseDae ? "ls" : "prls";
    auto cfg = pipeline_config(adjusted, Pipeline::PrLs);
    check_pivots(ds, cfg);
    const auto input = pipeline_input(ds, cfg);
    if (input.data.cols != model.input_size()) {
      fail(ErrorKind::Config, "checkpoint expects " + std::to_string(model.input_size()) +
                                  " input values per sample, data gives " + std::to_string(input.data.cols) +
                                  " (check --pivots and --metric)");
    }
    latent = encode(model, input.data);
    if (ds.labels) labels = *ds.labels;
    content = dataset_hash(ds);
    identity = {{"checkpoint", o.checkpoint}, {"config", to_json(cfg)}};
  }
  if (!o.labels.empty()) labels = read_labels(o.labels);
  identity["title"] = o.title;
  identity["labelled"] = labels.has_value();

  binary::Fnv1a h;
  h.update_string(identity.dump());
  h.update_u64(content);
  const auto dir = fs::path(o.out) / ("plot-" + binary::hex(h.digest()));
  std::optional<std::span<const int>> span;
  if (labels) span = std::span<const int>(*labels);
  write_latent_plot(dir / "latent.svg", latent, span, {.title = o.title});
  out << "plot: " << (dir / "latent.svg").string() << '\n';
  return kExitOk;
}

void add_data(CLI::App* sub, Options& o, bool required = true) {
  auto* opt = sub->add_option("--data", o.data, "Dataset: UCR file, multivariate directory or generator JSON");
  if (required) opt->required();
  sub->add_option("--format", o.format, "auto, ucr, multivariate or synthetic")->capture_default_str();
  sub->add_option("--data-seed", o.data_seed, "Seed for synthetic generator specs")->capture_default_str();
}

void add_pipeline(CLI::App* sub, Options& o) {
  sub->add_option("--metric", o.metric, "euclidean, dtw or sbd")->capture_default_str();
  sub->add_option("--dtw-band", o.dtw_band, "Sakoe-Chiba band for dtw");
  sub->add_option("--pivots", o.pivots, "Pivot count")->capture_default_str();
  sub->add_option("--seed", o.seed, "Run seed")->capture_default_str();
  sub->add_option("--pipeline", o.pipeline, "os, ls, pr or prls");
  sub->add_option("--algorithm", o.algorithm, "kmeans, kmeans-dtw, kshape, spectral or dbscan");
  sub->add_option("--k", o.k, "Cluster count (default: from labels)");
  sub->add_option("--epochs", o.epochs, "Autoencoder epochs");
  sub->add_flag("--raw-input", o.raw_input, "Feed raw series to the CNN-GRU instead of projections");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Time-series clustering on pivot projections"};
  app.require_subcommand(1);
  app.add_option("--out", o.out, "Output root directory")->capture_default_str();
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");
  app.set_version_flag("--version", "tempoproj 0.1.0");

  auto* info = app.add_subcommand("info", "Describe a dataset");
  add_data(info, o);
  auto* project = app.add_subcommand("project", "Compute (or reuse) a projection cache");
  add_data(project, o);
  add_pipeline(project, o);
  auto* train = app.add_subcommand("train", "Train an autoencoder and export latents");
  add_data(train, o);
  add_pipeline(train, o);
  auto* cluster = app.add_subcommand("cluster", "Run one pipeline end to end");
  add_data(cluster, o);
  add_pipeline(cluster, o);
  auto* bench = app.add_subcommand("benchmark", "Repeated runs over pipeline and algorithm cells");
  add_data(bench, o);
  add_pipeline(bench, o);
  bench->add_option("--runs", o.runs, "Runs per cell")->capture_default_str();
  bench->add_option("--sweep-pivots", o.sweep, "Comma-separated pivot counts, e.g. 4,8,16,32");
  auto* plot = app.add_subcommand("plot", "PCA scatter of a latent matrix as SVG");
  add_data(plot, o, false);
  add_pipeline(plot, o);
  plot->add_option("--latent", o.latent, "Latent matrix CSV");
  plot->add_option("--checkpoint", o.checkpoint, "Model checkpoint, encoded against --data");
  plot->add_option("--labels", o.labels, "Label CSV (one per line or sample_id,cluster)");
  plot->add_option("--title", o.title, "Plot title");
  for (auto* sub : {project, train, cluster, bench, plot}) {
    sub->add_option("--out", o.out, "Output root directory")->capture_default_str();
  }

  std::vector<std::string> storage{"tempoproj"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::warn);

  auto given = [](CLI::App* sub, const char* name) {
    auto* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  CLI::App* active = app.get_subcommands().front();
  o.has_band = given(active, "--dtw-band");
  o.has_k = given(active, "--k");
  o.has_epochs = given(active, "--epochs");

  try {
    if (active == info) return cmd_info(o, out);
    if (active == project) return cmd_project(o, out);
    if (active == train) return cmd_train(o, out);
    if (active == cluster) return cmd_cluster(o, out);
    if (active == bench) return cmd_benchmark(o, out);
    return cmd_plot(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const bool usage = e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Parameter;
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tempoproj::cli
