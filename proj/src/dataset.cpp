#include "tempoproj/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "tempoproj/binary_io.hpp"
#include "tempoproj/error.hpp"
#include "tempoproj/matrix.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj {

namespace fs = std::filesystem;

TimeSeries::TimeSeries(std::size_t v, std::size_t t, std::vector<double> vals, std::size_t sample_id)
    : variables(v), length(t), values(std::move(vals)), id(sample_id) {
  if (variables == 0 || length == 0) fail(ErrorKind::Shape, "time series needs at least one variable and one timestep");
  if (values.size() != variables * length) fail(ErrorKind::Shape, "time series buffer does not match V x T");
  for (double x : values) {
    if (!std::isfinite(x)) fail(ErrorKind::Parse, "time series " + std::to_string(id) + " contains a non-finite value");
  }
}

TimeSeries TimeSeries::univariate(std::vector<double> vals, std::size_t sample_id) {
  const auto n = vals.size();
  return TimeSeries(1, n, std::move(vals), sample_id);
}

bool Dataset::equal_length() const {
  return std::all_of(samples.begin(), samples.end(),
                     [&](const TimeSeries& s) { return s.length == samples.front().length; });
}

std::size_t Dataset::max_length() const {
  std::size_t m = 0;
  for (const auto& s : samples) m = std::max(m, s.length);
  return m;
}

void Dataset::validate() const {
  if (samples.empty()) fail(ErrorKind::EmptyDataset, "dataset '" + name + "' has no samples");
  const auto v = samples.front().variables;
  for (const auto& s : samples) {
    if (s.variables != v) {
      fail(ErrorKind::Shape, "sample " + std::to_string(s.id) + " has " + std::to_string(s.variables) +
                                 " variables, expected " + std::to_string(v));
    }
  }
  if (labels) {
    if (labels->size() != samples.size()) fail(ErrorKind::Label, "label count does not match sample count");
    std::set<int> distinct(labels->begin(), labels->end());
    if (*distinct.begin() != 0 || *distinct.rbegin() != static_cast<int>(distinct.size()) - 1) {
      fail(ErrorKind::Label, "labels are not contiguous from 0");
    }
  }
}

std::vector<int> remap_labels(std::span<const long long> raw) {
  std::map<long long, int> ids;
  for (auto r : raw) ids.emplace(r, 0);
  int next = 0;
  for (auto& [value, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(raw.size());
  for (auto r : raw) out.push_back(ids.at(r));
  return out;
}

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.pop_back();
  std::size_t first = 0;
  while (first < s.size() && s[first] == ' ') ++first;
  return s.substr(first);
}

double parse_cell(const std::string& cell, const std::string& where) {
  std::string_view text(cell);
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::Parse, where + ": non-numeric cell '" + cell + "'");
  }
  if (!std::isfinite(value)) fail(ErrorKind::Parse, where + ": non-finite value '" + cell + "'");
  return value;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(cell);
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

void write_double(std::ostream& out, double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  out.write(buf, res.ptr - buf);
}

}  // namespace

Dataset load_ucr(const fs::path& path, Delimiter delimiter) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  Dataset ds;
  ds.name = path.stem().string();
  std::vector<long long> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  char delim = delimiter == Delimiter::Tab ? '\t' : ',';
  bool detected = delimiter != Delimiter::Auto;
  std::size_t expected_length = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!detected) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      detected = true;
    }
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    const auto cells = split(line, delim);
    if (cells.size() < 2) fail(ErrorKind::Format, where + ": expected a label followed by values");
    const double label = parse_cell(cells.front(), where);
    if (label != std::round(label)) fail(ErrorKind::Parse, where + ": class label is not an integer");
    std::vector<double> values;
    values.reserve(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_cell(cells[c], where));
    if (ds.samples.empty()) {
      expected_length = values.size();
    } else if (values.size() != expected_length) {
      fail(ErrorKind::Format, where + ": ragged row with " + std::to_string(values.size()) + " values, expected " +
                                  std::to_string(expected_length));
    }
    if (values.size() < 2) fail(ErrorKind::Format, where + ": series needs at least two timesteps");
    raw_labels.push_back(static_cast<long long>(label));
    ds.samples.push_back(TimeSeries::univariate(std::move(values), ds.samples.size()));
  }
  if (ds.samples.empty()) fail(ErrorKind::EmptyDataset, path.string() + " contains no samples");
  ds.labels = remap_labels(raw_labels);
  ds.k_hint = static_cast<std::size_t>(*std::max_element(ds.labels->begin(), ds.labels->end()) + 1);
  return ds;
}

void save_ucr(const fs::path& path, const Dataset& ds, Delimiter delimiter) {
  if (ds.variables() > 1) fail(ErrorKind::UnsupportedInput, "UCR files hold univariate series only");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  const char delim = delimiter == Delimiter::Comma ? ',' : '\t';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << (ds.labels ? (*ds.labels)[i] : 0);
    for (double v : ds.samples[i].values) {
      out << delim;
      write_double(out, v);
    }
    out << '\n';
  }
}

Dataset load_multivariate(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, dir.string() + " is not a directory");
  const auto label_path = dir / "labels.csv";
  std::map<std::string, long long> label_of;
  if (std::ifstream in(label_path); in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty()) continue;
      const auto cells = split(line, ',');
      const std::string where = "labels.csv:" + std::to_string(line_no);
      if (cells.size() != 2) fail(ErrorKind::Format, where + ": expected `filename,label`");
      const double label = parse_cell(cells[1], where);
      if (label != std::round(label)) fail(ErrorKind::Parse, where + ": class label is not an integer");
      label_of[trim(cells[0])] = static_cast<long long>(label);
    }
  } else {
    fail(ErrorKind::Label, "missing " + label_path.string());
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (entry.path().filename() == "labels.csv") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::EmptyDataset, dir.string() + " contains no sample files");

  Dataset ds;
  ds.name = dir.filename().string();
  std::vector<long long> raw_labels;
  for (const auto& file : files) {
    const auto name = file.filename().string();
    const auto it = label_of.find(name);
    if (it == label_of.end()) fail(ErrorKind::Label, "labels.csv has no entry for " + name);
    const Matrix m = read_matrix_csv(file);
    if (m.rows == 0) fail(ErrorKind::Format, name + " is empty");
    if (!ds.samples.empty() && m.rows != ds.samples.front().variables) {
      fail(ErrorKind::Shape, name + " has " + std::to_string(m.rows) + " variables, expected " +
                                 std::to_string(ds.samples.front().variables));
    }
    for (double v : m.data) {
      if (!std::isfinite(v)) fail(ErrorKind::Parse, name + " contains a non-finite value");
    }
    ds.samples.emplace_back(m.rows, m.cols, m.data, ds.samples.size());
    raw_labels.push_back(it->second);
  }
  ds.labels = remap_labels(raw_labels);
  ds.k_hint = static_cast<std::size_t>(*std::max_element(ds.labels->begin(), ds.labels->end()) + 1);
  return ds;
}

void save_multivariate(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) fail(ErrorKind::Io, "cannot write labels.csv in " + dir.string());
  const int width = static_cast<int>(std::to_string(ds.size()).size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::string index = std::to_string(i);
    const std::string name = "sample_" + std::string(width - index.size(), '0') + index + ".csv";
    const auto& s = ds.samples[i];
    write_matrix_csv(dir / name, Matrix(s.variables, s.length, s.values));
    labels << name << ',' << (ds.labels ? (*ds.labels)[i] : 0) << '\n';
  }
}

TimeSeries znormalize(const TimeSeries& ts) {
  TimeSeries out = ts;
  for (std::size_t v = 0; v < ts.variables; ++v) {
    auto row = out.variable(v);
    double mean = 0.0;
    for (double x : row) mean += x;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double x : row) var += (x - mean) * (x - mean);
    var /= static_cast<double>(row.size());
    const double sd = std::sqrt(var);
    // Rows whose spread is at rounding level are constant for our purposes.
    const bool constant = sd <= 1e-12 * std::max(1.0, std::abs(mean));
    for (double& x : row) x = constant ? 0.0 : (x - mean) / sd;
  }
  return out;
}

Dataset znormalize(const Dataset& ds) {
  Dataset out = ds;
  for (auto& s : out.samples) s = znormalize(s);
  return out;
}

Waveform parse_waveform(const std::string& name) {
  if (name == "sine") return Waveform::Sine;
  if (name == "square") return Waveform::Square;
  if (name == "trend") return Waveform::Trend;
  fail(ErrorKind::Config, "unknown waveform '" + name + "' (expected sine, square or trend)");
}

namespace {

std::string waveform_name(Waveform w) {
  switch (w) {
    case Waveform::Sine: return "sine";
    case Waveform::Square: return "square";
    case Waveform::Trend: return "trend";
  }
  return "sine";
}

}  // namespace

GeneratorSpec parse_generator_spec(const nlohmann::json& doc) {
  GeneratorSpec spec;
  try {
    for (const auto& c : doc.at("classes")) {
      ClassSpec cls;
      cls.waveform = parse_waveform(c.at("waveform").get<std::string>());
      cls.noise_std = c.value("noise_std", 0.0);
      cls.phase_jitter = c.value("phase_jitter", 0.0);
      spec.classes.push_back(cls);
    }
    spec.n_per_class = doc.at("n_per_class").get<std::size_t>();
    spec.length = doc.at("length").get<std::size_t>();
    spec.cycles = doc.value("cycles", spec.cycles);
    spec.name = doc.value("name", spec.name);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("invalid generator spec: ") + e.what());
  }
  return spec;
}

nlohmann::json to_json(const GeneratorSpec& spec) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : spec.classes) {
    classes.push_back({{"waveform", waveform_name(c.waveform)},
                       {"noise_std", c.noise_std},
                       {"phase_jitter", c.phase_jitter}});
  }
  return {{"classes", classes},
          {"n_per_class", spec.n_per_class},
          {"length", spec.length},
          {"cycles", spec.cycles},
          {"name", spec.name}};
}

Dataset synth_generate(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.classes.empty()) fail(ErrorKind::Config, "generator spec needs at least one class");
  if (spec.n_per_class < 1) fail(ErrorKind::Config, "n_per_class must be at least 1");
  if (spec.length < 8) fail(ErrorKind::Config, "length must be at least 8");
  for (const auto& c : spec.classes) {
    if (c.noise_std < 0.0 || c.phase_jitter < 0.0) fail(ErrorKind::Config, "noise_std and phase_jitter must be >= 0");
  }

  Rng rng(seed);
  Dataset ds;
  ds.name = spec.name;
  ds.labels.emplace();
  ds.k_hint = spec.classes.size();
  const double two_pi = 2.0 * std::numbers::pi;
  const auto n = static_cast<double>(spec.length);
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cls = spec.classes[c];
    for (std::size_t s = 0; s < spec.n_per_class; ++s) {
      const double phase = cls.phase_jitter > 0.0 ? rng.uniform(-cls.phase_jitter, cls.phase_jitter) : 0.0;
      std::vector<double> values(spec.length);
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double u = spec.cycles * static_cast<double>(t) / n + phase;
        double x = 0.0;
        switch (cls.waveform) {
          case Waveform::Sine: x = std::sin(two_pi * u); break;
          case Waveform::Square: x = std::sin(two_pi * u) >= 0.0 ? 1.0 : -1.0; break;
          case Waveform::Trend: x = 2.0 * u / spec.cycles - 1.0; break;
        }
        if (cls.noise_std > 0.0) x += rng.normal(0.0, cls.noise_std);
        values[t] = x;
      }
      ds.samples.push_back(TimeSeries::univariate(std::move(values), ds.samples.size()));
      ds.labels->push_back(static_cast<int>(c));
    }
  }
  return ds;
}

GeneratorSpec benchmark_generator(std::size_t n_per_class, std::size_t length, double noise_std,
                                  double phase_jitter) {
  GeneratorSpec spec;
  spec.name = "synthetic3";
  spec.n_per_class = n_per_class;
  spec.length = length;
  for (auto w : {Waveform::Sine, Waveform::Square, Waveform::Trend}) {
    spec.classes.push_back({w, noise_std, phase_jitter});
  }
  return spec;
}

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "auto") return DatasetFormat::Auto;
  if (name == "ucr") return DatasetFormat::Ucr;
  if (name == "multivariate") return DatasetFormat::Multivariate;
  if (name == "synthetic" || name == "synth") return DatasetFormat::Synthetic;
  fail(ErrorKind::Config, "unknown dataset format '" + name + "'");
}

Dataset load_dataset(const fs::path& path, DatasetFormat format, std::uint64_t synth_seed) {
  if (format == DatasetFormat::Auto) {
    if (fs::is_directory(path)) {
      format = DatasetFormat::Multivariate;
    } else if (path.extension() == ".json") {
      format = DatasetFormat::Synthetic;
    } else {
      format = DatasetFormat::Ucr;
    }
  }
  switch (format) {
    case DatasetFormat::Multivariate: return load_multivariate(path);
    case DatasetFormat::Synthetic: {
      std::ifstream in(path);
      if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, path.string() + ": " + e.what());
      }
      return synth_generate(parse_generator_spec(doc), doc.value("seed", synth_seed));
    }
    default: return load_ucr(path);
  }
}

std::uint64_t dataset_hash(const Dataset& ds) {
  binary::Fnv1a h;
  h.update_u64(ds.size());
  for (const auto& s : ds.samples) {
    h.update_u64(s.variables);
    h.update_u64(s.length);
    for (double v : s.values) h.update_f64(v);
  }
  return h.digest();
}

}  // namespace tempoproj
