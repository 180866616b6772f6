#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tempoproj {

/// One sample: V variables by T timesteps, stored row-major (variable-major).
struct TimeSeries {
  std::size_t variables = 0;
  std::size_t length = 0;
  std::vector<double> values;
  std::size_t id = 0;

  TimeSeries() = default;
  /// Validates shape and finiteness; throws Shape/Parse errors.
  TimeSeries(std::size_t variables, std::size_t length, std::vector<double> values, std::size_t id = 0);
  /// Univariate convenience constructor.
  static TimeSeries univariate(std::vector<double> values, std::size_t id = 0);

  std::span<const double> variable(std::size_t v) const { return {values.data() + v * length, length}; }
  std::span<double> variable(std::size_t v) { return {values.data() + v * length, length}; }

  bool operator==(const TimeSeries&) const = default;
};

struct Dataset {
  std::vector<TimeSeries> samples;
  std::optional<std::vector<int>> labels;
  std::optional<std::size_t> k_hint;
  std::string name;

  std::size_t size() const { return samples.size(); }
  std::size_t variables() const { return samples.empty() ? 0 : samples.front().variables; }
  bool equal_length() const;
  std::size_t max_length() const;

  /// Checks the cross-sample invariants (shared V, label count, contiguous ids).
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

enum class Delimiter { Auto, Comma, Tab };
enum class DatasetFormat { Auto, Ucr, Multivariate, Synthetic };

/// Remaps arbitrary integer class ids to dense 0-based ids, preserving order.
std::vector<int> remap_labels(std::span<const long long> raw);

Dataset load_ucr(const std::filesystem::path& path, Delimiter delimiter = Delimiter::Auto);
void save_ucr(const std::filesystem::path& path, const Dataset& ds, Delimiter delimiter = Delimiter::Tab);

/// Directory of per-sample CSVs (rows = variables) plus labels.csv
/// with `filename,label` rows. Samples are ordered by filename.
Dataset load_multivariate(const std::filesystem::path& dir);
void save_multivariate(const std::filesystem::path& dir, const Dataset& ds);

/// Per-variable z-normalization with population standard deviation.
/// Constant rows become zeros.
TimeSeries znormalize(const TimeSeries& ts);
Dataset znormalize(const Dataset& ds);

enum class Waveform { Sine, Square, Trend };

struct ClassSpec {
  Waveform waveform = Waveform::Sine;
  double noise_std = 0.0;
  /// Half-width of the uniform phase offset, in waveform periods.
  double phase_jitter = 0.0;
};

struct GeneratorSpec {
  std::vector<ClassSpec> classes;
  std::size_t n_per_class = 0;
  std::size_t length = 0;
  /// Number of periods across the series for the periodic waveforms.
  double cycles = 3.0;
  std::string name = "synthetic";
};

GeneratorSpec parse_generator_spec(const nlohmann::json& doc);
nlohmann::json to_json(const GeneratorSpec& spec);
Waveform parse_waveform(const std::string& name);

Dataset synth_generate(const GeneratorSpec& spec, std::uint64_t seed);

/// The three-class sine/square/trend set used by the desk-scale benchmark.
GeneratorSpec benchmark_generator(std::size_t n_per_class = 100, std::size_t length = 128,
                                  double noise_std = 0.1, double phase_jitter = 0.25);

/// Loads by format; Auto picks multivariate for directories, synthetic for
/// `.json` generator specs and UCR otherwise.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format = DatasetFormat::Auto,
                     std::uint64_t synth_seed = 0);
DatasetFormat parse_dataset_format(const std::string& name);

/// Content hash over shapes and values (labels excluded).
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace tempoproj
