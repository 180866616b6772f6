#include "tempoproj/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "tempoproj/binary_io.hpp"
#include "tempoproj/error.hpp"
#include "tempoproj/parallel.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj {

using ad::Shape;
using ad::Tensor;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'P', 'M', 'O', 'D', 'E', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kEncodeChunk = 256;

void require_positive(std::size_t value, const char* name) {
  if (value == 0) fail(ErrorKind::Config, std::string(name) + " must be positive");
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// h x cols matrix with orthonormal rows (cols >= h), by Gram-Schmidt on Gaussian rows.
std::vector<double> orthonormal_rows(std::size_t h, std::size_t cols, Rng& rng) {
  std::vector<double> m(h * cols);
  for (std::size_t i = 0; i < h; ++i) {
    double* row = m.data() + i * cols;
    for (;;) {
      for (std::size_t c = 0; c < cols; ++c) row[c] = rng.normal();
      for (std::size_t j = 0; j < i; ++j) {
        const double* prev = m.data() + j * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += row[c] * prev[c];
        for (std::size_t c = 0; c < cols; ++c) row[c] -= dot * prev[c];
      }
      double norm = 0.0;
      for (std::size_t c = 0; c < cols; ++c) norm += row[c] * row[c];
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t c = 0; c < cols; ++c) row[c] /= norm;
        break;
      }
    }
  }
  return m;
}

// Gate kernels share the fan of one fused d x 3h kernel; the recurrent
// weights are the three h x h blocks of an h x 3h matrix with orthonormal rows.
void add_gru(std::map<std::string, Tensor>& params, const std::string& prefix, std::size_t d, std::size_t h, Rng& rng) {
  const char* gates[] = {"z", "r", "h"};
  for (const char* gate : gates) params[prefix + ".w_" + gate] = ad::glorot_uniform({d, h}, d, 3 * h, rng);
  const auto u = orthonormal_rows(h, 3 * h, rng);
  for (std::size_t g = 0; g < 3; ++g) {
    std::vector<double> block(h * h);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j) block[i * h + j] = u[i * 3 * h + g * h + j];
    params[prefix + ".u_" + gates[g]] = Tensor({h, h}, std::move(block), true);
    params[prefix + ".b_" + gates[g]] = zeros_param({h});
  }
}

ad::GruParams gru_params(const ModelParams& m, const std::string& prefix) {
  return {m.at(prefix + ".w_z"), m.at(prefix + ".w_r"), m.at(prefix + ".w_h"),
          m.at(prefix + ".u_z"), m.at(prefix + ".u_r"), m.at(prefix + ".u_h"),
          m.at(prefix + ".b_z"), m.at(prefix + ".b_r"), m.at(prefix + ".b_h")};
}

void add_conv(std::map<std::string, Tensor>& params, const std::string& prefix, std::size_t in_ch, std::size_t out_ch,
              std::size_t kh, std::size_t kw, Rng& rng) {
  params[prefix + ".kernel"] = ad::glorot_uniform({out_ch, in_ch, kh, kw}, in_ch * kh * kw, out_ch * kh * kw, rng);
  params[prefix + ".bias"] = zeros_param({out_ch});
}

void add_dense(std::map<std::string, Tensor>& params, const std::string& prefix, std::size_t in, std::size_t out,
               Rng& rng) {
  params[prefix + ".weight"] = ad::glorot_uniform({in, out}, in, out, rng);
  params[prefix + ".bias"] = zeros_param({out});
}

std::vector<std::size_t> dae_widths(std::size_t input_dim, const DenseDaeConfig& cfg) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  widths.push_back(cfg.latent_dim);
  return widths;
}

Tensor encode_cnn_gru(const ModelParams& m, const Tensor& batch) {
  const auto& cfg = std::get<CnnGruConfig>(m.config);
  const auto geo = cnn_gru_geometry(m.input_shape[0], m.input_shape[1], cfg);
  const std::size_t b = batch.dim(0);
  Tensor x = ad::reshape(batch, {b, m.input_shape[2], m.input_shape[0], m.input_shape[1]});
  for (std::size_t l = 1; l <= cfg.filters.size(); ++l) {
    const std::string name = "enc.conv" + std::to_string(l);
    x = ad::conv2d(x, m.at(name + ".kernel"), m.at(name + ".bias"));
    x = ad::leaky_relu(x, cfg.lrelu_alpha);
    x = ad::maxpool2d(x, geo.pools_h[l - 1], geo.pools_w[l - 1]);
  }
  // Rows of the final feature map are the GRU's time steps.
  const std::size_t steps = geo.heights.back(), width = geo.widths.back(), channels = cfg.filters.back();
  x = ad::reshape(ad::permute(x, {0, 2, 1, 3}), {b, steps, channels * width});
  return ad::gru(x, gru_params(m, "enc.gru"));
}

Tensor decode_cnn_gru(const ModelParams& m, const Tensor& latent) {
  const auto& cfg = std::get<CnnGruConfig>(m.config);
  const auto geo = cnn_gru_geometry(m.input_shape[0], m.input_shape[1], cfg);
  const std::size_t b = latent.dim(0);
  const std::size_t levels = cfg.filters.size();
  const std::size_t steps = geo.heights.back(), width = geo.widths.back(), channels = cfg.filters.back();
  Tensor x = ad::gru_sequence(ad::repeat_steps(latent, steps), gru_params(m, "dec.gru"));
  x = ad::permute(ad::reshape(x, {b, steps, channels, width}), {0, 2, 1, 3});
  for (std::size_t i = 1; i <= levels; ++i) {
    const std::size_t level = levels - i;  // target extent index
    x = ad::upsample2d(x, geo.pools_h[level], geo.pools_w[level], geo.heights[level], geo.widths[level]);
    const std::string name = "dec.conv" + std::to_string(i);
    x = ad::conv2d(x, m.at(name + ".kernel"), m.at(name + ".bias"));
    if (i < levels) x = ad::leaky_relu(x, cfg.lrelu_alpha);
  }
  return ad::reshape(x, {b, m.input_size()});
}

Tensor dense_stack(const ModelParams& m, Tensor x, const std::string& prefix, std::size_t layers) {
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::string name = prefix + std::to_string(l);
    x = ad::linear(x, m.at(name + ".weight"), m.at(name + ".bias"));
    if (l < layers) x = ad::leaky_relu(x, 0.0);
  }
  return x;
}

std::size_t dae_layers(const ModelParams& m) { return std::get<DenseDaeConfig>(m.config).hidden_dims.size() + 1; }

void check_data(const ModelParams& m, const Matrix& data) {
  if (data.cols != m.input_size()) {
    fail(ErrorKind::Shape, "model expects " + std::to_string(m.input_size()) + " features per sample, got " +
                               std::to_string(data.cols));
  }
}

Tensor rows_tensor(const Matrix& data, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  std::vector<double> values;
  values.reserve((end - begin) * data.cols);
  for (std::size_t i = begin; i < end; ++i) {
    const auto row = data.row(order[i]);
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({end - begin, data.cols}, std::move(values));
}

template <typename Fn>
Matrix map_chunks(const Matrix& data, std::size_t out_cols, Fn&& fn) {
  Matrix out(data.rows, out_cols);
  const std::size_t chunks = (data.rows + kEncodeChunk - 1) / kEncodeChunk;
  std::vector<std::size_t> identity(data.rows);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const std::size_t begin = c * kEncodeChunk, end = std::min(data.rows, begin + kEncodeChunk);
    const Tensor y = fn(rows_tensor(data, identity, begin, end));
    std::copy(y.data().begin(), y.data().end(), out.data.begin() + static_cast<std::ptrdiff_t>(begin * out_cols));
  });
  return out;
}

json cnn_config_json(const CnnGruConfig& c) {
  return {{"filters", c.filters}, {"kernel", {c.kernel_h, c.kernel_w}}, {"pool", {c.pool_h, c.pool_w}},
          {"latent_dim", c.latent_dim}, {"lrelu_alpha", c.lrelu_alpha}, {"lr", c.lr},
          {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"seed", c.seed}};
}

json dae_config_json(const DenseDaeConfig& c) {
  return {{"hidden_dims", c.hidden_dims}, {"latent_dim", c.latent_dim}, {"noise_std", c.noise_std},
          {"lr", c.lr}, {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"seed", c.seed}};
}

ModelParams model_from_header(const json& header) {
  const std::string arch = header.at("architecture").get<std::string>();
  const auto shape = header.at("input_shape").get<std::vector<std::size_t>>();
  const json& c = header.at("config");
  if (arch == "cnn_gru") {
    if (shape.size() != 3) fail(ErrorKind::Format, "checkpoint: cnn_gru input shape needs 3 entries");
    CnnGruConfig cfg;
    cfg.filters = c.at("filters").get<std::vector<std::size_t>>();
    const auto kernel = c.at("kernel").get<std::vector<std::size_t>>();
    const auto pool = c.at("pool").get<std::vector<std::size_t>>();
    if (kernel.size() != 2 || pool.size() != 2) fail(ErrorKind::Format, "checkpoint: kernel and pool need 2 entries");
    cfg.kernel_h = kernel[0];
    cfg.kernel_w = kernel[1];
    cfg.pool_h = pool[0];
    cfg.pool_w = pool[1];
    cfg.latent_dim = c.at("latent_dim").get<std::size_t>();
    cfg.lrelu_alpha = c.at("lrelu_alpha").get<double>();
    cfg.lr = c.at("lr").get<double>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    return build_cnn_gru(shape[0], shape[1], shape[2], cfg);
  }
  if (arch == "dense_dae") {
    if (shape.size() != 1) fail(ErrorKind::Format, "checkpoint: dense_dae input shape needs 1 entry");
    DenseDaeConfig cfg;
    cfg.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    cfg.latent_dim = c.at("latent_dim").get<std::size_t>();
    cfg.noise_std = c.at("noise_std").get<double>();
    cfg.lr = c.at("lr").get<double>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    return build_dense_dae(shape[0], cfg);
  }
  fail(ErrorKind::Format, "checkpoint: unknown architecture '" + arch + "'");
}

}  // namespace

void CnnGruConfig::validate() const {
  if (filters.empty()) fail(ErrorKind::Config, "filters must not be empty");
  for (auto f : filters) require_positive(f, "filter count");
  require_positive(kernel_h, "kernel height");
  require_positive(kernel_w, "kernel width");
  require_positive(pool_h, "pool height");
  require_positive(pool_w, "pool width");
  require_positive(latent_dim, "latent_dim");
  require_positive(batch_size, "batch_size");
  if (!(lr > 0.0)) fail(ErrorKind::Config, "lr must be positive");
  if (!(lrelu_alpha >= 0.0)) fail(ErrorKind::Config, "lrelu_alpha must be non-negative");
}

void DenseDaeConfig::validate() const {
  for (auto h : hidden_dims) require_positive(h, "hidden width");
  require_positive(latent_dim, "latent_dim");
  require_positive(batch_size, "batch_size");
  if (!(lr > 0.0)) fail(ErrorKind::Config, "lr must be positive");
  if (!(noise_std >= 0.0)) fail(ErrorKind::Config, "noise_std must be non-negative");
}

std::string to_string(Architecture arch) { return arch == Architecture::CnnGru ? "cnn_gru" : "dense_dae"; }

std::size_t ModelParams::input_size() const {
  std::size_t n = 1;
  for (auto d : input_shape) n *= d;
  return n;
}

std::size_t ModelParams::latent_dim() const {
  return std::visit([](const auto& c) { return c.latent_dim; }, config);
}

const Tensor& ModelParams::at(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) fail(ErrorKind::Config, "model has no parameter '" + name + "'");
  return it->second;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

CnnGruGeometry cnn_gru_geometry(std::size_t rows, std::size_t cols, const CnnGruConfig& cfg) {
  CnnGruGeometry g;
  g.heights.push_back(rows);
  g.widths.push_back(cols);
  for (std::size_t l = 0; l < cfg.filters.size(); ++l) {
    const std::size_t h = g.heights.back(), w = g.widths.back();
    if (h == 0 || w == 0) {
      fail(ErrorKind::Config, "layer conv" + std::to_string(l + 1) + " receives an empty " + std::to_string(h) + "x" +
                                  std::to_string(w) + " map");
    }
    g.pools_h.push_back(std::min(cfg.pool_h, h));
    g.pools_w.push_back(std::min(cfg.pool_w, w));
    g.heights.push_back(ad::pooled_extent(h, g.pools_h.back()));
    g.widths.push_back(ad::pooled_extent(w, g.pools_w.back()));
  }
  return g;
}

ModelParams build_cnn_gru(std::size_t rows, std::size_t cols, std::size_t channels, const CnnGruConfig& cfg) {
  cfg.validate();
  if (channels == 0) fail(ErrorKind::Config, "input needs at least one channel");
  const auto geo = cnn_gru_geometry(rows, cols, cfg);
  ModelParams m;
  m.architecture = Architecture::CnnGru;
  m.input_shape = {rows, cols, channels};
  m.config = cfg;

  Rng rng(Rng::mix(cfg.seed, 0));
  const std::size_t levels = cfg.filters.size();
  std::size_t in_ch = channels;
  for (std::size_t l = 0; l < levels; ++l) {
    add_conv(m.params, "enc.conv" + std::to_string(l + 1), in_ch, cfg.filters[l], std::min(cfg.kernel_h, geo.heights[l]),
             std::min(cfg.kernel_w, geo.widths[l]), rng);
    in_ch = cfg.filters[l];
  }
  const std::size_t seq_width = cfg.filters.back() * geo.widths.back();
  add_gru(m.params, "enc.gru", seq_width, cfg.latent_dim, rng);
  add_gru(m.params, "dec.gru", cfg.latent_dim, seq_width, rng);
  for (std::size_t i = 1; i <= levels; ++i) {
    const std::size_t level = levels - i;
    const std::size_t out_ch = level == 0 ? channels : cfg.filters[level - 1];
    add_conv(m.params, "dec.conv" + std::to_string(i), cfg.filters[level], out_ch,
             std::min(cfg.kernel_h, geo.heights[level]), std::min(cfg.kernel_w, geo.widths[level]), rng);
  }
  return m;
}

ModelParams build_dense_dae(std::size_t input_dim, const DenseDaeConfig& cfg) {
  cfg.validate();
  if (input_dim == 0) fail(ErrorKind::Config, "input_dim must be positive");
  ModelParams m;
  m.architecture = Architecture::DenseDae;
  m.input_shape = {input_dim};
  m.config = cfg;
  Rng rng(Rng::mix(cfg.seed, 0));
  const auto widths = dae_widths(input_dim, cfg);
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    add_dense(m.params, "enc.dense" + std::to_string(l + 1), widths[l], widths[l + 1], rng);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    add_dense(m.params, "dec.dense" + std::to_string(l + 1), widths[layers - l], widths[layers - l - 1], rng);
  }
  return m;
}

Tensor encode_batch(const ModelParams& model, const Tensor& batch) {
  if (batch.rank() != 2 || batch.dim(1) != model.input_size()) {
    fail(ErrorKind::Shape, "encoder expects [B, " + std::to_string(model.input_size()) + "], got " +
                               ad::shape_string(batch.shape()));
  }
  if (model.architecture == Architecture::CnnGru) return encode_cnn_gru(model, batch);
  return dense_stack(model, batch, "enc.dense", dae_layers(model));
}

Tensor decode_batch(const ModelParams& model, const Tensor& latent) {
  if (latent.rank() != 2 || latent.dim(1) != model.latent_dim()) {
    fail(ErrorKind::Shape, "decoder expects [B, " + std::to_string(model.latent_dim()) + "], got " +
                               ad::shape_string(latent.shape()));
  }
  if (model.architecture == Architecture::CnnGru) return decode_cnn_gru(model, latent);
  return dense_stack(model, latent, "dec.dense", dae_layers(model));
}

std::vector<double> train(ModelParams& model, const Matrix& data) {
  check_data(model, data);
  if (data.rows == 0) fail(ErrorKind::EmptyDataset, "no samples to train on");
  const auto [lr, batch_cfg, epochs, seed] = std::visit(
      [](const auto& c) { return std::tuple{c.lr, c.batch_size, c.epochs, c.seed}; }, model.config);
  const std::size_t n = data.rows, d = data.cols;
  const std::size_t batch_size = std::min(batch_cfg, n);

  std::vector<double> noise_scale;
  if (const auto* dae = std::get_if<DenseDaeConfig>(&model.config); dae && dae->noise_std > 0.0) {
    noise_scale.assign(d, 0.0);
    for (std::size_t f = 0; f < d; ++f) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += data(i, f);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) sq += (data(i, f) - mean) * (data(i, f) - mean);
      noise_scale[f] = dae->noise_std * std::sqrt(sq / static_cast<double>(n));
    }
  }

  auto params = model.parameters();
  ad::AdamState adam;
  adam.lr = lr;
  Rng rng(Rng::mix(seed, 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  history.reserve(epochs);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t end = std::min(n, begin + batch_size);
      const Tensor target = rows_tensor(data, order, begin, end);
      Tensor input = target;
      if (!noise_scale.empty()) {
        std::vector<double> noisy(target.data().begin(), target.data().end());
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += noise_scale[i % d] * rng.normal();
        input = Tensor(target.shape(), std::move(noisy));
      }
      for (auto& p : params) p.zero_grad();
      const Tensor loss = ad::mse_loss(decode_batch(model, encode_batch(model, input)), target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                                        std::to_string(value) + ")");
      }
      loss.backward();
      ad::adam_step(params, adam);
      total += value * static_cast<double>(end - begin);
    }
    history.push_back(total / static_cast<double>(n));
    spdlog::debug("epoch {} mean loss {:.6g}", epoch + 1, history.back());
  }
  return history;
}

Matrix encode(const ModelParams& model, const Matrix& data) {
  check_data(model, data);
  return map_chunks(data, model.latent_dim(), [&](const Tensor& x) { return encode_batch(model, x); });
}

Matrix reconstruct(const ModelParams& model, const Matrix& data) {
  check_data(model, data);
  return map_chunks(data, model.input_size(),
                    [&](const Tensor& x) { return decode_batch(model, encode_batch(model, x)); });
}

json config_to_json(const ModelParams& model) {
  json cfg = std::visit(
      [](const auto& c) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, CnnGruConfig>) {
          return cnn_config_json(c);
        } else {
          return dae_config_json(c);
        }
      },
      model.config);
  return {{"architecture", to_string(model.architecture)}, {"input_shape", model.input_shape}, {"config", cfg}};
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    binary::write_u32(out, kVersion);
    binary::write_string(out, config_to_json(model).dump());
    binary::write_u64(out, model.params.size());
    for (const auto& [name, t] : model.params) {
      binary::write_string(out, name);
      binary::write_u64(out, t.rank());
      for (auto dim : t.shape()) binary::write_u64(out, dim);
      binary::write_f64s(out, t.data());
    }
    if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kMagic)) fail(ErrorKind::Format, "not a checkpoint: " + path.string());
  const auto version = binary::read_u32(in);
  if (version != kVersion) fail(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  json header;
  try {
    header = json::parse(binary::read_string(in));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  ModelParams model;
  try {
    model = model_from_header(header);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  const auto count = binary::read_u64(in);
  if (count != model.params.size()) fail(ErrorKind::Format, "checkpoint parameter count mismatch");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = binary::read_string(in);
    const auto it = model.params.find(name);
    if (it == model.params.end()) fail(ErrorKind::Format, "checkpoint has unknown parameter '" + name + "'");
    const auto rank = binary::read_u64(in);
    Shape shape;
    for (std::uint64_t r = 0; r < rank && r < 8; ++r) shape.push_back(binary::read_u64(in));
    if (shape != it->second.shape()) {
      fail(ErrorKind::Format, "checkpoint parameter '" + name + "' has shape " + ad::shape_string(shape));
    }
    const auto values = binary::read_f64s(in, it->second.numel());
    std::copy(values.begin(), values.end(), it->second.data().begin());
  }
  return model;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e + 1 << ',' << losses[e] << '\n';
}

}  // namespace tempoproj
