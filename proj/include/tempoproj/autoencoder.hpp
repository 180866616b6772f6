#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tempoproj/matrix.hpp"
#include "tempoproj/tensor.hpp"

namespace tempoproj {

struct CnnGruConfig {
  std::vector<std::size_t> filters{16, 32, 64};
  std::size_t kernel_h = 4;
  std::size_t kernel_w = 4;
  std::size_t pool_h = 5;
  std::size_t pool_w = 5;
  std::size_t latent_dim = 10;
  double lrelu_alpha = 0.1;
  double lr = 0.001;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseDaeConfig {
  std::vector<std::size_t> hidden_dims{500, 500, 2000};
  std::size_t latent_dim = 5;
  /// Corruption std as a multiple of each input feature's std; 0 disables it.
  double noise_std = 0.2;
  double lr = 0.001;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Architecture { CnnGru, DenseDae };

std::string to_string(Architecture arch);

/// Spatial extents of the CNN-GRU stages: level 0 is the input, level l the
/// output of the l-th pooling.
struct CnnGruGeometry {
  std::vector<std::size_t> heights;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> pools_h;
  std::vector<std::size_t> pools_w;
};

struct ModelParams {
  Architecture architecture = Architecture::CnnGru;
  /// (rows, cols, channels) for CNN-GRU; (features) for the dense DAE.
  std::vector<std::size_t> input_shape;
  std::variant<CnnGruConfig, DenseDaeConfig> config;
  std::map<std::string, ad::Tensor> params;

  std::size_t input_size() const;
  std::size_t latent_dim() const;
  const ad::Tensor& at(const std::string& name) const;
  std::vector<ad::Tensor> parameters() const;
};

ModelParams build_cnn_gru(std::size_t rows, std::size_t cols, std::size_t channels, const CnnGruConfig& cfg);
ModelParams build_dense_dae(std::size_t input_dim, const DenseDaeConfig& cfg);

CnnGruGeometry cnn_gru_geometry(std::size_t rows, std::size_t cols, const CnnGruConfig& cfg);

/// Encoder on a batch [B, input_size] (rows flattened in C, H, W order).
ad::Tensor encode_batch(const ModelParams& model, const ad::Tensor& batch);
/// Decoder from latent codes [B, latent_dim] back to [B, input_size].
ad::Tensor decode_batch(const ModelParams& model, const ad::Tensor& latent);

/// Minimizes reconstruction MSE with Adam; returns the per-epoch mean loss.
/// Throws ErrorKind::Divergence when the loss becomes non-finite.
std::vector<double> train(ModelParams& model, const Matrix& data);

/// N x latent_dim codes; never applies corruption noise.
Matrix encode(const ModelParams& model, const Matrix& data);
/// Encode followed by decode, N x input_size.
Matrix reconstruct(const ModelParams& model, const Matrix& data);

nlohmann::json config_to_json(const ModelParams& model);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

}  // namespace tempoproj
