#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tempoproj {
class Rng;
}

/// Minimal reverse-mode automatic differentiation over dense double tensors,
/// limited to the layers the autoencoders use.
namespace tempoproj::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> data();
  /// Empty when no gradient has been accumulated.
  std::span<const double> grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool flag);
  void zero_grad();
  double item() const;

  /// Backpropagates from this scalar through the recorded graph.
  void backward() const;

  /// Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Nodes reachable from a root, inputs before outputs; backward walks it in reverse.
struct Graph {
  std::vector<detail::Node*> order;
};
Graph topological_order(const Tensor& root);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Elementwise and structural ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// [B, D] -> [B, T, D], copying each row to every step.
Tensor repeat_steps(const Tensor& x, std::size_t steps);

/// x [B, in] * w [in, out] + b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Stride-1 cross-correlation with "same" zero padding (extra pad on the
/// bottom/right for even kernels). input [B,C,H,W], kernels [F,C,kh,kw], bias [F].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// Non-overlapping max pooling; window clamped to the input extent and
/// ragged edges pooled over the partial window (ceil mode).
Tensor maxpool2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w);
/// Output extent of maxpool2d along one axis.
std::size_t pooled_extent(std::size_t extent, std::size_t pool);

/// Nearest-neighbour upsampling by (ph, pw), cropped to (out_h, out_w).
Tensor upsample2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w, std::size_t out_h, std::size_t out_w);
Tensor upsample2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w);

struct GruParams {
  // Input weights [D, H], recurrent weights [H, H], biases [H] for the
  // update (z), reset (r) and candidate (h) paths.
  Tensor w_z, w_r, w_h;
  Tensor u_z, u_r, u_h;
  Tensor b_z, b_r, b_h;

  std::size_t input_dim() const { return w_z.dim(0); }
  std::size_t state_dim() const { return w_z.dim(1); }
};

/// GRU over [B, T, D] from a zero state:
///   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br),
///   c = tanh(x Wh + (r*h) Uh + bh), h' = z*h + (1-z)*c.
/// Returns the final state [B, H]; gradients flow by backpropagation through time.
Tensor gru(const Tensor& input, const GruParams& params);
/// Same recurrence returning every state, [B, T, H].
Tensor gru_sequence(const Tensor& input, const GruParams& params);

Tensor leaky_relu(const Tensor& x, double alpha);
Tensor mse_loss(const Tensor& a, const Tensor& b);

/// Glorot-style uniform init, limit sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// One bias-corrected Adam update over params using their accumulated grads.
/// Parameters without a gradient are left untouched.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Central finite-difference check. The op output is reduced with fixed random
/// weights to a scalar; returns the worst |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-3) over every element of every input that
/// requires grad.
double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& op, const std::vector<Tensor>& inputs,
                 double step = 1e-5, std::uint64_t seed = 17);

}  // namespace tempoproj::ad
