#include "tempoproj/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "tempoproj/error.hpp"
#include "tempoproj/rng.hpp"

namespace tempoproj::ad {

using detail::Node;

namespace {

thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (data.size() != numel(shape)) {
    fail(ErrorKind::Shape, "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                               shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

// Builds an op result; history is kept only when some input needs gradients.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward) {
  auto node = make_leaf(std::move(shape), std::move(data), false);
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

const NodePtr& checked(const Tensor& t, const char* what) {
  if (!t.defined()) fail(ErrorKind::Shape, std::string(what) + ": undefined tensor");
  return t.node();
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorKind::Shape, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                               shape_string(t.shape()));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }
std::size_t Tensor::numel() const { return checked(*this, "numel")->data.size(); }
std::span<const double> Tensor::data() const { return checked(*this, "data")->data; }
std::span<double> Tensor::data() { return checked(*this, "data")->data; }
std::span<const double> Tensor::grad() const { return checked(*this, "grad")->grad; }
bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }
bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { checked(*this, "set_requires_grad")->requires_grad = flag; }
void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::Shape, "item() needs a single-element tensor, got " + shape_string(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end()), false); }

Graph topological_order(const Tensor& root) {
  Graph graph;
  if (!root.defined() || !root.requires_grad()) return graph;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      graph.order.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

void Tensor::backward() const {
  if (numel() != 1) fail(ErrorKind::Shape, "backward() needs a scalar root, got " + shape_string(shape()));
  if (!requires_grad()) return;
  const auto graph = topological_order(*this);
  node_->ensure_grad()[0] += 1.0;
  for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise and structural ops

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::Shape, std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                               shape_string(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = self.inputs[k];
      if (!in->requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& a_node = self.inputs[0];
    auto& b_node = self.inputs[1];
    if (a_node->requires_grad) {
      auto& g = a_node->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b_node->data[i];
    }
    if (b_node->requires_grad) {
      auto& g = b_node->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a_node->data[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto data = x.data();
  const double total = std::accumulate(data.begin(), data.end(), 0.0);
  return make_result({1}, {total}, {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    fail(ErrorKind::Shape, "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (axes.size() != rank) fail(ErrorKind::Shape, "permute: axis count does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) fail(ErrorKind::Shape, "permute: axes must be a permutation");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = in_shape[axes[d]];
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];

  // Source offset for every output element, reused by backward.
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> index(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t offset = 0;
    for (std::size_t d = 0; d < rank; ++d) offset += index[d] * in_strides[axes[d]];
    source[flat] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      if (++index[d] < out_shape[d]) break;
      index[d] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[source[i]];
  return make_result(std::move(out_shape), std::move(out), {x.node()}, [source = std::move(source)](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
  });
}

Tensor repeat_steps(const Tensor& x, std::size_t steps) {
  require_rank(x, 2, "repeat_steps");
  const std::size_t batch = x.dim(0), width = x.dim(1);
  std::vector<double> out(batch * steps * width);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(b * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>((b * steps + t) * width));
    }
  }
  return make_result({batch, steps, width}, std::move(out), {x.node()}, [batch, steps, width](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t d = 0; d < width; ++d) g[b * width + d] += self.grad[(b * steps + t) * width + d];
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  require_rank(b, 1, "linear bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out_dim) {
    fail(ErrorKind::Shape, "linear: incompatible shapes " + shape_string(x.shape()) + " x " + shape_string(w.shape()) +
                               " + " + shape_string(b.shape()));
  }
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(batch * out_dim);
  for (std::size_t r = 0; r < batch; ++r) {
    double* o = out.data() + r * out_dim;
    std::copy_n(bd, out_dim, o);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xd[r * in + i];
      const double* wrow = wd + i * out_dim;
      for (std::size_t c = 0; c < out_dim; ++c) o[c] += xv * wrow[c];
    }
  }
  return make_result({batch, out_dim}, std::move(out), {x.node(), w.node(), b.node()},
                     [batch, in, out_dim](Node& self) {
                       auto& xn = *self.inputs[0];
                       auto& wn = *self.inputs[1];
                       auto& bn = *self.inputs[2];
                       const double* go = self.grad.data();
                       if (xn.requires_grad) {
                         auto& gx = xn.ensure_grad();
                         for (std::size_t r = 0; r < batch; ++r) {
                           for (std::size_t i = 0; i < in; ++i) {
                             const double* wrow = wn.data.data() + i * out_dim;
                             const double* grow = go + r * out_dim;
                             double acc = 0.0;
                             for (std::size_t c = 0; c < out_dim; ++c) acc += grow[c] * wrow[c];
                             gx[r * in + i] += acc;
                           }
                         }
                       }
                       if (wn.requires_grad) {
                         auto& gw = wn.ensure_grad();
                         for (std::size_t r = 0; r < batch; ++r) {
                           const double* grow = go + r * out_dim;
                           for (std::size_t i = 0; i < in; ++i) {
                             const double xv = xn.data[r * in + i];
                             double* gwrow = gw.data() + i * out_dim;
                             for (std::size_t c = 0; c < out_dim; ++c) gwrow[c] += xv * grow[c];
                           }
                         }
                       }
                       if (bn.requires_grad) {
                         auto& gb = bn.ensure_grad();
                         for (std::size_t r = 0; r < batch; ++r) {
                           for (std::size_t c = 0; c < out_dim; ++c) gb[c] += go[r * out_dim + c];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Convolution, pooling, upsampling

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  const std::size_t batch = input.dim(0), channels = input.dim(1), height = input.dim(2), width = input.dim(3);
  const std::size_t filters = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != channels) {
    fail(ErrorKind::Shape, "conv2d: kernels expect " + std::to_string(kernels.dim(1)) + " channels, input has " +
                               std::to_string(channels));
  }
  if (bias.dim(0) != filters) fail(ErrorKind::Shape, "conv2d: bias length does not match filter count");
  if (kh == 0 || kw == 0) fail(ErrorKind::Shape, "conv2d: empty kernel");
  const long pad_t = static_cast<long>((kh - 1) / 2);
  const long pad_l = static_cast<long>((kw - 1) / 2);
  const long H = static_cast<long>(height), W = static_cast<long>(width);

  // im2col with the batch folded into the columns: col[(c,u,v)][(b,i,j)].
  const std::size_t hw = height * width;
  const std::size_t cols = batch * hw;
  const std::size_t depth = channels * kh * kw;
  const double* x = input.data().data();
  auto col = std::make_shared<std::vector<double>>(depth * cols, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (long u = 0; u < static_cast<long>(kh); ++u) {
      const long i_lo = std::max(0L, pad_t - u), i_hi = std::min(H, H + pad_t - u);
      for (long v = 0; v < static_cast<long>(kw); ++v) {
        const long j_lo = std::max(0L, pad_l - v), j_hi = std::min(W, W + pad_l - v);
        double* row = col->data() + ((c * kh + static_cast<std::size_t>(u)) * kw + static_cast<std::size_t>(v)) * cols;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* xc = x + (b * channels + c) * hw;
          double* dst = row + b * hw;
          for (long i = i_lo; i < i_hi; ++i) {
            for (long j = j_lo; j < j_hi; ++j) dst[i * W + j] = xc[(i + u - pad_t) * W + (j + v - pad_l)];
          }
        }
      }
    }
  }

  const double* k = kernels.data().data();
  const double* bs = bias.data().data();
  std::vector<double> out_t(filters * cols);
  for (std::size_t f = 0; f < filters; ++f) {
    double* o = out_t.data() + f * cols;
    std::fill_n(o, cols, bs[f]);
    for (std::size_t d = 0; d < depth; ++d) {
      const double kv = k[f * depth + d];
      const double* r = col->data() + d * cols;
      for (std::size_t n = 0; n < cols; ++n) o[n] += kv * r[n];
    }
  }
  std::vector<double> out(batch * filters * hw);
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(out_t.data() + f * cols + b * hw, hw, out.data() + (b * filters + f) * hw);
    }
  }

  return make_result(
      {batch, filters, height, width}, std::move(out), {input.node(), kernels.node(), bias.node()},
      [=](Node& self) {
        auto& xn = *self.inputs[0];
        auto& kn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        std::vector<double> g_t(filters * cols);
        for (std::size_t f = 0; f < filters; ++f) {
          for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(self.grad.data() + (b * filters + f) * hw, hw, g_t.data() + f * cols + b * hw);
          }
        }
        if (bn.requires_grad) {
          auto& gb = bn.ensure_grad();
          for (std::size_t f = 0; f < filters; ++f) {
            const double* g = g_t.data() + f * cols;
            gb[f] += std::accumulate(g, g + cols, 0.0);
          }
        }
        if (kn.requires_grad) {
          auto& gk = kn.ensure_grad();
          for (std::size_t f = 0; f < filters; ++f) {
            const double* g = g_t.data() + f * cols;
            for (std::size_t d = 0; d < depth; ++d) {
              const double* r = col->data() + d * cols;
              double acc = 0.0;
              for (std::size_t n = 0; n < cols; ++n) acc += g[n] * r[n];
              gk[f * depth + d] += acc;
            }
          }
        }
        if (xn.requires_grad) {
          auto& gx = xn.ensure_grad();
          std::vector<double> gcol(cols);
          for (std::size_t c = 0; c < channels; ++c) {
            for (long u = 0; u < static_cast<long>(kh); ++u) {
              const long i_lo = std::max(0L, pad_t - u), i_hi = std::min(H, H + pad_t - u);
              for (long v = 0; v < static_cast<long>(kw); ++v) {
                const long j_lo = std::max(0L, pad_l - v), j_hi = std::min(W, W + pad_l - v);
                const std::size_t d = (c * kh + static_cast<std::size_t>(u)) * kw + static_cast<std::size_t>(v);
                std::fill(gcol.begin(), gcol.end(), 0.0);
                for (std::size_t f = 0; f < filters; ++f) {
                  const double kv = kn.data[f * depth + d];
                  const double* g = g_t.data() + f * cols;
                  for (std::size_t n = 0; n < cols; ++n) gcol[n] += kv * g[n];
                }
                for (std::size_t b = 0; b < batch; ++b) {
                  double* gxc = gx.data() + (b * channels + c) * hw;
                  const double* src = gcol.data() + b * hw;
                  for (long i = i_lo; i < i_hi; ++i) {
                    for (long j = j_lo; j < j_hi; ++j) gxc[(i + u - pad_t) * W + (j + v - pad_l)] += src[i * W + j];
                  }
                }
              }
            }
          }
        }
      });
}

std::size_t pooled_extent(std::size_t extent, std::size_t pool) {
  const std::size_t eff = std::min(pool, extent);
  return eff == 0 ? 0 : (extent + eff - 1) / eff;
}

Tensor maxpool2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w) {
  require_rank(input, 4, "maxpool2d");
  if (pool_h == 0 || pool_w == 0) fail(ErrorKind::Shape, "maxpool2d: pool size must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1), height = input.dim(2), width = input.dim(3);
  const std::size_t ph = std::min(pool_h, height), pw = std::min(pool_w, width);
  const std::size_t oh = pooled_extent(height, pool_h), ow = pooled_extent(width, pool_w);
  const double* x = input.data().data();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * height * width + i * ph * width + j * pw;
        for (std::size_t u = i * ph; u < std::min(height, (i + 1) * ph); ++u) {
          for (std::size_t v = j * pw; v < std::min(width, (j + 1) * pw); ++v) {
            const std::size_t idx = p * height * width + u * width + v;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input.node()},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                     });
}

Tensor upsample2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 4, "upsample2d");
  if (pool_h == 0 || pool_w == 0) fail(ErrorKind::Shape, "upsample2d: factor must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1), height = input.dim(2), width = input.dim(3);
  if (out_h > height * pool_h || out_w > width * pool_w || out_h <= (height - 1) * pool_h ||
      out_w <= (width - 1) * pool_w) {
    fail(ErrorKind::Shape, "upsample2d: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                               " is not reachable from " + std::to_string(height) + "x" + std::to_string(width));
  }
  const double* x = input.data().data();
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        out[(p * out_h + i) * out_w + j] = x[(p * height + i / pool_h) * width + j / pool_w];
      }
    }
  }
  return make_result({input.dim(0), input.dim(1), out_h, out_w}, std::move(out), {input.node()},
                     [=](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t i = 0; i < out_h; ++i) {
                           for (std::size_t j = 0; j < out_w; ++j) {
                             g[(p * height + i / pool_h) * width + j / pool_w] +=
                                 self.grad[(p * out_h + i) * out_w + j];
                           }
                         }
                       }
                     });
}

Tensor upsample2d(const Tensor& input, std::size_t pool_h, std::size_t pool_w) {
  require_rank(input, 4, "upsample2d");
  return upsample2d(input, pool_h, pool_w, input.dim(2) * pool_h, input.dim(3) * pool_w);
}

// ---------------------------------------------------------------------------
// GRU

namespace {

Tensor gru_impl(const Tensor& input, const GruParams& p, bool sequences) {
  require_rank(input, 3, "gru input");
  const std::size_t batch = input.dim(0), steps = input.dim(1), in_dim = input.dim(2);
  if (steps == 0) fail(ErrorKind::Shape, "gru: sequence must have at least one step");
  const std::size_t hid = p.state_dim();
  for (const Tensor* w : {&p.w_z, &p.w_r, &p.w_h}) {
    if (w->shape() != Shape{in_dim, hid}) fail(ErrorKind::Shape, "gru: input weights must be [D, H]");
  }
  for (const Tensor* u : {&p.u_z, &p.u_r, &p.u_h}) {
    if (u->shape() != Shape{hid, hid}) fail(ErrorKind::Shape, "gru: recurrent weights must be [H, H]");
  }
  for (const Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) {
    if (b->shape() != Shape{hid}) fail(ErrorKind::Shape, "gru: biases must be [H]");
  }

  const double* x = input.data().data();
  const double *wz = p.w_z.data().data(), *wr = p.w_r.data().data(), *wh = p.w_h.data().data();
  const double *uz = p.u_z.data().data(), *ur = p.u_r.data().data(), *uh = p.u_h.data().data();
  const double *bz = p.b_z.data().data(), *br = p.b_r.data().data(), *bh = p.b_h.data().data();

  // Saved activations per (b, t): gates and states. states holds h_0..h_T.
  std::vector<double> z(batch * steps * hid), r(batch * steps * hid), c(batch * steps * hid);
  std::vector<double> states(batch * (steps + 1) * hid, 0.0);
  std::vector<double> az(hid), ar(hid), ac(hid), rh(hid);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* xt = x + (b * steps + t) * in_dim;
      const double* h = states.data() + (b * (steps + 1) + t) * hid;
      double* h_next = states.data() + (b * (steps + 1) + t + 1) * hid;
      std::copy_n(bz, hid, az.begin());
      std::copy_n(br, hid, ar.begin());
      std::copy_n(bh, hid, ac.begin());
      for (std::size_t d = 0; d < in_dim; ++d) {
        const double xv = xt[d];
        for (std::size_t k = 0; k < hid; ++k) {
          az[k] += xv * wz[d * hid + k];
          ar[k] += xv * wr[d * hid + k];
          ac[k] += xv * wh[d * hid + k];
        }
      }
      for (std::size_t j = 0; j < hid; ++j) {
        const double hv = h[j];
        for (std::size_t k = 0; k < hid; ++k) {
          az[k] += hv * uz[j * hid + k];
          ar[k] += hv * ur[j * hid + k];
        }
      }
      const std::size_t off = (b * steps + t) * hid;
      for (std::size_t k = 0; k < hid; ++k) {
        z[off + k] = sigmoid(az[k]);
        r[off + k] = sigmoid(ar[k]);
        rh[k] = r[off + k] * h[k];
      }
      for (std::size_t j = 0; j < hid; ++j) {
        const double v = rh[j];
        for (std::size_t k = 0; k < hid; ++k) ac[k] += v * uh[j * hid + k];
      }
      for (std::size_t k = 0; k < hid; ++k) {
        c[off + k] = std::tanh(ac[k]);
        h_next[k] = z[off + k] * h[k] + (1.0 - z[off + k]) * c[off + k];
      }
    }
  }

  std::vector<double> out;
  Shape out_shape;
  if (sequences) {
    out.resize(batch * steps * hid);
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(states.begin() + static_cast<std::ptrdiff_t>((b * (steps + 1) + 1) * hid), steps * hid,
                  out.begin() + static_cast<std::ptrdiff_t>(b * steps * hid));
    }
    out_shape = {batch, steps, hid};
  } else {
    out.resize(batch * hid);
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(states.begin() + static_cast<std::ptrdiff_t>((b * (steps + 1) + steps) * hid), hid,
                  out.begin() + static_cast<std::ptrdiff_t>(b * hid));
    }
    out_shape = {batch, hid};
  }

  auto backward = [=, z = std::move(z), r = std::move(r), c = std::move(c),
                   states = std::move(states)](Node& self) {
    auto& xn = *self.inputs[0];
    Node* params[9];
    for (std::size_t i = 0; i < 9; ++i) params[i] = self.inputs[1 + i].get();
    auto grad_of = [](Node* n) -> double* { return n->requires_grad ? n->ensure_grad().data() : nullptr; };
    double* gx = grad_of(&xn);
    double *gwz = grad_of(params[0]), *gwr = grad_of(params[1]), *gwh = grad_of(params[2]);
    double *guz = grad_of(params[3]), *gur = grad_of(params[4]), *guh = grad_of(params[5]);
    double *gbz = grad_of(params[6]), *gbr = grad_of(params[7]), *gbh = grad_of(params[8]);
    const double *wz_ = params[0]->data.data(), *wr_ = params[1]->data.data(), *wh_ = params[2]->data.data();
    const double *uz_ = params[3]->data.data(), *ur_ = params[4]->data.data(), *uh_ = params[5]->data.data();

    std::vector<double> dh(hid), dh_prev(hid), daz(hid), dar(hid), dac(hid), drh(hid), rh_t(hid);
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(dh.begin(), dh.end(), 0.0);
      if (!sequences) {
        for (std::size_t k = 0; k < hid; ++k) dh[k] = self.grad[b * hid + k];
      }
      for (std::size_t t = steps; t-- > 0;) {
        if (sequences) {
          for (std::size_t k = 0; k < hid; ++k) dh[k] += self.grad[(b * steps + t) * hid + k];
        }
        const std::size_t off = (b * steps + t) * hid;
        const double* h = states.data() + (b * (steps + 1) + t) * hid;
        const double* xt = xn.data.data() + (b * steps + t) * in_dim;
        for (std::size_t k = 0; k < hid; ++k) {
          const double zk = z[off + k], ck = c[off + k];
          dh_prev[k] = dh[k] * zk;
          const double dz = dh[k] * (h[k] - ck);
          const double dc = dh[k] * (1.0 - zk);
          daz[k] = dz * zk * (1.0 - zk);
          dac[k] = dc * (1.0 - ck * ck);
          rh_t[k] = r[off + k] * h[k];
        }
        // Candidate path: d(r*h) = dac * Uh^T.
        for (std::size_t j = 0; j < hid; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < hid; ++k) acc += dac[k] * uh_[j * hid + k];
          drh[j] = acc;
        }
        for (std::size_t k = 0; k < hid; ++k) {
          const double rk = r[off + k];
          dar[k] = drh[k] * h[k] * rk * (1.0 - rk);
          dh_prev[k] += drh[k] * rk;
        }
        for (std::size_t j = 0; j < hid; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < hid; ++k) acc += daz[k] * uz_[j * hid + k] + dar[k] * ur_[j * hid + k];
          dh_prev[j] += acc;
        }
        if (guz || gur || guh) {
          for (std::size_t j = 0; j < hid; ++j) {
            for (std::size_t k = 0; k < hid; ++k) {
              if (guz) guz[j * hid + k] += h[j] * daz[k];
              if (gur) gur[j * hid + k] += h[j] * dar[k];
              if (guh) guh[j * hid + k] += rh_t[j] * dac[k];
            }
          }
        }
        for (std::size_t d = 0; d < in_dim; ++d) {
          const double xv = xt[d];
          double acc = 0.0;
          for (std::size_t k = 0; k < hid; ++k) {
            if (gwz) gwz[d * hid + k] += xv * daz[k];
            if (gwr) gwr[d * hid + k] += xv * dar[k];
            if (gwh) gwh[d * hid + k] += xv * dac[k];
            acc += daz[k] * wz_[d * hid + k] + dar[k] * wr_[d * hid + k] + dac[k] * wh_[d * hid + k];
          }
          if (gx) gx[(b * steps + t) * in_dim + d] += acc;
        }
        for (std::size_t k = 0; k < hid; ++k) {
          if (gbz) gbz[k] += daz[k];
          if (gbr) gbr[k] += dar[k];
          if (gbh) gbh[k] += dac[k];
        }
        std::swap(dh, dh_prev);
      }
    }
  };

  return make_result(std::move(out_shape), std::move(out),
                     {input.node(), p.w_z.node(), p.w_r.node(), p.w_h.node(), p.u_z.node(), p.u_r.node(),
                      p.u_h.node(), p.b_z.node(), p.b_r.node(), p.b_h.node()},
                     std::move(backward));
}

}  // namespace

Tensor gru(const Tensor& input, const GruParams& params) { return gru_impl(input, params, false); }
Tensor gru_sequence(const Tensor& input, const GruParams& params) { return gru_impl(input, params, true); }

// ---------------------------------------------------------------------------
// Activations and loss

Tensor leaky_relu(const Tensor& x, double alpha) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : alpha * in[i];
  return make_result(x.shape(), std::move(out), {x.node()}, [alpha](Node& self) {
    auto& xn = *self.inputs[0];
    auto& g = xn.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (xn.data[i] > 0.0 ? 1.0 : alpha);
  });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_loss");
  const std::size_t n = a.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    total += d * d;
  }
  return make_result({1}, {total / static_cast<double>(n)}, {a.node(), b.node()}, [n](Node& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const double scale = 2.0 * self.grad[0] / static_cast<double>(n);
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += scale * (an.data[i] - bn.data[i]);
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (an.data[i] - bn.data[i]);
    }
  });
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(values), true);
}

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& param = params[i];
    if (!param.has_grad()) continue;
    if (state.m[i].size() != param.numel()) fail(ErrorKind::Shape, "adam: moment buffer does not match parameter");
    const auto g = param.grad();
    auto w = param.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check

double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& op, const std::vector<Tensor>& inputs,
                 double step, std::uint64_t seed) {
  Tensor weights;
  {
    NoGradGuard guard;
    const Tensor probe = op(inputs);
    Rng rng(seed);
    std::vector<double> w(probe.numel());
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    weights = Tensor(probe.shape(), std::move(w));
  }
  auto objective = [&](const std::vector<Tensor>& xs) { return sum(mul(op(xs), weights)); };

  std::vector<Tensor> params = inputs;
  for (auto& p : params) p.zero_grad();
  objective(params).backward();

  double worst = 0.0;
  for (auto& p : params) {
    if (!p.requires_grad()) continue;
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    NoGradGuard guard;
    auto values = p.data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double plus = objective(params).item();
      values[k] = saved - step;
      const double minus = objective(params).item();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace tempoproj::ad
