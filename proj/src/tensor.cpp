#include "urdmu/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <unordered_set>

#include "urdmu/errors.hpp"

namespace urdmu {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;

  // History; empty for leaves and after reverse accumulation.
  Primitive op = Primitive::kAdd;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::size_t rows() const {
    return shape.size() == 2 ? shape[0] : 1;
  }
  std::size_t cols() const {
    if (shape.empty()) return 1;
    return shape.size() == 2 ? shape[1] : shape[0];
  }

  // Gradient slot of an input, allocated on first use.
  std::vector<double>* grad_slot() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return &grad;
  }
};

}  // namespace detail

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> data,
                                bool requires_grad) {
  if (shape.size() > 2) {
    throw ContractViolation("tensor rank must be 0, 1 or 2");
  }
  if (shape_product(shape) != data.size()) {
    throw ContractViolation("tensor data length does not match shape");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void shape_error(Primitive p, const std::string& detail) {
  throw ContractViolation(std::string(primitive_name(p)) +
                          ": shape mismatch: " + detail);
}

void require_arity(Primitive p, std::span<const Tensor> in, std::size_t n) {
  if (in.size() != n) {
    throw ContractViolation(std::string(primitive_name(p)) + ": expects " +
                            std::to_string(n) + " inputs, got " +
                            std::to_string(in.size()));
  }
  for (const auto& t : in) {
    if (!t.defined()) {
      throw ContractViolation(std::string(primitive_name(p)) +
                              ": undefined input tensor");
    }
  }
}

void require_same(Primitive p, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error(p, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

using v4d = double __attribute__((vector_size(32)));

// C[m x n] += A[m x k] * B[k x n], 4 x 8 register tiles. Each lane does the
// same multiply-then-add as the scalar loops (no FMA), so the AVX2 clone and
// the generic build produce identical bits.
__attribute__((target_clones("avx2", "default")))
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const std::size_t m4 = m - m % 4, n8 = n - n % 8;
  for (std::size_t i = 0; i < m4; i += 4) {
    const double* ablk = a + i * k;
    for (std::size_t j = 0; j < n8; j += 8) {
      v4d acc[4][2] = {};
      for (std::size_t p = 0; p < k; ++p) {
        v4d b0, b1;
        std::memcpy(&b0, b + p * n + j, sizeof b0);
        std::memcpy(&b1, b + p * n + j + 4, sizeof b1);
        for (std::size_t r = 0; r < 4; ++r) {
          const double av = ablk[r * k + p];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
        }
      }
      for (std::size_t r = 0; r < 4; ++r) {
        double* crow = c + (i + r) * n + j;
        for (std::size_t q = 0; q < 8; ++q) crow[q] += acc[r][q / 4][q % 4];
      }
    }
  }
  // Ragged right columns, then ragged bottom rows.
  for (std::size_t i = 0; i < m4; ++i) {
    for (std::size_t j = n8; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
  for (std::size_t i = m4; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

std::vector<double> transposed(const double* a, std::size_t rows,
                               std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  }
  return t;
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  const auto bt = transposed(b, k, n);
  gemm_nn(a, bt.data(), c, m, n, k);
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const auto at = transposed(a, m, k);
  gemm_nn(at.data(), b, c, k, m, n);
}

struct Forward {
  Shape shape;
  std::vector<double> data;
  std::function<void(Node&)> backward;
};

using Inputs = std::span<const Tensor>;

}  // namespace

std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kScalarMul: return "scalar_mul";
    case Primitive::kElementwiseMul: return "elementwise_mul";
    case Primitive::kRowSoftmax: return "row_softmax";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kRelu: return "relu";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kSquare: return "square";
    case Primitive::kSqrt: return "sqrt";
    case Primitive::kLayerNorm: return "layer_norm";
    case Primitive::kLinear: return "linear";
    case Primitive::kConcatLastDim: return "concat_last_dim";
    case Primitive::kReduceMean: return "reduce_mean";
    case Primitive::kReduceSum: return "reduce_sum";
    case Primitive::kSqL2NormRows: return "sq_l2_norm_rows";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kBroadcastRow: return "broadcast_row";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor handle

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }
std::size_t Tensor::rows() const { return node_->rows(); }
std::size_t Tensor::cols() const { return node_->cols(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on non-scalar tensor");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

std::uint64_t Tensor::id() const { return node_->id; }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(make_node(node_->shape, node_->data, requires_grad));
}

// ---------------------------------------------------------------------------
// Primitive forward/backward definitions

namespace {

Forward fwd_matmul(Inputs in) {
  const Tensor& a = in[0];
  const Tensor& b = in[1];
  if (a.cols() != b.rows()) {
    shape_error(Primitive::kMatmul,
                shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return {{m, n}, std::move(out), [m, k, n](Node& self) {
            auto& A = *self.inputs[0];
            auto& B = *self.inputs[1];
            if (auto* ga = A.grad_slot()) {
              gemm_nt(self.grad.data(), B.data.data(), ga->data(), m, n, k);
            }
            if (auto* gb = B.grad_slot()) {
              gemm_tn(A.data.data(), self.grad.data(), gb->data(), m, k, n);
            }
          }};
}

Forward fwd_add_sub(Inputs in, double sign, Primitive p) {
  require_same(p, in[0], in[1]);
  std::vector<double> out(in[0].data().begin(), in[0].data().end());
  const auto b = in[1].data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * b[i];
  return {in[0].shape(), std::move(out), [sign](Node& self) {
            if (auto* ga = self.inputs[0]->grad_slot()) {
              for (std::size_t i = 0; i < ga->size(); ++i)
                (*ga)[i] += self.grad[i];
            }
            if (auto* gb = self.inputs[1]->grad_slot()) {
              for (std::size_t i = 0; i < gb->size(); ++i)
                (*gb)[i] += sign * self.grad[i];
            }
          }};
}

Forward fwd_scalar_mul(Inputs in, const Attrs& at) {
  std::vector<double> out(in[0].data().begin(), in[0].data().end());
  for (double& v : out) v = at.scale * v + at.offset;
  const double s = at.scale;
  return {in[0].shape(), std::move(out), [s](Node& self) {
            if (auto* g = self.inputs[0]->grad_slot()) {
              for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += s * self.grad[i];
            }
          }};
}

Forward fwd_mul(Inputs in) {
  require_same(Primitive::kElementwiseMul, in[0], in[1]);
  std::vector<double> out(in[0].data().begin(), in[0].data().end());
  const auto b = in[1].data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return {in[0].shape(), std::move(out), [](Node& self) {
            auto& A = *self.inputs[0];
            auto& B = *self.inputs[1];
            if (auto* ga = A.grad_slot()) {
              for (std::size_t i = 0; i < ga->size(); ++i)
                (*ga)[i] += self.grad[i] * B.data[i];
            }
            if (auto* gb = B.grad_slot()) {
              for (std::size_t i = 0; i < gb->size(); ++i)
                (*gb)[i] += self.grad[i] * A.data[i];
            }
          }};
}

Forward fwd_row_softmax(Inputs in) {
  const std::size_t m = in[0].rows(), n = in[0].cols();
  std::vector<double> out(in[0].data().begin(), in[0].data().end());
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
  return {in[0].shape(), std::move(out), [m, n](Node& self) {
            auto* g = self.inputs[0]->grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < m; ++i) {
              const double* y = self.data.data() + i * n;
              const double* dy = self.grad.data() + i * n;
              double dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
              double* dx = g->data() + i * n;
              for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
            }
          }};
}

// Elementwise unary op whose derivative is expressed through (x, y).
template <typename F, typename D>
Forward fwd_unary(Inputs in, F f, D dfdx) {
  const auto x = in[0].data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return {in[0].shape(), std::move(out), [dfdx](Node& self) {
            auto& X = *self.inputs[0];
            auto* g = X.grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < g->size(); ++i)
              (*g)[i] += self.grad[i] * dfdx(X.data[i], self.data[i]);
          }};
}

Forward fwd_layer_norm(Inputs in, const Attrs& at) {
  const Tensor& x = in[0];
  const Tensor& gain = in[1];
  const Tensor& bias = in[2];
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    shape_error(Primitive::kLayerNorm, "gain/bias length " +
                                           std::to_string(gain.size()) + "/" +
                                           std::to_string(bias.size()) +
                                           " vs width " + std::to_string(n));
  }
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + at.eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gd[j] + bd[j];
    }
  }
  return {x.shape(), std::move(out),
          [m, n, xhat = std::move(xhat),
           inv_std = std::move(inv_std)](Node& self) {
            auto& X = *self.inputs[0];
            auto& G = *self.inputs[1];
            auto& B = *self.inputs[2];
            auto* gx = X.grad_slot();
            auto* gg = G.grad_slot();
            auto* gb = B.grad_slot();
            std::vector<double> dxhat(n);
            for (std::size_t i = 0; i < m; ++i) {
              const double* dy = self.grad.data() + i * n;
              const double* xh = xhat.data() + i * n;
              double sum_d = 0.0, sum_dx = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                dxhat[j] = dy[j] * G.data[j];
                sum_d += dxhat[j];
                sum_dx += dxhat[j] * xh[j];
                if (gg) (*gg)[j] += dy[j] * xh[j];
                if (gb) (*gb)[j] += dy[j];
              }
              if (gx) {
                const double scale = inv_std[i] / static_cast<double>(n);
                double* dx = gx->data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                  dx[j] += scale * (static_cast<double>(n) * dxhat[j] - sum_d -
                                    xh[j] * sum_dx);
                }
              }
            }
          }};
}

Forward fwd_linear(Inputs in) {
  const Tensor& x = in[0];
  const Tensor& w = in[1];
  const Tensor& b = in[2];
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    shape_error(Primitive::kLinear, shape_str(x.shape()) + " * " +
                                        shape_str(w.shape()) + " + " +
                                        shape_str(b.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  std::vector<double> out(m * n);
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy(bd.begin(), bd.end(), out.begin() + static_cast<long>(i * n));
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  return {{m, n}, std::move(out), [m, k, n](Node& self) {
            auto& X = *self.inputs[0];
            auto& W = *self.inputs[1];
            auto& B = *self.inputs[2];
            if (auto* gx = X.grad_slot())
              gemm_nt(self.grad.data(), W.data.data(), gx->data(), m, n, k);
            if (auto* gw = W.grad_slot())
              gemm_tn(X.data.data(), self.grad.data(), gw->data(), m, k, n);
            if (auto* gb = B.grad_slot()) {
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                  (*gb)[j] += self.grad[i * n + j];
            }
          }};
}

Forward fwd_concat(Inputs in) {
  if (in.empty()) throw ContractViolation("concat_last_dim: no inputs");
  const std::size_t m = in[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : in) {
    if (!t.defined()) throw ContractViolation("concat_last_dim: undefined input");
    if (t.rows() != m) {
      shape_error(Primitive::kConcatLastDim,
                  "row counts " + std::to_string(m) + " vs " +
                      std::to_string(t.rows()));
    }
    widths.push_back(t.cols());
    total += t.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t p = 0; p < in.size(); ++p) {
    const auto d = in[p].data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out[i * total + off + j] = d[i * widths[p] + j];
    off += widths[p];
  }
  return {{m, total}, std::move(out),
          [m, total, widths = std::move(widths)](Node& self) {
            std::size_t o = 0;
            for (std::size_t p = 0; p < self.inputs.size(); ++p) {
              if (auto* g = self.inputs[p]->grad_slot()) {
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < widths[p]; ++j)
                    (*g)[i * widths[p] + j] += self.grad[i * total + o + j];
              }
              o += widths[p];
            }
          }};
}

Forward fwd_reduce(Inputs in, const Attrs& at, bool mean) {
  const std::size_t m = in[0].rows(), n = in[0].cols();
  const auto x = in[0].data();
  const int axis = at.axis;
  Shape shape;
  std::vector<double> out;
  double scale = 1.0;
  if (axis == 0) {
    shape = {1, n};
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
    if (mean) scale = 1.0 / static_cast<double>(m);
  } else if (axis == 1) {
    shape = {m, 1};
    out.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
    if (mean) scale = 1.0 / static_cast<double>(n);
  } else if (axis == -1) {
    shape = {};
    double acc = 0.0;
    for (double v : x) acc += v;
    out = {acc};
    if (mean) scale = 1.0 / static_cast<double>(m * n);
  } else {
    throw ContractViolation("reduce: axis must be 0, 1 or -1");
  }
  for (double& v : out) v *= scale;
  return {shape, std::move(out), [m, n, axis, scale](Node& self) {
            auto* g = self.inputs[0]->grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                const double up = axis == 0   ? self.grad[j]
                                  : axis == 1 ? self.grad[i]
                                              : self.grad[0];
                (*g)[i * n + j] += scale * up;
              }
            }
          }};
}

Forward fwd_sq_l2(Inputs in) {
  const std::size_t m = in[0].rows(), n = in[0].cols();
  const auto x = in[0].data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j] * x[i * n + j];
  return {{m, 1}, std::move(out), [m, n](Node& self) {
            auto& X = *self.inputs[0];
            auto* g = X.grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                (*g)[i * n + j] += 2.0 * X.data[i * n + j] * self.grad[i];
          }};
}

Forward fwd_transpose(Inputs in) {
  const std::size_t m = in[0].rows(), n = in[0].cols();
  const auto x = in[0].data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return {{n, m}, std::move(out), [m, n](Node& self) {
            auto* g = self.inputs[0]->grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                (*g)[i * n + j] += self.grad[j * m + i];
          }};
}

Forward fwd_broadcast_row(Inputs in, const Attrs& at) {
  if (in[0].rows() != 1) {
    shape_error(Primitive::kBroadcastRow,
                "expected a single row, got " + shape_str(in[0].shape()));
  }
  const std::size_t m = at.rows, n = in[0].cols();
  if (m == 0) throw ContractViolation("broadcast_row: rows must be >= 1");
  const auto x = in[0].data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(x.begin(), x.end(), out.begin() + static_cast<long>(i * n));
  return {{m, n}, std::move(out), [m, n](Node& self) {
            auto* g = self.inputs[0]->grad_slot();
            if (!g) return;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                (*g)[j] += self.grad[i * n + j];
          }};
}

Forward dispatch(Primitive kind, Inputs in, const Attrs& at) {
  switch (kind) {
    case Primitive::kMatmul:
      require_arity(kind, in, 2);
      return fwd_matmul(in);
    case Primitive::kAdd:
      require_arity(kind, in, 2);
      return fwd_add_sub(in, 1.0, kind);
    case Primitive::kSub:
      require_arity(kind, in, 2);
      return fwd_add_sub(in, -1.0, kind);
    case Primitive::kScalarMul:
      require_arity(kind, in, 1);
      return fwd_scalar_mul(in, at);
    case Primitive::kElementwiseMul:
      require_arity(kind, in, 2);
      return fwd_mul(in);
    case Primitive::kRowSoftmax:
      require_arity(kind, in, 1);
      return fwd_row_softmax(in);
    case Primitive::kSigmoid:
      require_arity(kind, in, 1);
      return fwd_unary(
          in,
          [](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
          },
          [](double, double y) { return y * (1.0 - y); });
    case Primitive::kRelu:
      require_arity(kind, in, 1);
      return fwd_unary(
          in, [](double x) { return x > 0 ? x : 0.0; },
          [](double x, double) { return x > 0 ? 1.0 : 0.0; });
    case Primitive::kExp:
      require_arity(kind, in, 1);
      return fwd_unary(
          in, [](double x) { return std::exp(x); },
          [](double, double y) { return y; });
    case Primitive::kLog: {
      require_arity(kind, in, 1);
      const double fl = at.floor, cl = at.ceil;
      return fwd_unary(
          in, [fl, cl](double x) { return std::log(std::clamp(x, fl, cl)); },
          [fl, cl](double x, double) {
            return x > fl && x < cl ? 1.0 / x : 0.0;
          });
    }
    case Primitive::kSquare:
      require_arity(kind, in, 1);
      return fwd_unary(
          in, [](double x) { return x * x; },
          [](double x, double) { return 2.0 * x; });
    case Primitive::kSqrt:
      require_arity(kind, in, 1);
      // Subgradient 0 at the origin keeps distance losses finite when two
      // embeddings coincide.
      return fwd_unary(
          in, [](double x) { return std::sqrt(x); },
          [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
    case Primitive::kLayerNorm:
      require_arity(kind, in, 3);
      return fwd_layer_norm(in, at);
    case Primitive::kLinear:
      require_arity(kind, in, 3);
      return fwd_linear(in);
    case Primitive::kConcatLastDim:
      return fwd_concat(in);
    case Primitive::kReduceMean:
      require_arity(kind, in, 1);
      return fwd_reduce(in, at, true);
    case Primitive::kReduceSum:
      require_arity(kind, in, 1);
      return fwd_reduce(in, at, false);
    case Primitive::kSqL2NormRows:
      require_arity(kind, in, 1);
      return fwd_sq_l2(in);
    case Primitive::kTranspose:
      require_arity(kind, in, 1);
      return fwd_transpose(in);
    case Primitive::kBroadcastRow:
      require_arity(kind, in, 1);
      return fwd_broadcast_row(in, at);
  }
  throw ContractViolation("unknown primitive");
}

}  // namespace

Tensor apply_primitive(Primitive kind, std::span<const Tensor> inputs,
                       const Attrs& attrs) {
  Forward f = dispatch(kind, inputs, attrs);
  for (double v : f.data) {
    if (!std::isfinite(v)) {
      throw NumericFault(std::string(primitive_name(kind)),
                         "non-finite output from " +
                             std::string(primitive_name(kind)));
    }
  }
  bool track = false;
  for (const auto& t : inputs) track = track || t.requires_grad();
  auto node = make_node(std::move(f.shape), std::move(f.data), track);
  if (track) {
    node->op = kind;
    node->backward = std::move(f.backward);
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_);
  }
  return Tensor(std::move(node));
}

void reverse_accumulate(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractViolation("reverse_accumulate: loss must be a scalar");
  }
  Node* root = loss.node_.get();
  if (!root->requires_grad) {
    throw ContractViolation(
        "reverse_accumulate: loss has no recorded history");
  }
  // Iterative post-order DFS: `order` ends up topologically sorted (inputs
  // before consumers), each node exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  if (root->backward) {
    root->grad.assign(1, 1.0);
  } else {
    root->grad_slot()->at(0) += 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    n->backward(*n);
  }
  // Consumed history is released only after the sweep; clearing inputs
  // earlier could free nodes that are still pending. Edges are moved into
  // `released` first so no node dies while `order` still points at it.
  std::vector<std::shared_ptr<Node>> released;
  for (Node* n : order) {
    if (!n->backward) continue;
    n->backward = nullptr;
    n->grad.clear();
    n->requires_grad = false;
    for (auto& in : n->inputs) released.push_back(std::move(in));
    n->inputs.clear();
  }
}

// ---------------------------------------------------------------------------
// Wrappers

namespace {
Tensor ap1(Primitive p, const Tensor& a, const Attrs& at = {}) {
  const Tensor in[] = {a};
  return apply_primitive(p, in, at);
}
Tensor ap2(Primitive p, const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply_primitive(p, in);
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  return ap2(Primitive::kMatmul, a, b);
}
Tensor add(const Tensor& a, const Tensor& b) {
  return ap2(Primitive::kAdd, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return ap2(Primitive::kSub, a, b);
}
Tensor scalar_mul(const Tensor& a, double scale, double offset) {
  Attrs at;
  at.scale = scale;
  at.offset = offset;
  return ap1(Primitive::kScalarMul, a, at);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return ap2(Primitive::kElementwiseMul, a, b);
}
Tensor row_softmax(const Tensor& a) { return ap1(Primitive::kRowSoftmax, a); }
Tensor sigmoid(const Tensor& a) { return ap1(Primitive::kSigmoid, a); }
Tensor relu(const Tensor& a) { return ap1(Primitive::kRelu, a); }
Tensor exp(const Tensor& a) { return ap1(Primitive::kExp, a); }
Tensor log(const Tensor& a, double floor, double ceil) {
  if (!(floor <= ceil)) throw ContractViolation("log: floor exceeds ceil");
  Attrs at;
  at.floor = floor;
  at.ceil = ceil;
  return ap1(Primitive::kLog, a, at);
}
Tensor square(const Tensor& a) { return ap1(Primitive::kSquare, a); }
Tensor sqrt(const Tensor& a) { return ap1(Primitive::kSqrt, a); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  Attrs at;
  at.eps = eps;
  const Tensor in[] = {x, gain, bias};
  return apply_primitive(Primitive::kLayerNorm, in, at);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Tensor in[] = {x, weight, bias};
  return apply_primitive(Primitive::kLinear, in);
}

Tensor concat_last_dim(std::initializer_list<Tensor> parts) {
  return apply_primitive(Primitive::kConcatLastDim,
                         std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_last_dim(std::span<const Tensor> parts) {
  return apply_primitive(Primitive::kConcatLastDim, parts);
}

Tensor reduce_mean(const Tensor& a, int axis) {
  Attrs at;
  at.axis = axis;
  return ap1(Primitive::kReduceMean, a, at);
}

Tensor reduce_sum(const Tensor& a, int axis) {
  Attrs at;
  at.axis = axis;
  return ap1(Primitive::kReduceSum, a, at);
}

Tensor sq_l2_norm_rows(const Tensor& a) {
  return ap1(Primitive::kSqL2NormRows, a);
}
Tensor transpose(const Tensor& a) { return ap1(Primitive::kTranspose, a); }

Tensor broadcast_row(const Tensor& row, std::size_t rows) {
  Attrs at;
  at.rows = rows;
  return ap1(Primitive::kBroadcastRow, row, at);
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

namespace {

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

double scalar_of(const Tensor& t) {
  if (t.size() != 1) {
    throw ContractViolation("finite_diff_check: function is not scalar-valued");
  }
  return t.item();
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h) {
  if (!(h > 0)) throw ContractViolation("finite_diff_check: h must be > 0");
  Tensor xg = x.clone(true);
  Tensor loss = f(xg);
  const double base = scalar_of(loss);
  std::vector<double> analytic(x.size(), 0.0);
  if (loss.requires_grad()) {
    reverse_accumulate(loss);
    if (xg.has_grad()) analytic.assign(xg.grad().begin(), xg.grad().end());
  }
  const double again = scalar_of(f(x.detach()));
  if (std::bit_cast<std::uint64_t>(base) != std::bit_cast<std::uint64_t>(again)) {
    throw OracleFault("finite_diff_check: function is not deterministic");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x.detach();
    Tensor xm = x.detach();
    xp.mutable_data()[i] += h;
    xm.mutable_data()[i] -= h;
    const double numeric = (scalar_of(f(xp)) - scalar_of(f(xm))) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor()>& f,
                         std::span<const Tensor> params, double h,
                         std::size_t max_coords_per_param) {
  if (!(h > 0)) throw ContractViolation("finite_diff_check: h must be > 0");
  std::vector<Tensor> ps(params.begin(), params.end());
  for (auto& p : ps) p.clear_grad();
  Tensor loss = f();
  const double base = scalar_of(loss);
  if (loss.requires_grad()) reverse_accumulate(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : ps) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), 0.0);
    p.clear_grad();
  }
  const double again = scalar_of(f());
  if (std::bit_cast<std::uint64_t>(base) != std::bit_cast<std::uint64_t>(again)) {
    throw OracleFault("finite_diff_check: function is not deterministic");
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < ps.size(); ++t) {
    auto data = ps[t].mutable_data();
    std::size_t stride = 1;
    if (max_coords_per_param > 0 && data.size() > max_coords_per_param) {
      stride = (data.size() + max_coords_per_param - 1) / max_coords_per_param;
    }
    for (std::size_t i = 0; i < data.size(); i += stride) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = scalar_of(f());
      data[i] = orig - h;
      const double fm = scalar_of(f());
      data[i] = orig;
      worst = std::max(worst, rel_err(analytic[t][i], (fp - fm) / (2.0 * h)));
    }
  }
  for (auto& p : ps) p.clear_grad();
  return worst;
}

}  // namespace urdmu
