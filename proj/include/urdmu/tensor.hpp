#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace urdmu {

using Shape = std::vector<std::size_t>;

enum class Primitive {
  kMatmul,
  kAdd,
  kSub,
  kScalarMul,  // y = scale * x + offset
  kElementwiseMul,
  kRowSoftmax,
  kSigmoid,
  kRelu,
  kExp,
  kLog,  // argument clamped to [attrs.floor, attrs.ceil], zero gradient where clamped
  kSquare,
  kSqrt,
  kLayerNorm,
  kLinear,
  kConcatLastDim,
  kReduceMean,
  kReduceSum,
  kSqL2NormRows,
  kTranspose,
  kBroadcastRow,
};

std::string_view primitive_name(Primitive p);

struct Attrs {
  // Reduction axis: 0 collapses rows, 1 collapses columns, -1 reduces all.
  int axis = -1;
  double scale = 1.0;
  double offset = 0.0;
  double eps = 1e-5;
  double floor = 0.0;
  double ceil = std::numeric_limits<double>::infinity();
  std::size_t rows = 0;  // broadcast_row target row count
};

namespace detail {
struct Node;
}

// Dense row-major float64 array with an optional gradient slot. Tensors are
// cheap handles: copies share storage. Rank is 0, 1 or 2; a rank-1 tensor of
// length n behaves as a 1 x n row, rank 0 as 1 x 1.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Mutable access is reserved for leaves (parameters, optimizer, oracles).
  std::span<double> mutable_data();
  double operator()(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  // Identity in the computation graph; stable for the tensor's lifetime.
  std::uint64_t id() const;
  bool defined() const { return node_ != nullptr; }

  // Fresh leaf holding a copy of the values, no history.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend Tensor apply_primitive(Primitive, std::span<const Tensor>,
                                const Attrs&);
  friend void reverse_accumulate(const Tensor&);
};

// Generic entry point for every differentiable primitive. Records the
// application for reverse accumulation when any input requires grad.
// Throws ContractViolation on incompatible shapes and NumericFault when the
// output is not finite.
Tensor apply_primitive(Primitive kind, std::span<const Tensor> inputs,
                       const Attrs& attrs = {});

// Populates .grad() on every requires_grad leaf reachable from `loss`
// (accumulating into existing buffers), then releases the recorded history.
void reverse_accumulate(const Tensor& loss);

// Convenience wrappers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double scale, double offset = 0.0);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor row_softmax(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a, double floor = 0.0,
           double ceil = std::numeric_limits<double>::infinity());
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor concat_last_dim(std::initializer_list<Tensor> parts);
Tensor concat_last_dim(std::span<const Tensor> parts);
Tensor reduce_mean(const Tensor& a, int axis = -1);
Tensor reduce_sum(const Tensor& a, int axis = -1);
Tensor sq_l2_norm_rows(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor broadcast_row(const Tensor& row, std::size_t rows);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be scalar-valued and deterministic; a differing re-evaluation
// raises OracleFault.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5);

// Same oracle over a set of leaves that `f` closes over. The leaves are
// perturbed in place and restored. A nonzero `max_coords_per_param` visits an
// evenly strided subset of each leaf's coordinates.
double finite_diff_check(const std::function<Tensor()>& f,
                         std::span<const Tensor> params, double h = 1e-5,
                         std::size_t max_coords_per_param = 0);

}  // namespace urdmu
