#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sta {

class Tensor;
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Graph record for one tensor. Parents plus a backward rule expressed in
/// terms of Tensor ops, so that a backward pass run with grad recording
/// enabled yields a differentiable graph (double backward).
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  bool leaf = false;
  const char* op = nullptr;
  std::vector<Tensor> parents;
  // (grad_out, self) -> gradient per parent, in parent order.
  std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward_fn;
};

/// Dense 64-bit real tensor, row-major. Value-semantic handle to a shared
/// node; data is immutable once built except for leaves updated between
/// graph constructions (optimizer steps).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf with requires_grad set; the unit of trainable state.
  static Tensor leaf(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t dim(int64_t i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
  int64_t rows() const;
  int64_t cols() const;
  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->leaf; }

  const std::vector<double>& data() const { return impl_->data; }
  /// Leaves and constants only; mutating a recorded node is a logic error.
  std::vector<double>& mutable_data();
  double value() const;  // scalar tensors
  double item(int64_t flat_index) const { return impl_->data[static_cast<size_t>(flat_index)]; }

  /// Same data, detached from the graph, requires_grad = false.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }

  static Tensor wrap(std::shared_ptr<TensorImpl> impl);
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Thread-local grad recording mode (on by default).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

enum class EwOp { add, sub, mul, div, tanh, sigmoid, exp, log, neg, abs, relu, square, sin, cos };
enum class ReduceOp { sum, mean };

/// Elementwise dispatch. Binary ops broadcast scalar-with-any and
/// equal-shape only; unary ops ignore b.
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

/// Piecewise-constant helpers (zero gradient by construction).
Tensor sign(const Tensor& a);
Tensor step(const Tensor& a);  // 1 where a > 0, else 0

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Empty axes -> reduce everything to a scalar of shape [1]; otherwise the
/// reduced axes are kept with extent 1.
Tensor reduce(ReduceOp op, const Tensor& a, std::span<const int64_t> axes = {});
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_cols(const Tensor& a);   // 2-D, axis 1, keepdim: [m,n] -> [m,1]
Tensor mean_cols(const Tensor& a);  // 2-D, axis 1, keepdim

/// Expand extent-1 axes (or a scalar) to `shape`.
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t count);
Tensor tile_col(const Tensor& col, int64_t n);  // [m,1] -> [m,n]

/// clamp composed from relu, so the boundary subgradient convention matches
/// relu's (zero at the kink).
Tensor clamp(const Tensor& a, double lo, double hi);

/// d(output)/d(input) for each input, via reverse-mode sweep. Output must be
/// scalar. Inputs not reachable from output get a zero tensor. With
/// create_graph the returned tensors support a further backward pass.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph = false);
std::vector<Tensor> grad(const Tensor& output, std::initializer_list<Tensor> inputs,
                         bool create_graph = false);

/// Worker cap for matmul; also reads STA_THREADS when called with 0.
void set_num_threads(int n);
int num_threads();

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace sta
