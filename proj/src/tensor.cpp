#include "sta/tensor.hpp"

#include <Eigen/Core>
#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace sta {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<int> g_num_threads{0};
std::once_flag g_thread_init;

void ensure_threads() {
  std::call_once(g_thread_init, [] {
    if (g_num_threads.load() == 0) set_num_threads(0);
  });
}

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_error(const std::string& what) { throw std::invalid_argument(what); }

void check_rank2(const Tensor& t, const char* ctx) {
  if (t.rank() != 2) shape_error(std::string(ctx) + ": expected rank-2 tensor, got shape " + shape_str(t.shape()));
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

/// Build a result node. Parents and the backward rule are recorded only when
/// grad mode is on and some parent participates in differentiation.
Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> bwd) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->op = name;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p.requires_grad()) { track = true; break; }
  }
  if (track) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(bwd);
  }
  return Tensor::wrap(std::move(impl));
}

/// Collapse a gradient onto a (possibly scalar) parent shape.
Tensor reduce_to(const Tensor& g, const Shape& parent_shape) {
  if (g.shape() == parent_shape) return g;
  if (shape_numel(parent_shape) == 1) return reshape(sum(g), parent_shape);
  shape_error("reduce_to: incompatible shapes " + shape_str(g.shape()) + " vs " + shape_str(parent_shape));
}

Tensor pad_cols(const Tensor& g, int64_t start, int64_t total_cols);

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  for (int64_t d : shape)
    if (d <= 0) shape_error("tensor: non-positive dimension in " + shape_str(shape));
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    shape_error("tensor: shape " + shape_str(shape) + " does not match data length " + std::to_string(data.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return wrap(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::leaf(Shape shape, std::vector<double> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  t.impl_->leaf = true;
  return t;
}

int64_t Tensor::rows() const {
  check_rank2(*this, "rows");
  return impl_->shape[0];
}

int64_t Tensor::cols() const {
  check_rank2(*this, "cols");
  return impl_->shape[1];
}

std::vector<double>& Tensor::mutable_data() {
  if (impl_->backward_fn) throw std::logic_error("mutable_data: tensor is a recorded graph node");
  return impl_->data;
}

double Tensor::value() const {
  if (numel() != 1) shape_error("value: tensor is not scalar, shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return wrap(std::move(impl));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
GradModeGuard::GradModeGuard(bool enabled) : prev_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = prev_; }

namespace {

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 double (*f)(double, double),
                 std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> bwd,
                 bool check_divisor = false) {
  const bool as = is_scalar(a), bs = is_scalar(b);
  if (!as && !bs && a.shape() != b.shape())
    shape_error(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Shape& out_shape = as ? b.shape() : a.shape();
  const auto& ad = a.data();
  const auto& bd = b.data();
  if (check_divisor) {
    for (double x : bd)
      if (x == 0.0) throw std::domain_error("div: division by zero");
  }
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  if (as && !bs) {
    const double av = ad[0];
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(av, bd[i]);
  } else if (bs && !as) {
    const double bv = bd[0];
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bv);
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bd[i]);
  }
  return make_op(name, out_shape, std::move(out), {a, b}, std::move(bwd));
}

Tensor unary_op(const char* name, const Tensor& a, double (*f)(double),
                std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> bwd) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
  return make_op(name, a.shape(), std::move(out), {a}, std::move(bwd));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape(), sb = b.shape();
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [sa, sb](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
        return {reduce_to(g, sa), reduce_to(g, sb)};
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape(), sb = b.shape();
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [sa, sb](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
        return {reduce_to(g, sa), reduce_to(neg(g), sb)};
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape(), sb = b.shape();
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [sa, sb](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
        const auto& ps = self.impl()->parents;
        return {reduce_to(mul(g, ps[1]), sa), reduce_to(mul(g, ps[0]), sb)};
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape(), sb = b.shape();
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [sa, sb](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
        const auto& ps = self.impl()->parents;
        Tensor ga = div(g, ps[1]);
        Tensor gb = neg(div(mul(g, self), ps[1]));
        return {reduce_to(ga, sa), reduce_to(gb, sb)};
      },
      /*check_divisor=*/true);
}

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, sub(Tensor::scalar(1.0), square(self)))};
                  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, mul(self, sub(Tensor::scalar(1.0), self)))};
                  });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, self)};
                  });
}

Tensor log(const Tensor& a) {
  for (double x : a.data())
    if (x <= 0.0) throw std::domain_error("log: non-positive input");
  return unary_op("log", a, [](double x) { return std::log(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {div(g, self.impl()->parents[0])};
                  });
}

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, [](double x) { return -x; },
                  [](const Tensor& g, const Tensor&) -> std::vector<Tensor> { return {neg(g)}; });
}

Tensor abs(const Tensor& a) {
  return unary_op("abs", a, [](double x) { return std::fabs(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, sign(self.impl()->parents[0]))};
                  });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, step(self.impl()->parents[0]))};
                  });
}

Tensor square(const Tensor& a) {
  return unary_op("square", a, [](double x) { return x * x; },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, mul(Tensor::scalar(2.0), self.impl()->parents[0]))};
                  });
}

Tensor sin(const Tensor& a) {
  return unary_op("sin", a, [](double x) { return std::sin(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {mul(g, cos(self.impl()->parents[0]))};
                  });
}

Tensor cos(const Tensor& a) {
  return unary_op("cos", a, [](double x) { return std::cos(x); },
                  [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                    return {neg(mul(g, sin(self.impl()->parents[0])))};
                  });
}

Tensor sign(const Tensor& a) {
  NoGradGuard ng;  // piecewise constant: derivative is zero a.e.
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > 0.0 ? 1.0 : (ad[i] < 0.0 ? -1.0 : 0.0);
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor step(const Tensor& a) {
  NoGradGuard ng;
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > 0.0 ? 1.0 : 0.0;
  return Tensor::from_data(a.shape(), std::move(out));
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b) {
  auto need_b = [&]() -> const Tensor& {
    if (b == nullptr) shape_error("elementwise: binary op requires second operand");
    return *b;
  };
  switch (op) {
    case EwOp::add: return add(a, need_b());
    case EwOp::sub: return sub(a, need_b());
    case EwOp::mul: return mul(a, need_b());
    case EwOp::div: return div(a, need_b());
    case EwOp::tanh: return tanh(a);
    case EwOp::sigmoid: return sigmoid(a);
    case EwOp::exp: return exp(a);
    case EwOp::log: return log(a);
    case EwOp::neg: return neg(a);
    case EwOp::abs: return abs(a);
    case EwOp::relu: return relu(a);
    case EwOp::square: return square(a);
    case EwOp::sin: return sin(a);
    case EwOp::cos: return cos(a);
  }
  shape_error("elementwise: unknown op");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  ensure_threads();
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    shape_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  {
    Eigen::Map<const MatRM> am(a.data().data(), m, k);
    Eigen::Map<const MatRM> bm(b.data().data(), k, n);
    Eigen::Map<MatRM> cm(out.data(), m, n);
    cm.noalias() = am * bm;
  }
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                   const auto& ps = self.impl()->parents;
                   return {matmul(g, transpose(ps[1])), matmul(transpose(ps[0]), g)};
                 });
}

Tensor transpose(const Tensor& a) {
  check_rank2(a, "transpose");
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  {
    Eigen::Map<const MatRM> am(a.data().data(), m, n);
    Eigen::Map<MatRM> tm(out.data(), n, m);
    tm = am.transpose();
  }
  return make_op("transpose", {n, m}, std::move(out), {a},
                 [](const Tensor& g, const Tensor&) -> std::vector<Tensor> { return {transpose(g)}; });
}

namespace {

Tensor sum_impl(const Tensor& a, std::span<const int64_t> axes) {
  const Shape& in = a.shape();
  const auto& ad = a.data();
  if (axes.empty()) {
    double acc = 0.0;
    for (double x : ad) acc += x;
    Shape in_shape = in;
    return make_op("sum", {1}, {acc}, {a},
                   [in_shape](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                     return {broadcast_to(g, in_shape)};
                   });
  }
  const int64_t rank = static_cast<int64_t>(in.size());
  std::vector<bool> reduced(static_cast<size_t>(rank), false);
  for (int64_t ax : axes) {
    if (ax < 0 || ax >= rank) shape_error("reduce: axis " + std::to_string(ax) + " invalid for shape " + shape_str(in));
    reduced[static_cast<size_t>(ax)] = true;
  }
  Shape out_shape = in;
  for (int64_t i = 0; i < rank; ++i)
    if (reduced[static_cast<size_t>(i)]) out_shape[static_cast<size_t>(i)] = 1;
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)), 0.0);
  if (rank == 2 && reduced[1] && !reduced[0]) {
    const int64_t m = in[0], n = in[1];
    for (int64_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = ad.data() + i * n;
      for (int64_t j = 0; j < n; ++j) acc += row[j];
      out[static_cast<size_t>(i)] = acc;
    }
  } else if (rank == 2 && reduced[0] && !reduced[1]) {
    const int64_t m = in[0], n = in[1];
    for (int64_t i = 0; i < m; ++i) {
      const double* row = ad.data() + i * n;
      for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j)] += row[j];
    }
  } else {
    // generic strided accumulation
    std::vector<int64_t> out_stride(static_cast<size_t>(rank));
    int64_t s = 1;
    for (int64_t i = rank - 1; i >= 0; --i) {
      out_stride[static_cast<size_t>(i)] = s;
      s *= out_shape[static_cast<size_t>(i)];
    }
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    for (size_t flat = 0; flat < ad.size(); ++flat) {
      int64_t off = 0;
      for (int64_t i = 0; i < rank; ++i)
        if (!reduced[static_cast<size_t>(i)]) off += idx[static_cast<size_t>(i)] * out_stride[static_cast<size_t>(i)];
      out[static_cast<size_t>(off)] += ad[flat];
      for (int64_t i = rank - 1; i >= 0; --i) {
        if (++idx[static_cast<size_t>(i)] < in[static_cast<size_t>(i)]) break;
        idx[static_cast<size_t>(i)] = 0;
      }
    }
  }
  Shape in_shape = in;
  return make_op("sum_axes", out_shape, std::move(out), {a},
                 [in_shape](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                   return {broadcast_to(g, in_shape)};
                 });
}

}  // namespace

Tensor reduce(ReduceOp op, const Tensor& a, std::span<const int64_t> axes) {
  Tensor s = sum_impl(a, axes);
  if (op == ReduceOp::sum) return s;
  const int64_t total = a.numel() / s.numel();
  return mul(s, Tensor::scalar(1.0 / static_cast<double>(total)));
}

Tensor sum(const Tensor& a) { return reduce(ReduceOp::sum, a); }
Tensor mean(const Tensor& a) { return reduce(ReduceOp::mean, a); }

Tensor sum_cols(const Tensor& a) {
  check_rank2(a, "sum_cols");
  const int64_t ax[] = {1};
  return reduce(ReduceOp::sum, a, ax);
}

Tensor mean_cols(const Tensor& a) {
  check_rank2(a, "mean_cols");
  const int64_t ax[] = {1};
  return reduce(ReduceOp::mean, a, ax);
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const Shape& in = a.shape();
  const auto& ad = a.data();
  std::vector<double> out(static_cast<size_t>(shape_numel(shape)));
  std::vector<int64_t> bcast_axes;
  if (is_scalar(a)) {
    std::fill(out.begin(), out.end(), ad[0]);
  } else {
    if (in.size() != shape.size())
      shape_error("broadcast_to: rank mismatch " + shape_str(in) + " -> " + shape_str(shape));
    const int64_t rank = static_cast<int64_t>(in.size());
    for (int64_t i = 0; i < rank; ++i) {
      if (in[static_cast<size_t>(i)] == shape[static_cast<size_t>(i)]) continue;
      if (in[static_cast<size_t>(i)] != 1)
        shape_error("broadcast_to: cannot expand " + shape_str(in) + " -> " + shape_str(shape));
      bcast_axes.push_back(i);
    }
    if (rank == 2 && in[0] == shape[0] && in[1] == 1) {
      const int64_t m = shape[0], n = shape[1];
      for (int64_t i = 0; i < m; ++i) {
        const double v = ad[static_cast<size_t>(i)];
        double* row = out.data() + i * n;
        for (int64_t j = 0; j < n; ++j) row[j] = v;
      }
    } else if (rank == 2 && in[1] == shape[1] && in[0] == 1) {
      const int64_t m = shape[0], n = shape[1];
      for (int64_t i = 0; i < m; ++i)
        std::copy(ad.begin(), ad.end(), out.begin() + static_cast<size_t>(i * n));
    } else {
      // generic strided expansion
      const int64_t rank2 = static_cast<int64_t>(shape.size());
      std::vector<int64_t> in_stride(static_cast<size_t>(rank2));
      int64_t s = 1;
      for (int64_t i = rank2 - 1; i >= 0; --i) {
        in_stride[static_cast<size_t>(i)] = (in[static_cast<size_t>(i)] == 1) ? 0 : s;
        s *= in[static_cast<size_t>(i)];
      }
      std::vector<int64_t> idx(static_cast<size_t>(rank2), 0);
      for (size_t flat = 0; flat < out.size(); ++flat) {
        int64_t off = 0;
        for (int64_t i = 0; i < rank2; ++i) off += idx[static_cast<size_t>(i)] * in_stride[static_cast<size_t>(i)];
        out[flat] = ad[static_cast<size_t>(off)];
        for (int64_t i = rank2 - 1; i >= 0; --i) {
          if (++idx[static_cast<size_t>(i)] < shape[static_cast<size_t>(i)]) break;
          idx[static_cast<size_t>(i)] = 0;
        }
      }
    }
  }
  Shape in_shape = in;
  return make_op("broadcast_to", shape, std::move(out), {a},
                 [in_shape, bcast_axes](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                   if (shape_numel(in_shape) == 1) return {reshape(sum(g), in_shape)};
                   return {sum_impl(g, bcast_axes)};
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    shape_error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Shape in_shape = a.shape();
  return make_op("reshape", std::move(shape), a.data(), {a},
                 [in_shape](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                   return {reshape(g, in_shape)};
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) shape_error("concat_cols: no inputs");
  const int64_t m = parts[0].rows();
  int64_t total = 0;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.dim(0) != m) shape_error("concat_cols: row count mismatch");
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(m * total));
  std::vector<int64_t> offsets(parts.size());
  int64_t off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    offsets[pi] = off;
    const int64_t n = parts[pi].dim(1);
    const auto& pd = parts[pi].data();
    for (int64_t i = 0; i < m; ++i)
      std::copy(pd.begin() + i * n, pd.begin() + (i + 1) * n, out.begin() + static_cast<size_t>(i * total + off));
    off += n;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return make_op("concat_cols", {m, total}, std::move(out), std::move(parents),
                 [offsets, widths](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                   std::vector<Tensor> gs;
                   gs.reserve(offsets.size());
                   for (size_t i = 0; i < offsets.size(); ++i) gs.push_back(slice_cols(g, offsets[i], widths[i]));
                   return gs;
                 });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t count) {
  check_rank2(a, "slice_cols");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (start < 0 || count <= 0 || start + count > n)
    shape_error("slice_cols: range [" + std::to_string(start) + "," + std::to_string(start + count) +
                ") invalid for " + shape_str(a.shape()));
  std::vector<double> out(static_cast<size_t>(m * count));
  const auto& ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    std::copy(ad.begin() + i * n + start, ad.begin() + i * n + start + count,
              out.begin() + static_cast<size_t>(i * count));
  return make_op("slice_cols", {m, count}, std::move(out), {a},
                 [start, n](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                   return {pad_cols(g, start, n)};
                 });
}

namespace {

Tensor pad_cols(const Tensor& g, int64_t start, int64_t total_cols) {
  const int64_t m = g.dim(0), n = g.dim(1);
  std::vector<double> out(static_cast<size_t>(m * total_cols), 0.0);
  const auto& gd = g.data();
  for (int64_t i = 0; i < m; ++i)
    std::copy(gd.begin() + i * n, gd.begin() + (i + 1) * n, out.begin() + static_cast<size_t>(i * total_cols + start));
  return make_op("pad_cols", {m, total_cols}, std::move(out), {g},
                 [start, n](const Tensor& gg, const Tensor&) -> std::vector<Tensor> {
                   return {slice_cols(gg, start, n)};
                 });
}

}  // namespace

Tensor tile_col(const Tensor& col, int64_t n) {
  check_rank2(col, "tile_col");
  if (col.dim(1) != 1) shape_error("tile_col: expected [m,1], got " + shape_str(col.shape()));
  return broadcast_to(col, {col.dim(0), n});
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) shape_error("clamp: lo > hi");
  Tensor lo_t = Tensor::scalar(lo);
  Tensor floor = add(relu(sub(a, lo_t)), lo_t);             // max(a, lo)
  Tensor hi_t = Tensor::scalar(hi);
  return sub(hi_t, relu(sub(hi_t, floor)));                 // min(., hi)
}

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs, bool create_graph) {
  if (!output.defined() || output.numel() != 1)
    throw std::invalid_argument("grad: output must be a defined scalar tensor");

  // Reverse post-order DFS over the requires_grad subgraph: consumers first.
  std::vector<Tensor> order;
  std::unordered_map<TensorImpl*, int> state;  // 1 = on stack, 2 = done
  if (output.requires_grad()) {
    std::vector<std::pair<Tensor, size_t>> stk;
    stk.emplace_back(output, 0);
    state[output.impl()] = 1;
    while (!stk.empty()) {
      Tensor cur = stk.back().first;
      size_t& next = stk.back().second;
      TensorImpl* node = cur.impl();
      bool descended = false;
      while (next < node->parents.size()) {
        const Tensor& p = node->parents[next++];
        if (!p.requires_grad()) continue;
        auto it = state.find(p.impl());
        if (it == state.end()) {
          state[p.impl()] = 1;
          stk.emplace_back(p, 0);
          descended = true;
          break;
        }
      }
      if (!descended && next >= node->parents.size()) {
        state[node] = 2;
        order.push_back(cur);
        stk.pop_back();
      }
    }
  }

  std::unordered_map<TensorImpl*, Tensor> grads;
  if (output.requires_grad()) {
    GradModeGuard gm(create_graph);
    grads[output.impl()] = Tensor::ones(output.shape());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorImpl* node = it->impl();
      auto git = grads.find(node);
      if (git == grads.end() || !node->backward_fn) continue;
      std::vector<Tensor> pgrads = node->backward_fn(git->second, *it);
      if (pgrads.size() != node->parents.size())
        throw std::logic_error("grad: backward rule arity mismatch for op " + std::string(node->op ? node->op : "?"));
      for (size_t i = 0; i < pgrads.size(); ++i) {
        const Tensor& p = node->parents[i];
        if (!p.requires_grad() || !pgrads[i].defined()) continue;
        auto acc = grads.find(p.impl());
        if (acc == grads.end())
          grads.emplace(p.impl(), pgrads[i]);
        else
          acc->second = add(acc->second, pgrads[i]);
      }
    }
  }

  std::vector<Tensor> result;
  result.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    auto it = grads.find(in.impl());
    if (it == grads.end())
      result.push_back(Tensor::zeros(in.shape()));  // unreachable input: defined as zero
    else
      result.push_back(it->second);
  }
  return result;
}

std::vector<Tensor> grad(const Tensor& output, std::initializer_list<Tensor> inputs, bool create_graph) {
  std::vector<Tensor> v(inputs);
  return grad(output, std::span<const Tensor>(v), create_graph);
}

void set_num_threads(int n) {
  if (n <= 0) {
    if (const char* env = std::getenv("STA_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  g_num_threads.store(n);
  omp_set_num_threads(n);
  Eigen::setNbThreads(n);
}

int num_threads() {
  ensure_threads();
  return g_num_threads.load();
}

}  // namespace sta
