#include "seqinf/tensor.h"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "seqinf/errors.h"

namespace seqinf {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local Tape* g_current_tape = nullptr;
std::atomic<Precision> g_precision{Precision::kSingle};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(a.shape()));
  }
}

// Applies a unary elementwise function; `deriv(x, y)` is dy/dx.
template <typename F, typename D>
Tensor unary_op(const Tensor& a, F f, D deriv) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op(a.shape(), std::move(out), {a}, [deriv](TensorNode& self) {
    double* ga = self.input_grad(0);
    if (!ga) return;
    const auto& x = self.input_value(0);
    for (size_t i = 0; i < x.size(); ++i) {
      ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
    }
  });
}

// Iteration plan for an axis reduction over a rank-1 or rank-2 tensor:
// `groups` independent slices of `len` entries each, slice g starting at
// offset(g) with stride `stride`.
struct AxisPlan {
  int groups;
  int len;
  int stride;
  int group_step;
  size_t offset(int g) const { return static_cast<size_t>(g) * group_step; }
};

AxisPlan axis_plan(const Tensor& a, int axis, const char* op) {
  if (a.rank() == 1 && axis == 0) return {1, a.dim(0), 1, 0};
  if (a.rank() == 2 && axis == 1) return {a.dim(0), a.dim(1), 1, a.dim(1)};
  if (a.rank() == 2 && axis == 0) return {a.dim(1), a.dim(0), a.dim(1), 1};
  throw ShapeError(std::string(op) + ": unsupported axis " + std::to_string(axis) +
                   " for shape " + shape_string(a.shape()));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

size_t shape_size(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

double round_param(double v) {
  if (precision() == Precision::kSingle) return static_cast<double>(static_cast<float>(v));
  return v;
}

// --- Tensor -------------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor data size " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.mutable_data()[static_cast<size_t>(i) * n + i] = 1.0;
  return t;
}

int Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return dim(0);
  throw ShapeError("matrix view of tensor with shape " + shape_string(shape()));
}

int Tensor::cols() const {
  if (rank() == 1) return dim(0);
  if (rank() == 2) return dim(1);
  throw ShapeError("matrix view of tensor with shape " + shape_string(shape()));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return node_->value[0];
}

void Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  if (flag && node_->grad.size() != node_->value.size()) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(shape(), node_->value, requires_grad);
}

// --- Tape -------------------------------------------------------------------

Tape::Tape() : previous_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(const std::shared_ptr<TensorNode>& node) { nodes_.push_back(node); }

void Tape::backward(const Tensor& loss, double seed) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  // A loss that does not depend on any differentiable tensor contributes
  // nothing.
  if (!loss.requires_grad()) return;
  TensorNode* target = loss.node();
  if (!target->recorded) {
    // A differentiable leaf used directly as the loss.
    target->grad[0] += seed;
    return;
  }
  ptrdiff_t end = -1;
  for (ptrdiff_t i = static_cast<ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[i].get() == target) {
      end = i;
      break;
    }
  }
  if (end < 0) throw ContractError("backward: loss was not recorded on this tape");
  for (ptrdiff_t i = 0; i <= end; ++i) {
    TensorNode& n = *nodes_[i];
    n.grad.assign(n.value.size(), 0.0);
  }
  target->grad[0] = seed;
  for (ptrdiff_t i = end; i >= 0; --i) {
    TensorNode& n = *nodes_[i];
    n.backward(n);
  }
}

NoGradScope::NoGradScope() : saved_(g_current_tape) { g_current_tape = nullptr; }
NoGradScope::~NoGradScope() { g_current_tape = saved_; }

// --- make_op ------------------------------------------------------------------

namespace {

template <typename Range>
Tensor make_op_impl(Shape shape, std::vector<double> value, const Range& inputs,
                    BackwardFn backward) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape* tape = g_current_tape;
  bool record = false;
  if (tape) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        record = true;
        break;
      }
    }
  }
  if (record) {
    node->requires_grad = true;
    node->recorded = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.shared_node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
               BackwardFn backward) {
  return make_op_impl(std::move(shape), std::move(value), inputs, std::move(backward));
}

Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
               BackwardFn backward) {
  return make_op_impl(std::move(shape), std::move(value), inputs, std::move(backward));
}

// --- Linear algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    ConstMap gc(self.grad.data(), m, n);
    if (double* ga = self.input_grad(0)) {
      MutMap(ga, m, k).noalias() += gc * ConstMap(self.input_value(1).data(), k, n).transpose();
    }
    if (double* gb = self.input_grad(1)) {
      MutMap(gb, k, n).noalias() += ConstMap(self.input_value(0).data(), m, k).transpose() * gc;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), n, k).transpose();
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    ConstMap gc(self.grad.data(), m, n);
    if (double* ga = self.input_grad(0)) {
      MutMap(ga, m, k).noalias() += gc * ConstMap(self.input_value(1).data(), n, k);
    }
    if (double* gb = self.input_grad(1)) {
      MutMap(gb, n, k).noalias() += gc.transpose() * ConstMap(self.input_value(0).data(), m, k);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = in[static_cast<size_t>(i) * n + j];
  return make_op({n, m}, std::move(out), {a}, [m, n](TensorNode& self) {
    double* ga = self.input_grad(0);
    if (!ga) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op(std::move(shape), std::move(out), {a}, [](TensorNode& self) {
    double* ga = self.input_grad(0);
    if (!ga) return;
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

// --- Elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    for (size_t k = 0; k < 2; ++k) {
      if (double* g = self.input_grad(k)) {
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    if (double* g = self.input_grad(0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = self.input_grad(1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    const auto& x = self.input_value(0);
    const auto& y = self.input_value(1);
    if (double* g = self.input_grad(0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = self.input_grad(1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = s * x[i];
  return make_op(a.shape(), std::move(out), {a}, [s](TensorNode& self) {
    if (double* g = self.input_grad(0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s;
  return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
    if (double* g = self.input_grad(0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_rank2(a, "add_row");
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(b.size()) != n) {
    throw ShapeError("add_row: row " + shape_string(b.shape()) + " does not fit " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t k = static_cast<size_t>(i) * n + j;
      out[k] = x[k] + y[j];
    }
  return make_op(a.shape(), std::move(out), {a, b}, [m, n](TensorNode& self) {
    if (double* g = self.input_grad(0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = self.input_grad(1)) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += self.grad[static_cast<size_t>(i) * n + j];
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        // Through exp: about 1e-16 absolute error, and unlike std::tanh its
        // cost does not depend on the argument.
        return std::copysign(1.0 - 2.0 / (std::exp(2.0 * std::fabs(x)) + 1.0), x);
      },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a, double floor) {
  return unary_op(
      a, [floor](double x) { return std::log(x < floor ? floor : x); },
      [floor](double x, double) { return x < floor ? 0.0 : 1.0 / x; });
}

// --- Reductions -------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op({1}, {s}, {a}, [](TensorNode& self) {
    double* g = self.input_grad(0);
    if (!g) return;
    const double d = self.grad[0];
    const size_t n = self.inputs[0]->value.size();
    for (size_t i = 0; i < n; ++i) g[i] += d;
  });
}

Tensor sum(const Tensor& a, int axis) {
  require_rank2(a, "sum");
  const int m = a.dim(0), n = a.dim(1);
  if (axis != 0 && axis != 1) throw ShapeError("sum: axis must be 0 or 1");
  std::vector<double> out(axis == 0 ? n : m, 0.0);
  const auto x = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[axis == 0 ? j : i] += x[static_cast<size_t>(i) * n + j];
  Shape shape{axis == 0 ? n : m};
  return make_op(shape, std::move(out), {a}, [m, n, axis](TensorNode& self) {
    double* g = self.input_grad(0);
    if (!g) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[static_cast<size_t>(i) * n + j] += self.grad[axis == 0 ? j : i];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const AxisPlan plan = axis_plan(a, axis, "softmax");
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (int g = 0; g < plan.groups; ++g) {
    const size_t base = plan.offset(g);
    double mx = -std::numeric_limits<double>::infinity();
    bool nan = false;
    for (int i = 0; i < plan.len; ++i) {
      const double v = x[base + static_cast<size_t>(i) * plan.stride];
      if (std::isnan(v)) nan = true;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (int i = 0; i < plan.len; ++i) {
      const size_t k = base + static_cast<size_t>(i) * plan.stride;
      out[k] = nan ? std::numeric_limits<double>::quiet_NaN() : std::exp(x[k] - mx);
      z += out[k];
    }
    for (int i = 0; i < plan.len; ++i) out[base + static_cast<size_t>(i) * plan.stride] /= z;
  }
  return make_op(a.shape(), std::move(out), {a}, [plan](TensorNode& self) {
    double* ga = self.input_grad(0);
    if (!ga) return;
    for (int g = 0; g < plan.groups; ++g) {
      const size_t base = plan.offset(g);
      double dot = 0.0;
      for (int i = 0; i < plan.len; ++i) {
        const size_t k = base + static_cast<size_t>(i) * plan.stride;
        dot += self.grad[k] * self.value[k];
      }
      for (int i = 0; i < plan.len; ++i) {
        const size_t k = base + static_cast<size_t>(i) * plan.stride;
        ga[k] += self.value[k] * (self.grad[k] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, int axis) {
  const AxisPlan plan = axis_plan(a, axis, "log_softmax");
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (int g = 0; g < plan.groups; ++g) {
    const size_t base = plan.offset(g);
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < plan.len; ++i) mx = std::max(mx, x[base + static_cast<size_t>(i) * plan.stride]);
    double z = 0.0;
    for (int i = 0; i < plan.len; ++i) z += std::exp(x[base + static_cast<size_t>(i) * plan.stride] - mx);
    const double lse = mx + std::log(z);
    for (int i = 0; i < plan.len; ++i) {
      const size_t k = base + static_cast<size_t>(i) * plan.stride;
      out[k] = x[k] - lse;
    }
  }
  return make_op(a.shape(), std::move(out), {a}, [plan](TensorNode& self) {
    double* ga = self.input_grad(0);
    if (!ga) return;
    for (int g = 0; g < plan.groups; ++g) {
      const size_t base = plan.offset(g);
      double total = 0.0;
      for (int i = 0; i < plan.len; ++i) total += self.grad[base + static_cast<size_t>(i) * plan.stride];
      for (int i = 0; i < plan.len; ++i) {
        const size_t k = base + static_cast<size_t>(i) * plan.stride;
        ga[k] += self.grad[k] - std::exp(self.value[k]) * total;
      }
    }
  });
}

Tensor layer_norm(const Tensor& v, const Tensor& gain, const Tensor& bias, double eps) {
  if (v.rank() > 2) throw ShapeError("layer_norm: rank > 2 " + shape_string(v.shape()));
  const int m = v.rows(), n = v.cols();
  if (static_cast<int>(gain.size()) != n || static_cast<int>(bias.size()) != n) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                     shape_string(bias.shape()) + " do not match " + shape_string(v.shape()));
  }
  std::vector<double> out(v.size());
  // Normalized values and inverse std per row, kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(v.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const auto x = v.data(), g = gain.data(), b = bias.data();
  for (int r = 0; r < m; ++r) {
    const size_t base = static_cast<size_t>(r) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x[base + j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[base + j] - mean) * (x[base + j] - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int j = 0; j < n; ++j) {
      const double h = (x[base + j] - mean) * is;
      (*xhat)[base + j] = h;
      out[base + j] = g[j] * h + b[j];
    }
  }
  return make_op(v.shape(), std::move(out), {v, gain, bias},
                 [m, n, xhat, inv_std](TensorNode& self) {
                   double* gv = self.input_grad(0);
                   double* gg = self.input_grad(1);
                   double* gb = self.input_grad(2);
                   const auto& g = self.input_value(1);
                   for (int r = 0; r < m; ++r) {
                     const size_t base = static_cast<size_t>(r) * n;
                     double mean_d = 0.0, mean_dh = 0.0;
                     for (int j = 0; j < n; ++j) {
                       const double dy = self.grad[base + j];
                       const double h = (*xhat)[base + j];
                       if (gg) gg[j] += dy * h;
                       if (gb) gb[j] += dy;
                       const double dh = dy * g[j];
                       mean_d += dh;
                       mean_dh += dh * h;
                     }
                     if (!gv) continue;
                     mean_d /= n;
                     mean_dh /= n;
                     for (int j = 0; j < n; ++j) {
                       const double dh = self.grad[base + j] * g[j];
                       gv[base + j] +=
                           (*inv_std)[r] * (dh - mean_d - (*xhat)[base + j] * mean_dh);
                     }
                   }
                 });
}

// --- Structure --------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Tensor& first = parts.front();
  if (first.rank() == 1) {
    if (axis != 0) throw ShapeError("concat: vectors concatenate along axis 0 only");
    std::vector<double> out;
    for (const Tensor& p : parts) {
      if (p.rank() != 1) throw ShapeError("concat: mixed ranks " + shape_string(p.shape()));
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    const int total = static_cast<int>(out.size());
    return make_op({total}, std::move(out), parts, [](TensorNode& self) {
      size_t offset = 0;
      for (size_t k = 0; k < self.inputs.size(); ++k) {
        const size_t n = self.inputs[k]->value.size();
        if (double* g = self.input_grad(k)) {
          for (size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
        }
        offset += n;
      }
    });
  }
  require_rank2(first, "concat");
  if (axis == 0) {
    const int n = first.dim(1);
    int m = 0;
    std::vector<double> out;
    for (const Tensor& p : parts) {
      require_rank2(p, "concat");
      if (p.dim(1) != n) {
        throw ShapeError("concat rows: column mismatch " + shape_string(first.shape()) +
                         " vs " + shape_string(p.shape()));
      }
      m += p.dim(0);
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_op({m, n}, std::move(out), parts, [](TensorNode& self) {
      size_t offset = 0;
      for (size_t k = 0; k < self.inputs.size(); ++k) {
        const size_t len = self.inputs[k]->value.size();
        if (double* g = self.input_grad(k)) {
          for (size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
        }
        offset += len;
      }
    });
  }
  if (axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  const int m = first.dim(0);
  int n = 0;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat");
    if (p.dim(0) != m) {
      throw ShapeError("concat cols: row mismatch " + shape_string(first.shape()) + " vs " +
                       shape_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    n += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  int col = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    const auto src = p.data();
    for (int i = 0; i < m; ++i)
      std::copy_n(src.begin() + static_cast<size_t>(i) * w, w,
                  out.begin() + static_cast<size_t>(i) * n + col);
    col += w;
  }
  return make_op({m, n}, std::move(out), parts, [m, n, widths](TensorNode& self) {
    int col = 0;
    for (size_t k = 0; k < self.inputs.size(); ++k) {
      const int w = widths[k];
      if (double* g = self.input_grad(k)) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            g[static_cast<size_t>(i) * w + j] += self.grad[static_cast<size_t>(i) * n + col + j];
      }
      col += w;
    }
  });
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
  require_rank2(a, "slice_rows");
  if (begin < 0 || end > a.dim(0) || begin >= end) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(a.shape()));
  }
  const int n = a.dim(1);
  const auto src = a.data();
  std::vector<double> out(src.begin() + static_cast<size_t>(begin) * n,
                          src.begin() + static_cast<size_t>(end) * n);
  return make_op({end - begin, n}, std::move(out), {a}, [begin, n](TensorNode& self) {
    double* g = self.input_grad(0);
    if (!g) return;
    g += static_cast<size_t>(begin) * n;
    for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, int begin, int end) {
  require_rank2(a, "slice_cols");
  if (begin < 0 || end > a.dim(1) || begin >= end) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(a.shape()));
  }
  const int m = a.dim(0), n = a.dim(1), w = end - begin;
  const auto src = a.data();
  std::vector<double> out(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    std::copy_n(src.begin() + static_cast<size_t>(i) * n + begin, w,
                out.begin() + static_cast<size_t>(i) * w);
  return make_op({m, w}, std::move(out), {a}, [m, n, w, begin](TensorNode& self) {
    double* g = self.input_grad(0);
    if (!g) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        g[static_cast<size_t>(i) * n + begin + j] += self.grad[static_cast<size_t>(i) * w + j];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "gather_rows");
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  const int rows = table.dim(0), n = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * n);
  const auto src = table.data();
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= rows) {
      throw ContractError("gather_rows: id " + std::to_string(idx[r]) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(src.begin() + static_cast<size_t>(idx[r]) * n, n, out.begin() + r * n);
  }
  const int m = static_cast<int>(idx.size());
  return make_op({m, n}, std::move(out), {table}, [idx = std::move(idx), n](TensorNode& self) {
    double* g = self.input_grad(0);
    if (!g) return;
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < n; ++j) g[static_cast<size_t>(idx[r]) * n + j] += self.grad[r * n + j];
  });
}

Tensor kron_rows(const Tensor& a, const Tensor& b) {
  require_rank2(a, "kron_rows");
  require_rank2(b, "kron_rows");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("kron_rows: row mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * p * q);
  const auto x = a.data(), y = b.data();
  for (int t = 0; t < m; ++t)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j)
        out[(static_cast<size_t>(t) * p + i) * q + j] =
            x[static_cast<size_t>(t) * p + i] * y[static_cast<size_t>(t) * q + j];
  return make_op({m, p * q}, std::move(out), {a, b}, [m, p, q](TensorNode& self) {
    double* ga = self.input_grad(0);
    double* gb = self.input_grad(1);
    const auto& x = self.input_value(0);
    const auto& y = self.input_value(1);
    for (int t = 0; t < m; ++t)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) {
          const double d = self.grad[(static_cast<size_t>(t) * p + i) * q + j];
          if (ga) ga[static_cast<size_t>(t) * p + i] += d * y[static_cast<size_t>(t) * q + j];
          if (gb) gb[static_cast<size_t>(t) * q + j] += d * x[static_cast<size_t>(t) * p + i];
        }
  });
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

}  // namespace seqinf
