#pragma once

// Dense tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node holding a shape, row-major
// values and (for differentiable tensors) a gradient buffer. Operations
// executed while a Tape is alive on the current thread, and that touch at
// least one tensor with requires_grad set, are appended to that tape; calling
// Tape::backward on a scalar walks the recorded nodes in reverse and
// accumulates gradients into every differentiable ancestor. Without an active
// tape nothing is recorded, which is the inference fast path.
//
// Shapes must match exactly for elementwise operations. The only broadcasts
// are scalar scaling and the explicit add_row bias helper.

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seqinf {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
size_t shape_size(const Shape& shape);

// Global numeric mode. Values are always computed in double precision; in
// single mode, parameters are stored rounded to float (see round_param) so
// that training trajectories and checkpoints are float-exact. Gradient
// checking requires double mode.
enum class Precision { kSingle, kDouble };

void set_precision(Precision p);
Precision precision();
double round_param(double v);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

struct TensorNode;
using BackwardFn = std::function<void(TensorNode& self)>;

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool recorded = false;  // produced by an operation on a tape
  std::vector<std::shared_ptr<TensorNode>> inputs;
  BackwardFn backward;

  // Gradient buffer of input k, or nullptr if that input is not
  // differentiable.
  double* input_grad(size_t k) {
    TensorNode& in = *inputs[k];
    return in.requires_grad ? in.grad.data() : nullptr;
  }
  const std::vector<double>& input_value(size_t k) const {
    return inputs[k]->value;
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor identity(int n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const { return node_->shape.at(axis); }
  size_t size() const { return node_->value.size(); }

  // Matrix view: rank-2 tensors are rows x cols, rank-1 tensors are 1 x n.
  int rows() const;
  int cols() const;

  std::span<const double> data() const { return node_->value; }
  // Direct write access. Only valid on tensors that are not inputs to
  // recorded operations still awaiting backward.
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double operator[](size_t i) const { return node_->value[i]; }
  double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

  // Deep copy of the values; the copy is a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Records operations for reverse-mode differentiation. Constructing a tape
// makes it the active tape of the calling thread until it is destroyed;
// tapes nest, the innermost one wins.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Accumulates d(loss)/d(leaf) into every differentiable leaf reachable from
  // the scalar `loss`, scaled by `seed`. Leaf gradients add up across calls;
  // the caller zeroes them between optimizer steps.
  void backward(const Tensor& loss, double seed = 1.0);

  size_t size() const { return nodes_.size(); }
  static Tape* current();
  void record(const std::shared_ptr<TensorNode>& node);

 private:
  std::vector<std::shared_ptr<TensorNode>> nodes_;
  Tape* previous_ = nullptr;
};

// Suspends recording on the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

// Builds the result of a custom primitive. `backward` receives the output
// node and must add into the gradients of its differentiable inputs. The
// node is recorded iff a tape is active and some input requires grad.
Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_op(Shape shape, std::vector<double> value,
               const std::vector<Tensor>& inputs, BackwardFn backward);

// --- Linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// --- Elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// a[m,n] + b broadcast over rows; b has n entries.
Tensor add_row(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Natural log; inputs below `floor` are clamped to it (zero gradient there).
Tensor log(const Tensor& a, double floor = 0.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

// --- Reductions and normalization -------------------------------------------

Tensor sum(const Tensor& a);            // scalar
Tensor sum(const Tensor& a, int axis);  // rank-2 only; drops the axis
// Softmax along `axis` (0 or 1 for matrices, 0 for vectors), max-stabilized.
// NaN inputs propagate to NaN outputs.
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);
// gain * (v - mean) / sqrt(var + eps) + bias, applied to each row (a vector
// is a single row). gain and bias have one entry per column.
Tensor layer_norm(const Tensor& v, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// --- Structure ---------------------------------------------------------------

// Concatenate along axis 0 (stack rows) or 1 (append columns). Vectors only
// concatenate along axis 0.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_rows(const Tensor& a, int begin, int end);
Tensor slice_cols(const Tensor& a, int begin, int end);
// Row i of the result is table[ids[i]].
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
// Row-wise vectorized outer product: result row t is vec(a_t b_t^T), i.e.
// entry (t, i * b.cols() + j) = a(t, i) * b(t, j).
Tensor kron_rows(const Tensor& a, const Tensor& b);

// Same values, cut off from the graph.
Tensor detach(const Tensor& a);

}  // namespace seqinf
