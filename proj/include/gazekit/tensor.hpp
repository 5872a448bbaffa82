#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazekit/errors.hpp"

namespace gazekit {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense N-D tensor of doubles with an optional same-shape gradient buffer.
// Copies are shallow (shared storage); treat values as immutable once an op
// has consumed the tensor. Gradient buffers exist iff requires_grad.
class Tensor {
 public:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor of(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return int(d_->shape.size()); }
  int dim(int i) const { return d_->shape[std::size_t(i)]; }
  std::int64_t size() const { return std::int64_t(d_->values.size()); }

  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& values() { return d_->values; }

  double item() const;
  double operator()(int i) const { return d_->values[std::size_t(i)]; }
  double operator()(int i, int j) const;
  double operator()(int c, int h, int w) const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg);
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  bool all_finite() const;

  const std::shared_ptr<Data>& data() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
  std::shared_ptr<Data> d_;
};

// Ordered record of executed ops. Forward execution appends nodes, so the
// record is topologically sorted by construction; backward() replays it once
// in reverse, accumulating (summing) gradients at fan-out points.
// A Tape is single-owner and must not be shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> fn) {
    nodes_.push_back(Node{op, std::move(fn)});
  }

  // Seeds d(root)=1 and runs every recorded backward exactly once, newest
  // first. root must be a scalar that requires grad.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
};

// ---- Operations ----------------------------------------------------------
// Every op takes the recording tape first; pass nullptr for inference-only
// evaluation (no graph is built and outputs do not require grad).

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
// y = A x (or A^T x when transpose_a).
Tensor matvec(Tape* tape, const Tensor& a, const Tensor& x, bool transpose_a = false);
// y = W x + b; pass an undefined Tensor for b to skip the bias.
Tensor linear(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b);

// Cross-correlation (no kernel flip), zero padding, square kernel.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, int stride, int pad);
Tensor add_channel_bias(Tape* tape, const Tensor& x, const Tensor& b);

Tensor softmax(Tape* tape, const Tensor& x);
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// LayerNorm across the channel axis at each spatial position of a C x H x W map.
Tensor layer_norm_channels(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                           double eps = 1e-5);
Tensor global_avg_pool(Tape* tape, const Tensor& x);

Tensor relu(Tape* tape, const Tensor& x);
Tensor tanh(Tape* tape, const Tensor& x);
Tensor abs(Tape* tape, const Tensor& x);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& x, double s);
Tensor add_scalar(Tape* tape, const Tensor& x, double s);
// x scaled by a learnable 1-element tensor.
Tensor scale_by(Tape* tape, const Tensor& x, const Tensor& s);
// (C x H x W) map multiplied by an H x W spatial weight plane.
Tensor mul_spatial(Tape* tape, const Tensor& x, const Tensor& g);
Tensor concat(Tape* tape, std::span<const Tensor> parts);
Tensor l2_normalize(Tape* tape, const Tensor& x);
// Clamp to [0,1]; gradient is identity strictly inside, zero at and outside
// the boundaries.
Tensor clip01(Tape* tape, const Tensor& x);
Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);
Tensor dot(Tape* tape, const Tensor& a, const Tensor& b);
// Euclidean norm as a 1-element tensor; subgradient 0 at the origin.
Tensor norm2(Tape* tape, const Tensor& x);

// ---- Finite-difference oracle ---------------------------------------------

// Max over all coordinates of all params of
// |analytic - numeric| / max(1, |analytic|, |numeric|), central differences.
// f builds the loss on the given tape (nullptr => plain evaluation).
double finite_diff_check(const std::function<Tensor(Tape*)>& f, std::span<const Tensor> params,
                         double step = 1e-5);

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // 0 = check every coordinate; otherwise sample this many per parameter.
  int coords_per_param = 0;
  std::uint64_t seed = 0;
  // When a coordinate exceeds tol, retry with smaller steps (kinks within the
  // stencil width otherwise poison the estimate).
  bool retry_smaller_steps = true;
};

struct ParamCheck {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int coords_checked = 0;
  bool passed(double tol) const { return max_rel_err <= tol; }
};

std::vector<ParamCheck> finite_diff_check_named(
    const std::function<Tensor(Tape*)>& f,
    std::span<const std::pair<std::string, Tensor>> params, const GradCheckOptions& opt);

}  // namespace gazekit
