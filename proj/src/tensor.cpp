#include "gazekit/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <sstream>

#include "gazekit/rng.hpp"

namespace gazekit {

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("shape extents must be positive, got " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<Data>();
  const auto n = std::size_t(shape_size(shape));
  d->shape = std::move(shape);
  d->values.assign(n, 0.0);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(n, 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape), false);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::of(Shape shape, std::vector<double> values, bool requires_grad) {
  if (std::size_t(shape_size(shape)) != values.size())
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(d->values.size(), 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return of({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a 1-element tensor, got " + shape_str(shape()));
  return d_->values[0];
}

double Tensor::operator()(int i, int j) const {
  return d_->values[std::size_t(i) * std::size_t(d_->shape[1]) + std::size_t(j)];
}

double Tensor::operator()(int c, int h, int w) const {
  const auto H = std::size_t(d_->shape[1]), W = std::size_t(d_->shape[2]);
  return d_->values[(std::size_t(c) * H + std::size_t(h)) * W + std::size_t(w)];
}

void Tensor::set_requires_grad(bool rg) {
  d_->requires_grad = rg;
  if (rg)
    d_->grad.assign(d_->values.size(), 0.0);
  else
    d_->grad.clear();
}

const std::vector<double>& Tensor::grad() const {
  if (!d_->requires_grad) throw ValueError("tensor does not require grad");
  return d_->grad;
}

std::vector<double>& Tensor::grad() {
  if (!d_->requires_grad) throw ValueError("tensor does not require grad");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : d_->values)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw ValueError("backward root must be a 1-element tensor");
  if (!root.requires_grad())
    throw ValueError("backward root does not require grad (graph has no parameters)");
  root.data()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

namespace {

using DataPtr = std::shared_ptr<Tensor::Data>;

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Elementwise unary: y_i = fwd(x_i), dx_i += go_i * dfn(x_i, y_i).
template <class Fwd, class Dfn>
Tensor unary_op(Tape* tape, const Tensor& x, const char* name, Fwd fwd, Dfn dfn) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record(name, [xd, od, dfn] {
      if (!xd->requires_grad) return;
      for (std::size_t i = 0; i < xd->values.size(); ++i)
        xd->grad[i] += od->grad[i] * dfn(xd->values[i], od->values[i]);
    });
  }
  return out;
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros({m, n}, rg);
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const double s = av[i * k + kk];
        const double* br = bv + std::size_t(kk) * n;
        double* orow = ov + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += s * br[j];
      }
  }
  if (rg) {
    DataPtr ad = a.data(), bd = b.data(), od = out.data();
    tape->record("matmul", [ad, bd, od, m, k, n] {
      const double* go = od->grad.data();
      if (ad->requires_grad) {
        double* da = ad->grad.data();
        const double* bv = bd->values.data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double* gr = go + std::size_t(i) * n;
            const double* br = bv + std::size_t(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += gr[j] * br[j];
            da[i * k + kk] += acc;
          }
      }
      if (bd->requires_grad) {
        double* db = bd->grad.data();
        const double* av = ad->values.data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double s = av[i * k + kk];
            const double* gr = go + std::size_t(i) * n;
            double* dbr = db + std::size_t(kk) * n;
            for (int j = 0; j < n; ++j) dbr[j] += s * gr[j];
          }
      }
    });
  }
  return out;
}

Tensor matvec(Tape* tape, const Tensor& a, const Tensor& x, bool transpose_a) {
  if (a.rank() != 2 || x.rank() != 1)
    throw ShapeError("matvec: expects matrix and vector, got " + shape_str(a.shape()) + " and " +
                     shape_str(x.shape()));
  const int m = a.dim(0), n = a.dim(1);
  const int in = transpose_a ? m : n;
  const int outn = transpose_a ? n : m;
  if (x.dim(0) != in)
    throw ShapeError("matvec: vector length " + std::to_string(x.dim(0)) + " does not match " +
                     shape_str(a.shape()));
  const bool rg = want_grad(tape, {&a, &x});
  Tensor out = Tensor::zeros({outn}, rg);
  {
    const double* av = a.values().data();
    const double* xv = x.values().data();
    double* ov = out.values().data();
    if (!transpose_a) {
      for (int i = 0; i < m; ++i) {
        const double* row = av + std::size_t(i) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += row[j] * xv[j];
        ov[i] = acc;
      }
    } else {
      for (int i = 0; i < m; ++i) {
        const double* row = av + std::size_t(i) * n;
        const double s = xv[i];
        for (int j = 0; j < n; ++j) ov[j] += s * row[j];
      }
    }
  }
  if (rg) {
    DataPtr ad = a.data(), xd = x.data(), od = out.data();
    tape->record("matvec", [ad, xd, od, m, n, transpose_a] {
      const double* go = od->grad.data();
      if (!transpose_a) {
        if (ad->requires_grad) {
          double* da = ad->grad.data();
          const double* xv = xd->values.data();
          for (int i = 0; i < m; ++i) {
            const double g = go[i];
            double* row = da + std::size_t(i) * n;
            for (int j = 0; j < n; ++j) row[j] += g * xv[j];
          }
        }
        if (xd->requires_grad) {
          double* dx = xd->grad.data();
          const double* av = ad->values.data();
          for (int i = 0; i < m; ++i) {
            const double g = go[i];
            const double* row = av + std::size_t(i) * n;
            for (int j = 0; j < n; ++j) dx[j] += g * row[j];
          }
        }
      } else {
        if (ad->requires_grad) {
          double* da = ad->grad.data();
          const double* xv = xd->values.data();
          for (int i = 0; i < m; ++i) {
            const double s = xv[i];
            double* row = da + std::size_t(i) * n;
            for (int j = 0; j < n; ++j) row[j] += s * go[j];
          }
        }
        if (xd->requires_grad) {
          double* dx = xd->grad.data();
          const double* av = ad->values.data();
          for (int i = 0; i < m; ++i) {
            const double* row = av + std::size_t(i) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += row[j] * go[j];
            dx[i] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor linear(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b) {
  Tensor y = matvec(tape, w, x, false);
  if (!b.defined()) return y;
  return add(tape, y, b);
}

namespace {

struct ConvDims {
  int cin, h, wd, cout, k, stride, pad, oh, ow;
  std::size_t patch() const { return std::size_t(cin) * k * k; }
  std::size_t plane() const { return std::size_t(oh) * ow; }
};

// Patch matrix, position-major: cols[r*ow+c][(ci*k+kh)*k+kw] = padded input
// value. Position-major keeps the hot inner loops contiguous over the patch.
void im2col(const double* xv, const ConvDims& d, double* cols) {
  const std::size_t q = d.patch();
  std::fill(cols, cols + q * d.plane(), 0.0);
  for (int ci = 0; ci < d.cin; ++ci)
    for (int kh = 0; kh < d.k; ++kh)
      for (int kw = 0; kw < d.k; ++kw) {
        const std::size_t qi = (std::size_t(ci) * d.k + kh) * d.k + kw;
        const int lo = d.pad - kw;
        const int ow0 = lo <= 0 ? 0 : (lo + d.stride - 1) / d.stride;
        const int ow1 = std::min(d.ow - 1, (d.wd - 1 - kw + d.pad) / d.stride);
        if (ow1 < ow0) continue;
        for (int r = 0; r < d.oh; ++r) {
          const int ih = r * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.h) continue;
          const double* xrow = xv + (std::size_t(ci) * d.h + ih) * d.wd;
          double* crow = cols + std::size_t(r) * d.ow * q + qi;
          for (int c = ow0; c <= ow1; ++c)
            crow[std::size_t(c) * q] = xrow[c * d.stride + kw - d.pad];
        }
      }
}

// Scatter-add transpose of im2col.
void col2im_add(const double* cols, const ConvDims& d, double* dx) {
  const std::size_t q = d.patch();
  for (int ci = 0; ci < d.cin; ++ci)
    for (int kh = 0; kh < d.k; ++kh)
      for (int kw = 0; kw < d.k; ++kw) {
        const std::size_t qi = (std::size_t(ci) * d.k + kh) * d.k + kw;
        const int lo = d.pad - kw;
        const int ow0 = lo <= 0 ? 0 : (lo + d.stride - 1) / d.stride;
        const int ow1 = std::min(d.ow - 1, (d.wd - 1 - kw + d.pad) / d.stride);
        if (ow1 < ow0) continue;
        for (int r = 0; r < d.oh; ++r) {
          const int ih = r * d.stride + kh - d.pad;
          if (ih < 0 || ih >= d.h) continue;
          double* dxrow = dx + (std::size_t(ci) * d.h + ih) * d.wd;
          const double* crow = cols + std::size_t(r) * d.ow * q + qi;
          for (int c = ow0; c <= ow1; ++c)
            dxrow[c * d.stride + kw - d.pad] += crow[std::size_t(c) * q];
        }
      }
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4)
    throw ShapeError("conv2d: expects CxHxW input and OxCxKxK kernel, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (stride < 1 || pad < 0 || w.dim(2) < 1 || w.dim(2) != w.dim(3))
    throw ValueError("conv2d: require square kernel k>=1, stride>=1, pad>=0");
  ConvDims d;
  d.cin = x.dim(0);
  d.h = x.dim(1);
  d.wd = x.dim(2);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin)
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) +
                     " input channels, image has " + std::to_string(d.cin));
  d.oh = (d.h + 2 * pad - d.k) / stride + 1;
  d.ow = (d.wd + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad - d.k < 0 || d.wd + 2 * pad - d.k < 0 || d.oh < 1 || d.ow < 1)
    throw ShapeError("conv2d: output extent < 1 for input " + shape_str(x.shape()) +
                     ", kernel " + std::to_string(d.k) + ", stride " + std::to_string(stride) +
                     ", pad " + std::to_string(pad));

  const bool rg = want_grad(tape, {&x, &w});
  Tensor out = Tensor::zeros({d.cout, d.oh, d.ow}, rg);
  {
    std::vector<double> cols(d.patch() * d.plane());
    im2col(x.values().data(), d, cols.data());
    const double* wv = w.values().data();
    double* ov = out.values().data();
    const std::size_t q = d.patch();
    const std::size_t n = d.plane();
    for (std::size_t j = 0; j < n; ++j) {
      const double* crow = cols.data() + j * q;
      for (int co = 0; co < d.cout; ++co) {
        const double* wrow = wv + std::size_t(co) * q;
        double acc = 0.0;
        for (std::size_t i = 0; i < q; ++i) acc += wrow[i] * crow[i];
        ov[std::size_t(co) * n + j] = acc;
      }
    }
  }
  if (rg) {
    DataPtr xd = x.data(), wdp = w.data(), od = out.data();
    tape->record("conv2d", [xd, wdp, od, d] {
      const double* go = od->grad.data();
      const bool gx = xd->requires_grad;
      const bool gw = wdp->requires_grad;
      const std::size_t q = d.patch();
      const std::size_t n = d.plane();
      if (gw) {
        std::vector<double> cols(q * n);
        im2col(xd->values.data(), d, cols.data());
        for (std::size_t j = 0; j < n; ++j) {
          const double* crow = cols.data() + j * q;
          for (int co = 0; co < d.cout; ++co) {
            const double g = go[std::size_t(co) * n + j];
            if (g == 0.0) continue;
            double* dwrow = wdp->grad.data() + std::size_t(co) * q;
            for (std::size_t i = 0; i < q; ++i) dwrow[i] += g * crow[i];
          }
        }
      }
      if (gx) {
        std::vector<double> gcols(q * n, 0.0);
        const double* wv = wdp->values.data();
        for (std::size_t j = 0; j < n; ++j) {
          double* crow = gcols.data() + j * q;
          for (int co = 0; co < d.cout; ++co) {
            const double g = go[std::size_t(co) * n + j];
            if (g == 0.0) continue;
            const double* wrow = wv + std::size_t(co) * q;
            for (std::size_t i = 0; i < q; ++i) crow[i] += g * wrow[i];
          }
        }
        col2im_add(gcols.data(), d, xd->grad.data());
      }
    });
  }
  return out;
}

Tensor add_channel_bias(Tape* tape, const Tensor& x, const Tensor& b) {
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.dim(0))
    throw ShapeError("add_channel_bias: got " + shape_str(x.shape()) + " and " +
                     shape_str(b.shape()));
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const bool rg = want_grad(tape, {&x, &b});
  Tensor out = Tensor::zeros(x.shape(), rg);
  for (int ci = 0; ci < c; ++ci) {
    const double bv = b(ci);
    const double* src = x.values().data() + ci * plane;
    double* dst = out.values().data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
  }
  if (rg) {
    DataPtr xd = x.data(), bd = b.data(), od = out.data();
    tape->record("add_channel_bias", [xd, bd, od, c, plane] {
      const double* go = od->grad.data();
      if (xd->requires_grad) {
        double* dx = xd->grad.data();
        for (std::size_t i = 0; i < std::size_t(c) * plane; ++i) dx[i] += go[i];
      }
      if (bd->requires_grad) {
        for (int ci = 0; ci < c; ++ci) {
          const double* g = go + ci * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += g[i];
          bd->grad[ci] += acc;
        }
      }
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
  if (x.rank() != 1 || x.dim(0) < 1) throw ShapeError("softmax: expects a non-empty vector");
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const auto& xv = x.values();
  auto& ov = out.values();
  const double mx = *std::max_element(xv.begin(), xv.end());
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    ov[i] = std::exp(xv[i] - mx);
    total += ov[i];
  }
  for (auto& v : ov) v /= total;
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record("softmax", [xd, od] {
      if (!xd->requires_grad) return;
      const auto& y = od->values;
      const auto& go = od->grad;
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += go[i] * y[i];
      for (std::size_t i = 0; i < y.size(); ++i) xd->grad[i] += y[i] * (go[i] - s);
    });
  }
  return out;
}

namespace {

// Shared LayerNorm math over one group of n values with stride `stride`
// between them. gain/bias are indexed densely (one entry per group element).
struct LnGroup {
  double mu = 0.0, inv = 0.0;
};

LnGroup ln_forward(const double* x, double* y, const double* gain, const double* bias, int n,
                   std::size_t stride, double eps) {
  double mu = 0.0;
  for (int i = 0; i < n; ++i) mu += x[i * stride];
  mu /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = x[i * stride] - mu;
    var += d * d;
  }
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) y[i * stride] = (x[i * stride] - mu) * inv * gain[i] + bias[i];
  return {mu, inv};
}

void ln_backward(const double* x, const double* go, const double* gain, int n, std::size_t stride,
                 const LnGroup& g, double* dx, double* dgain, double* dbias) {
  // dxhat_i = go_i * gain_i; standard layer-norm backward.
  double sum_dxh = 0.0, sum_dxh_xh = 0.0;
  for (int i = 0; i < n; ++i) {
    const double xh = (x[i * stride] - g.mu) * g.inv;
    const double dxh = go[i * stride] * gain[i];
    sum_dxh += dxh;
    sum_dxh_xh += dxh * xh;
    if (dgain) dgain[i] += go[i * stride] * xh;
    if (dbias) dbias[i] += go[i * stride];
  }
  if (!dx) return;
  for (int i = 0; i < n; ++i) {
    const double xh = (x[i * stride] - g.mu) * g.inv;
    const double dxh = go[i * stride] * gain[i];
    dx[i * stride] += g.inv * (dxh - (sum_dxh + xh * sum_dxh_xh) / n);
  }
}

}  // namespace

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() != 1 || x.dim(0) < 2)
    throw ShapeError("layer_norm: expects a vector of length >= 2, got " + shape_str(x.shape()));
  check_same_shape("layer_norm(gain)", x, gain);
  check_same_shape("layer_norm(bias)", x, bias);
  const int n = x.dim(0);
  const bool rg = want_grad(tape, {&x, &gain, &bias});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const LnGroup g =
      ln_forward(x.values().data(), out.values().data(), gain.values().data(),
                 bias.values().data(), n, 1, eps);
  if (rg) {
    DataPtr xd = x.data(), gd = gain.data(), bd = bias.data(), od = out.data();
    tape->record("layer_norm", [xd, gd, bd, od, n, g] {
      ln_backward(xd->values.data(), od->grad.data(), gd->values.data(), n, 1, g,
                  xd->requires_grad ? xd->grad.data() : nullptr,
                  gd->requires_grad ? gd->grad.data() : nullptr,
                  bd->requires_grad ? bd->grad.data() : nullptr);
    });
  }
  return out;
}

Tensor layer_norm_channels(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                           double eps) {
  if (x.rank() != 3 || x.dim(0) < 2)
    throw ShapeError("layer_norm_channels: expects CxHxW with C >= 2, got " +
                     shape_str(x.shape()));
  if (gain.rank() != 1 || gain.dim(0) != x.dim(0) || bias.rank() != 1 || bias.dim(0) != x.dim(0))
    throw ShapeError("layer_norm_channels: gain/bias must have one entry per channel");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t plane = std::size_t(h) * w;
  const bool rg = want_grad(tape, {&x, &gain, &bias});
  Tensor out = Tensor::zeros(x.shape(), rg);
  std::vector<LnGroup> groups(plane);
  for (std::size_t p = 0; p < plane; ++p)
    groups[p] = ln_forward(x.values().data() + p, out.values().data() + p, gain.values().data(),
                           bias.values().data(), c, plane, eps);
  if (rg) {
    DataPtr xd = x.data(), gd = gain.data(), bd = bias.data(), od = out.data();
    tape->record("layer_norm_channels", [xd, gd, bd, od, c, plane, groups = std::move(groups)] {
      for (std::size_t p = 0; p < plane; ++p)
        ln_backward(xd->values.data() + p, od->grad.data() + p, gd->values.data(), c, plane,
                    groups[p], xd->requires_grad ? xd->grad.data() + p : nullptr,
                    gd->requires_grad ? gd->grad.data() : nullptr,
                    bd->requires_grad ? bd->grad.data() : nullptr);
    });
  }
  return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool: expects CxHxW, got " + shape_str(x.shape()));
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros({c}, rg);
  for (int ci = 0; ci < c; ++ci) {
    const double* src = x.values().data() + ci * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out.values()[ci] = acc / double(plane);
  }
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record("global_avg_pool", [xd, od, c, plane] {
      if (!xd->requires_grad) return;
      for (int ci = 0; ci < c; ++ci) {
        const double g = od->grad[ci] / double(plane);
        double* dst = xd->grad.data() + ci * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
      }
    });
  }
  return out;
}

Tensor relu(Tape* tape, const Tensor& x) {
  return unary_op(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape* tape, const Tensor& x) {
  return unary_op(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor abs(Tape* tape, const Tensor& x) {
  return unary_op(
      tape, x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clip01(Tape* tape, const Tensor& x) {
  return unary_op(
      tape, x, "clip01", [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); },
      [](double v, double) { return (v > 0.0 && v < 1.0) ? 1.0 : 0.0; });
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(a.shape(), rg);
  for (std::size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  if (rg) {
    DataPtr ad = a.data(), bd = b.data(), od = out.data();
    tape->record("add", [ad, bd, od] {
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += od->grad[i];
        if (bd->requires_grad) bd->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(a.shape(), rg);
  for (std::size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  if (rg) {
    DataPtr ad = a.data(), bd = b.data(), od = out.data();
    tape->record("sub", [ad, bd, od] {
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += od->grad[i];
        if (bd->requires_grad) bd->grad[i] -= od->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(a.shape(), rg);
  for (std::size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  if (rg) {
    DataPtr ad = a.data(), bd = b.data(), od = out.data();
    tape->record("mul", [ad, bd, od] {
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += od->grad[i] * bd->values[i];
        if (bd->requires_grad) bd->grad[i] += od->grad[i] * ad->values[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& x, double s) {
  return unary_op(
      tape, x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(Tape* tape, const Tensor& x, double s) {
  return unary_op(
      tape, x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor scale_by(Tape* tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale_by: scale must be a 1-element tensor");
  const double sv = s(0);
  const bool rg = want_grad(tape, {&x, &s});
  Tensor out = Tensor::zeros(x.shape(), rg);
  for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] = x.values()[i] * sv;
  if (rg) {
    DataPtr xd = x.data(), sd = s.data(), od = out.data();
    tape->record("scale_by", [xd, sd, od, sv] {
      if (xd->requires_grad)
        for (std::size_t i = 0; i < od->grad.size(); ++i) xd->grad[i] += od->grad[i] * sv;
      if (sd->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < od->grad.size(); ++i) acc += od->grad[i] * xd->values[i];
        sd->grad[0] += acc;
      }
    });
  }
  return out;
}

Tensor mul_spatial(Tape* tape, const Tensor& x, const Tensor& g) {
  if (x.rank() != 3 || g.rank() != 2 || g.dim(0) != x.dim(1) || g.dim(1) != x.dim(2))
    throw ShapeError("mul_spatial: got " + shape_str(x.shape()) + " and " + shape_str(g.shape()));
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const bool rg = want_grad(tape, {&x, &g});
  Tensor out = Tensor::zeros(x.shape(), rg);
  for (int ci = 0; ci < c; ++ci) {
    const double* src = x.values().data() + ci * plane;
    const double* gw = g.values().data();
    double* dst = out.values().data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gw[i];
  }
  if (rg) {
    DataPtr xd = x.data(), gd = g.data(), od = out.data();
    tape->record("mul_spatial", [xd, gd, od, c, plane] {
      for (int ci = 0; ci < c; ++ci) {
        const double* go = od->grad.data() + ci * plane;
        if (xd->requires_grad) {
          double* dx = xd->grad.data() + ci * plane;
          for (std::size_t i = 0; i < plane; ++i) dx[i] += go[i] * gd->values[i];
        }
        if (gd->requires_grad) {
          const double* xv = xd->values.data() + ci * plane;
          for (std::size_t i = 0; i < plane; ++i) gd->grad[i] += go[i] * xv[i];
        }
      }
    });
  }
  return out;
}

Tensor concat(Tape* tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  std::int64_t total = 0;
  bool rg_any = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat: expects vectors, got " + shape_str(p.shape()));
    total += p.size();
    rg_any = rg_any || p.requires_grad();
  }
  const bool rg = tape && rg_any;
  Tensor out = Tensor::zeros({int(total)}, rg);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + off);
    off += p.values().size();
  }
  if (rg) {
    std::vector<DataPtr> ins;
    ins.reserve(parts.size());
    for (const Tensor& p : parts) ins.push_back(p.data());
    DataPtr od = out.data();
    tape->record("concat", [ins, od] {
      std::size_t off = 0;
      for (const auto& in : ins) {
        if (in->requires_grad)
          for (std::size_t i = 0; i < in->values.size(); ++i) in->grad[i] += od->grad[off + i];
        off += in->values.size();
      }
    });
  }
  return out;
}

Tensor l2_normalize(Tape* tape, const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("l2_normalize: expects a vector");
  double nrm = 0.0;
  for (double v : x.values()) nrm += v * v;
  nrm = std::sqrt(nrm);
  if (nrm < 1e-12) throw NumericError("l2_normalize: degenerate vector with near-zero norm");
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  for (std::size_t i = 0; i < x.values().size(); ++i) out.values()[i] = x.values()[i] / nrm;
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record("l2_normalize", [xd, od, nrm] {
      if (!xd->requires_grad) return;
      const auto& y = od->values;
      const auto& go = od->grad;
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += go[i] * y[i];
      for (std::size_t i = 0; i < y.size(); ++i) xd->grad[i] += (go[i] - y[i] * s) / nrm;
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros({1}, rg);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record("sum", [xd, od] {
      if (!xd->requires_grad) return;
      const double g = od->grad[0];
      for (auto& d : xd->grad) d += g;
    });
  }
  return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / double(x.size()));
}

Tensor dot(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("dot", a, b);
  const bool rg = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros({1}, rg);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) acc += a.values()[i] * b.values()[i];
  out.values()[0] = acc;
  if (rg) {
    DataPtr ad = a.data(), bd = b.data(), od = out.data();
    tape->record("dot", [ad, bd, od] {
      const double g = od->grad[0];
      for (std::size_t i = 0; i < ad->values.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += g * bd->values[i];
        if (bd->requires_grad) bd->grad[i] += g * ad->values[i];
      }
    });
  }
  return out;
}

Tensor norm2(Tape* tape, const Tensor& x) {
  const bool rg = want_grad(tape, {&x});
  Tensor out = Tensor::zeros({1}, rg);
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  const double nrm = std::sqrt(acc);
  out.values()[0] = nrm;
  if (rg) {
    DataPtr xd = x.data(), od = out.data();
    tape->record("norm2", [xd, od, nrm] {
      if (!xd->requires_grad || nrm < 1e-12) return;
      const double g = od->grad[0] / nrm;
      for (std::size_t i = 0; i < xd->values.size(); ++i) xd->grad[i] += g * xd->values[i];
    });
  }
  return out;
}

// ---- Finite differences ----------------------------------------------------

namespace {

double eval_scalar(const std::function<Tensor(Tape*)>& f) {
  const double v = f(nullptr).item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
  return v;
}

double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

double central_diff(const std::function<Tensor(Tape*)>& f, std::vector<double>& xs,
                    std::size_t i, double h) {
  const double keep = xs[i];
  xs[i] = keep + h;
  const double fp = eval_scalar(f);
  xs[i] = keep - h;
  const double fm = eval_scalar(f);
  xs[i] = keep;
  return (fp - fm) / (2.0 * h);
}

}  // namespace

double finite_diff_check(const std::function<Tensor(Tape*)>& f, std::span<const Tensor> params,
                         double step) {
  if (step <= 0.0) throw ValueError("finite_diff_check: step must be positive");
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  Tape tape;
  Tensor loss = f(&tape);
  if (!std::isfinite(loss.item()))
    throw NumericError("finite_diff_check: non-finite function value");
  tape.backward(loss);

  double worst = 0.0;
  for (const Tensor& p : params) {
    const std::vector<double> analytic = p.grad();
    auto& xs = const_cast<Tensor&>(p).values();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double numeric = central_diff(f, xs, i, step);
      worst = std::max(worst, rel_err(analytic[i], numeric));
    }
  }
  return worst;
}

std::vector<ParamCheck> finite_diff_check_named(
    const std::function<Tensor(Tape*)>& f,
    std::span<const std::pair<std::string, Tensor>> params, const GradCheckOptions& opt) {
  for (const auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();
  Tape tape;
  Tensor loss = f(&tape);
  if (!std::isfinite(loss.item()))
    throw NumericError("finite_diff_check: non-finite function value");
  tape.backward(loss);

  Rng rng(opt.seed ? opt.seed : 0x5eed);
  std::vector<ParamCheck> report;
  report.reserve(params.size());
  for (const auto& [name, p] : params) {
    const std::vector<double> analytic = p.grad();
    auto& xs = const_cast<Tensor&>(p).values();

    std::vector<std::size_t> coords;
    if (opt.coords_per_param <= 0 || std::int64_t(xs.size()) <= opt.coords_per_param) {
      coords.resize(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) coords[i] = i;
    } else {
      for (int i = 0; i < opt.coords_per_param; ++i)
        coords.push_back(std::size_t(rng.uniform_int(std::int64_t(xs.size()))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    ParamCheck pc;
    pc.name = name;
    pc.coords_checked = int(coords.size());
    for (std::size_t i : coords) {
      double h = opt.step;
      double numeric = central_diff(f, xs, i, h);
      double err = rel_err(analytic[i], numeric);
      if (opt.retry_smaller_steps && err > opt.tol) {
        for (int r = 0; r < 2 && err > opt.tol; ++r) {
          h *= 0.1;
          const double n2 = central_diff(f, xs, i, h);
          const double e2 = rel_err(analytic[i], n2);
          if (e2 < err) {
            err = e2;
            numeric = n2;
          }
        }
      }
      if (err > pc.max_rel_err) {
        pc.max_rel_err = err;
        pc.worst_index = std::int64_t(i);
        pc.analytic = analytic[i];
        pc.numeric = numeric;
      }
    }
    report.push_back(std::move(pc));
  }
  return report;
}

}  // namespace gazekit
