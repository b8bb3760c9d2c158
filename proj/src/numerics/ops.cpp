#include "mcm/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mcm/numerics/kernels.hpp"

namespace mcm {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

struct ConvGeometry {
  int64_t c_in, h, w, c_out, k, h_out, w_out;
  int stride, pad;
  int64_t patch() const { return c_in * k * k; }
  int64_t pixels() const { return h_out * w_out; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// Output columns ox whose input column ox * stride + kx - pad is in range.
struct ColumnRange {
  int64_t lo, hi;
};

ColumnRange valid_columns(const ConvGeometry& g, int64_t kx) {
  const int64_t first = g.pad - kx;  // ox * stride >= first
  int64_t lo = first <= 0 ? 0 : (first + g.stride - 1) / g.stride;
  const int64_t last = g.w - 1 + g.pad - kx;  // ox * stride <= last
  int64_t hi = last < 0 ? 0 : std::min(g.w_out, last / g.stride + 1);
  lo = std::min(lo, hi);
  return {lo, hi};
}

// cols[(c * k + ky) * k + kx, oy * w_out + ox] = input(c, oy*s + ky - pad, ...)
void im2col(const ConvGeometry& g, const double* in, double* cols) {
  for (int64_t c = 0; c < g.c_in; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        const ColumnRange r = valid_columns(g, kx);
        for (int64_t oy = 0; oy < g.h_out; ++oy) {
          const int64_t iy = oy * g.stride + ky - g.pad;
          double* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, 0.0);
            continue;
          }
          const double* src = in + (c * g.h + iy) * g.w + kx - g.pad;
          std::fill(dst, dst + r.lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + r.lo, src + r.hi, dst + r.lo);
          } else {
            for (int64_t ox = r.lo; ox < r.hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + r.hi, dst + g.w_out, 0.0);
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in) {
  for (int64_t c = 0; c < g.c_in; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        const ColumnRange r = valid_columns(g, kx);
        for (int64_t oy = 0; oy < g.h_out; ++oy) {
          const int64_t iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = in + (c * g.h + iy) * g.w + kx - g.pad;
          const double* src = row + oy * g.w_out;
          for (int64_t ox = r.lo; ox < r.hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

}  // namespace

int64_t conv_output_size(int64_t in, int64_t k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride,
           int pad) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[2] != ws[3]) {
    throw std::invalid_argument("conv2d: expected input [C,H,W] and weight "
                                "[C_out,C_in,k,k], got input " +
                                shape_to_string(xs) + " and weight " +
                                shape_to_string(ws));
  }
  if (xs[0] != ws[1]) {
    throw std::invalid_argument(
        "conv2d: input channels do not match weight C_in: input " +
        shape_to_string(xs) + ", weight " + shape_to_string(ws));
  }
  if (bias.shape() != Shape{ws[0]}) {
    throw std::invalid_argument("conv2d: bias shape " +
                                shape_to_string(bias.shape()) +
                                " does not match weight " + shape_to_string(ws));
  }
  if (stride < 1 || pad < 0 || xs[1] + 2 * pad < ws[2] || xs[2] + 2 * pad < ws[2]) {
    throw std::invalid_argument("conv2d: invalid stride/pad for input " +
                                shape_to_string(xs) + " and weight " +
                                shape_to_string(ws));
  }

  ConvGeometry g{xs[0], xs[1], xs[2], ws[0], ws[2], 0, 0, stride, pad};
  g.h_out = conv_output_size(g.h, g.k, stride, pad);
  g.w_out = conv_output_size(g.w, g.k, stride, pad);

  const auto& kt = kernels::active();
  std::shared_ptr<Tensor> cols;
  const double* col_ptr = input.value().ptr();
  if (!g.is_pointwise()) {
    cols = std::make_shared<Tensor>(Shape{g.patch(), g.pixels()});
    im2col(g, input.value().ptr(), cols->ptr());
    col_ptr = cols->ptr();
  }

  Tensor out({g.c_out, g.h_out, g.w_out});
  const double* b = bias.value().ptr();
  for (int64_t o = 0; o < g.c_out; ++o) {
    std::fill(out.ptr() + o * g.pixels(), out.ptr() + (o + 1) * g.pixels(), b[o]);
  }
  kt.gemm_strided_a(g.c_out, g.pixels(), g.patch(), weight.value().ptr(),
                    g.patch(), 1, col_ptr, g.pixels(), out.ptr(), g.pixels());

  return make_result(
      std::move(out), {input, weight, bias},
      [g, cols, in = input.node(), w = weight.node(), bn = bias.node()](Node& self) {
        const auto& kt = kernels::active();
        const double* gy = self.grad.ptr();
        const double* col_ptr = cols ? cols->ptr() : in->value.ptr();
        if (w->requires_grad) {
          kt.gemm_nt(g.c_out, g.patch(), g.pixels(), gy, g.pixels(), col_ptr,
                     g.pixels(), w->ensure_grad().ptr(), g.patch());
        }
        if (bn->requires_grad) {
          double* gb = bn->ensure_grad().ptr();
          for (int64_t o = 0; o < g.c_out; ++o) {
            double acc = 0.0;
            const double* row = gy + o * g.pixels();
            for (int64_t i = 0; i < g.pixels(); ++i) acc += row[i];
            gb[o] += acc;
          }
        }
        if (in->requires_grad) {
          if (g.is_pointwise()) {
            kt.gemm_strided_a(g.patch(), g.pixels(), g.c_out, w->value.ptr(), 1,
                              g.patch(), gy, g.pixels(), in->ensure_grad().ptr(),
                              g.pixels());
          } else {
            Tensor dcols({g.patch(), g.pixels()});
            kt.gemm_strided_a(g.patch(), g.pixels(), g.c_out, w->value.ptr(), 1,
                              g.patch(), gy, g.pixels(), dcols.ptr(), g.pixels());
            col2im_add(g, dcols.ptr(), in->ensure_grad().ptr());
          }
        }
      });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  kernels::active().relu(out.numel(), x.value().ptr(), out.ptr());
  return make_result(std::move(out), {x}, [in = x.node()](Node& self) {
    kernels::active().relu_backward(self.value.numel(), in->value.ptr(),
                                    self.grad.ptr(), in->ensure_grad().ptr());
  });
}

Var softmax(const Var& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0 || static_cast<size_t>(axis) >= s.size()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for shape " + shape_to_string(s));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const int64_t n = s[axis];

  Tensor out(s);
  const double* in = x.value().ptr();
  double* y = out.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      double mx = in[base];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double total = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (int64_t j = 0; j < n; ++j) y[base + j * inner] /= total;
    }
  }

  return make_result(std::move(out), {x},
                     [outer, inner, n, in_node = x.node()](Node& self) {
    double* gx = in_node->ensure_grad().ptr();
    const double* y = self.value.ptr();
    const double* gy = self.grad.ptr();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * n * inner + i;
        double inner_product = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          inner_product += gy[base + j * inner] * y[base + j * inner];
        }
        for (int64_t j = 0; j < n; ++j) {
          const int64_t k = base + j * inner;
          gx[k] += y[k] * (gy[k] - inner_product);
        }
      }
    }
  });
}

Var mul_add(const Var& a, const Var& b, const Var& c) {
  require_same_shape(a, b, "mul_add");
  require_same_shape(a, c, "mul_add");
  Tensor out(a.shape());
  kernels::active().mul_add(out.numel(), a.value().ptr(), b.value().ptr(),
                            c.value().ptr(), out.ptr());
  return make_result(std::move(out), {a, b, c},
                     [an = a.node(), bn = b.node(), cn = c.node()](Node& self) {
    const auto& kt = kernels::active();
    const int64_t n = self.value.numel();
    const double* gy = self.grad.ptr();
    if (an->requires_grad) {
      double* ga = an->ensure_grad().ptr();
      kt.mul_add(n, gy, bn->value.ptr(), ga, ga);
    }
    if (bn->requires_grad) {
      double* gb = bn->ensure_grad().ptr();
      kt.mul_add(n, gy, an->value.ptr(), gb, gb);
    }
    if (cn->requires_grad) kt.axpy(n, 1.0, gy, cn->ensure_grad().ptr());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.value());
  kernels::active().axpy(out.numel(), 1.0, b.value().ptr(), out.ptr());
  return make_result(std::move(out), {a, b},
                     [an = a.node(), bn = b.node()](Node& self) {
    const auto& kt = kernels::active();
    const int64_t n = self.value.numel();
    if (an->requires_grad) kt.axpy(n, 1.0, self.grad.ptr(), an->ensure_grad().ptr());
    if (bn->requires_grad) kt.axpy(n, 1.0, self.grad.ptr(), bn->ensure_grad().ptr());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b},
                     [an = a.node(), bn = b.node()](Node& self) {
    const int64_t n = self.value.numel();
    const double* gy = self.grad.ptr();
    if (an->requires_grad) {
      double* ga = an->ensure_grad().ptr();
      for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      double* gb = bn->ensure_grad().ptr();
      for (int64_t i = 0; i < n; ++i) gb[i] += gy[i] * an->value[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  return make_result(std::move(out), {x}, [factor, xn = x.node()](Node& self) {
    kernels::active().axpy(self.value.numel(), factor, self.grad.ptr(),
                           xn->ensure_grad().ptr());
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_result(Tensor::scalar(total), {x}, [xn = x.node()](Node& self) {
    const double g = self.grad[0];
    for (double& v : xn->ensure_grad().data()) v += g;
  });
}

Var concat_leading(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_leading: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw std::invalid_argument("concat_leading: rank-0 input");
  int64_t leading = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      throw std::invalid_argument("concat_leading: trailing shape mismatch " +
                                  shape_to_string(first) + " vs " + shape_to_string(s));
    }
    leading += s[0];
  }
  if (parts.size() == 1) return parts[0];

  Shape shape = first;
  shape[0] = leading;
  Tensor out(shape);
  std::vector<std::shared_ptr<Node>> nodes;
  int64_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + offset);
    offset += p.value().numel();
    nodes.push_back(p.node());
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [nodes](Node& self) {
    int64_t offset = 0;
    for (const auto& n : nodes) {
      const int64_t count = n->value.numel();
      if (n->requires_grad) {
        kernels::active().axpy(count, 1.0, self.grad.ptr() + offset, n->ensure_grad().ptr());
      }
      offset += count;
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  for (const Var& p : parts) {
    if (p.shape().size() != 3) {
      throw std::invalid_argument("concat_channels: expected [C,H,W], got " +
                                  shape_to_string(p.shape()));
    }
  }
  return concat_leading(parts);
}

Var slice_leading(const Var& x, int64_t begin, int64_t end) {
  const Shape& s = x.shape();
  if (s.empty() || begin < 0 || end > s[0] || begin >= end) {
    throw std::invalid_argument("slice_leading: range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") invalid for " + shape_to_string(s));
  }
  Shape shape = s;
  shape[0] = end - begin;
  const int64_t inner = x.value().numel() / s[0];
  const double* src = x.value().ptr() + begin * inner;
  Tensor out(shape, std::vector<double>(src, src + (end - begin) * inner));
  return make_result(std::move(out), {x}, [in = x.node(), begin, inner](Node& self) {
    kernels::active().axpy(self.grad.numel(), 1.0, self.grad.ptr(),
                           in->ensure_grad().ptr() + begin * inner);
  });
}

}  // namespace mcm
