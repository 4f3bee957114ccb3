#include "wemf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wemf/error.hpp"

namespace wemf {

namespace {

using detail::BackwardCtx;
using detail::make_result;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(double, double, double, double&,
                                      double&)) {
  require_same_shape(op, a, b);
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  return make_result(op, a.shape(), std::move(out), {a, b},
                     [bwd](const BackwardCtx& ctx) {
                       const auto& g = ctx.grad_out();
                       const auto& av = ctx.out().parents[0]->data;
                       const auto& bv = ctx.out().parents[1]->data;
                       const bool na = ctx.needs(0);
                       const bool nb = ctx.needs(1);
                       std::vector<double>* ga = na ? &ctx.grad_in(0) : nullptr;
                       std::vector<double>* gb = nb ? &ctx.grad_in(1) : nullptr;
                       double da = 0.0, db = 0.0;
                       for (size_t i = 0; i < g.size(); ++i) {
                         bwd(av[i], bv[i], g[i], da, db);
                         if (ga) (*ga)[i] += da;
                         if (gb) (*gb)[i] += db;
                       }
                     });
}

Tensor elementwise_unary(const char* op, const Tensor& a,
                         double (*fwd)(double), double (*dfdx)(double)) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  return make_result(op, a.shape(), std::move(out), {a},
                     [dfdx](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       const auto& av = ctx.out().parents[0]->data;
                       auto& ga = ctx.grad_in(0);
                       for (size_t i = 0; i < g.size(); ++i) {
                         ga[i] += g[i] * dfdx(av[i]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + s;
  return make_result("add_scalar", a.shape(), std::move(out), {a},
                     [](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       auto& ga = ctx.grad_in(0);
                       for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

Tensor mul_scalar(const Tensor& a, double s) {
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * s;
  return make_result("mul_scalar", a.shape(), std::move(out), {a},
                     [s](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       auto& ga = ctx.grad_in(0);
                       for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                     });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor silu(const Tensor& a) {
  return elementwise_unary(
      "silu", a,
      [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a) {
  return elementwise_unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor softplus(const Tensor& a) {
  return elementwise_unary(
      "softplus", a, [](double x) { return stable_softplus(x); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result("sum", {1}, {acc}, {a}, [](const BackwardCtx& ctx) {
    if (!ctx.needs(0)) return;
    const double g = ctx.grad_out()[0];
    auto& ga = ctx.grad_in(0);
    for (double& v : ga) v += g;
  });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  return make_result("mean", {1}, {acc * inv_n}, {a},
                     [inv_n](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const double g = ctx.grad_out()[0] * inv_n;
                       auto& ga = ctx.grad_in(0);
                       for (double& v : ga) v += g;
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(a.shape()) + " -> " +
                                shape_str(shape));
  }
  return make_result("reshape", std::move(shape),
                     std::vector<double>(a.data()), {a},
                     [](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       auto& ga = ctx.grad_in(0);
                       for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

namespace {

// Generic index-map op: out[i] = x[src[i]]. Backward scatter-adds.
Tensor gather_map(const char* op, const Tensor& x, Shape out_shape,
                  std::vector<int64_t> src) {
  const auto& xd = x.data();
  std::vector<double> out(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    out[i] = xd[static_cast<size_t>(src[i])];
  }
  return make_result(op, std::move(out_shape), std::move(out), {x},
                     [src = std::move(src)](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       auto& ga = ctx.grad_in(0);
                       for (size_t i = 0; i < g.size(); ++i) {
                         ga[static_cast<size_t>(src[i])] += g[i];
                       }
                     });
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int64_t>& perm) {
  const Shape& s = a.shape();
  const auto rank = static_cast<int64_t>(s.size());
  if (static_cast<int64_t>(perm.size()) != rank) {
    throw std::invalid_argument("permute: rank mismatch");
  }
  std::vector<bool> seen(perm.size(), false);
  for (int64_t p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<size_t>(p)]) {
      throw std::invalid_argument("permute: not a permutation");
    }
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(perm.size());
  for (size_t d = 0; d < perm.size(); ++d) {
    out_shape[d] = s[static_cast<size_t>(perm[d])];
  }
  const auto in_strides = row_major_strides(s);
  const int64_t n = a.numel();
  std::vector<int64_t> src(static_cast<size_t>(n));
  std::vector<int64_t> idx(perm.size(), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t so = 0;
    for (size_t d = 0; d < perm.size(); ++d) {
      so += idx[d] * in_strides[static_cast<size_t>(perm[d])];
    }
    src[static_cast<size_t>(flat)] = so;
    for (int64_t d = static_cast<int64_t>(perm.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) {
        break;
      }
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  return gather_map("permute", a, std::move(out_shape), std::move(src));
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const auto rank = static_cast<int64_t>(s0.size());
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("concat: axis out of range");
  }
  int64_t axis_total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int64_t>(s.size()) != rank) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    for (int64_t d = 0; d < rank; ++d) {
      if (d != axis && s[static_cast<size_t>(d)] != s0[static_cast<size_t>(d)]) {
        throw std::invalid_argument("concat: shape mismatch off the axis");
      }
    }
    axis_total += s[static_cast<size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = axis_total;

  // outer = product of dims before axis, inner = after axis
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
  for (int64_t d = axis + 1; d < rank; ++d) inner *= s0[static_cast<size_t>(d)];

  std::vector<double> out(static_cast<size_t>(outer * axis_total * inner));
  std::vector<int64_t> offsets(parts.size());
  {
    int64_t off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = off;
      off += parts[p].shape()[static_cast<size_t>(axis)];
    }
  }
  for (size_t p = 0; p < parts.size(); ++p) {
    const auto& pd = parts[p].data();
    const int64_t pa = parts[p].shape()[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o) {
      const double* src_ptr = pd.data() + o * pa * inner;
      double* dst = out.data() + (o * axis_total + offsets[p]) * inner;
      std::copy(src_ptr, src_ptr + pa * inner, dst);
    }
  }
  std::vector<int64_t> part_axes(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    part_axes[p] = parts[p].shape()[static_cast<size_t>(axis)];
  }
  return make_result(
      "concat", std::move(out_shape), std::move(out), parts,
      [outer, inner, axis_total, offsets = std::move(offsets),
       part_axes = std::move(part_axes)](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        for (size_t p = 0; p < ctx.out().parents.size(); ++p) {
          if (!ctx.needs(p)) continue;
          auto& gp = ctx.grad_in(p);
          const int64_t pa = part_axes[p];
          for (int64_t o = 0; o < outer; ++o) {
            const double* src_ptr = g.data() + (o * axis_total + offsets[p]) * inner;
            double* dst = gp.data() + o * pa * inner;
            for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src_ptr[i];
          }
        }
      });
}

Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  const auto rank = static_cast<int64_t>(s.size());
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("slice: axis out of range");
  }
  const int64_t extent = s[static_cast<size_t>(axis)];
  if (start < 0 || len <= 0 || start + len > extent) {
    throw std::invalid_argument("slice: range out of bounds");
  }
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  for (int64_t d = axis + 1; d < rank; ++d) inner *= s[static_cast<size_t>(d)];

  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = len;
  std::vector<double> out(static_cast<size_t>(outer * len * inner));
  const auto& ad = a.data();
  for (int64_t o = 0; o < outer; ++o) {
    const double* src_ptr = ad.data() + (o * extent + start) * inner;
    std::copy(src_ptr, src_ptr + len * inner, out.data() + o * len * inner);
  }
  return make_result("slice", std::move(out_shape), std::move(out), {a},
                     [outer, inner, extent, start, len](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       auto& ga = ctx.grad_in(0);
                       for (int64_t o = 0; o < outer; ++o) {
                         const double* src_ptr = g.data() + o * len * inner;
                         double* dst = ga.data() + (o * extent + start) * inner;
                         for (int64_t i = 0; i < len * inner; ++i) {
                           dst[i] += src_ptr[i];
                         }
                       }
                     });
}

std::vector<Tensor> split(const Tensor& a, int64_t axis, int64_t parts) {
  const Shape& s = a.shape();
  const auto rank = static_cast<int64_t>(s.size());
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("split: axis out of range");
  }
  const int64_t extent = s[static_cast<size_t>(axis)];
  if (parts <= 0 || extent % parts != 0) {
    throw std::invalid_argument(
        "split: extent " + std::to_string(extent) + " not divisible into " +
        std::to_string(parts) + " parts");
  }
  const int64_t step = extent / parts;
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(parts));
  for (int64_t p = 0; p < parts; ++p) {
    out.push_back(slice(a, axis, p * step, step));
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& order) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("gather_rows: expected [L,C] input");
  }
  const int64_t rows = x.shape()[0];
  const int64_t cols = x.shape()[1];
  std::vector<int64_t> src;
  src.reserve(order.size() * static_cast<size_t>(cols));
  for (int64_t r : order) {
    if (r < 0 || r >= rows) {
      throw std::invalid_argument("gather_rows: row index out of range");
    }
    for (int64_t c = 0; c < cols; ++c) src.push_back(r * cols + c);
  }
  return gather_map("gather_rows", x,
                    {static_cast<int64_t>(order.size()), cols}, std::move(src));
}

Tensor space_to_depth2(const Tensor& x) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("space_to_depth2: expected [H,W,C]");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("space_to_depth2: H and W must be even");
  }
  const int64_t oh = h / 2, ow = w / 2;
  static constexpr int64_t kDi[4] = {0, 0, 1, 1};
  static constexpr int64_t kDj[4] = {0, 1, 0, 1};
  std::vector<int64_t> src(static_cast<size_t>(oh * ow * 4 * c));
  size_t p = 0;
  for (int64_t i = 0; i < oh; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      for (int64_t q = 0; q < 4; ++q) {
        const int64_t si = 2 * i + kDi[q], sj = 2 * j + kDj[q];
        for (int64_t ch = 0; ch < c; ++ch) {
          src[p++] = (si * w + sj) * c + ch;
        }
      }
    }
  }
  return gather_map("space_to_depth2", x, {oh, ow, 4 * c}, std::move(src));
}

Tensor depth_to_space2(const Tensor& x) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("depth_to_space2: expected [H,W,C]");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (c % 4 != 0) {
    throw std::invalid_argument("depth_to_space2: C must be divisible by 4");
  }
  const int64_t oc = c / 4;
  static constexpr int64_t kDi[4] = {0, 0, 1, 1};
  static constexpr int64_t kDj[4] = {0, 1, 0, 1};
  std::vector<int64_t> src(static_cast<size_t>(4 * h * w * oc));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      for (int64_t q = 0; q < 4; ++q) {
        const int64_t oi = 2 * i + kDi[q], oj = 2 * j + kDj[q];
        for (int64_t ch = 0; ch < oc; ++ch) {
          src[static_cast<size_t>((oi * 2 * w + oj) * oc + ch)] =
              (i * w + j) * c + q * oc + ch;
        }
      }
    }
  }
  return gather_map("depth_to_space2", x, {2 * h, 2 * w, oc}, std::move(src));
}

namespace {

// C[M,N] += A[M,K] * B[K,N]
void mm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
           int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,K] += A[M,N] * B^T where B is [K,N]
void mm_nt(const double* a, const double* b, double* c, int64_t m, int64_t n,
           int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

// C[K,N] += A^T * B where A is [M,K], B is [M,N]
void mm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
           int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* crow = c + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result(
      "matmul", {m, n}, std::move(out), {a, b},
      [m, k, n](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& av = ctx.out().parents[0]->data;
        const auto& bv = ctx.out().parents[1]->data;
        if (ctx.needs(0)) {
          mm_nt(g.data(), bv.data(), ctx.grad_in(0).data(), m, n, k);
        }
        if (ctx.needs(1)) {
          mm_tn(av.data(), g.data(), ctx.grad_in(1).data(), m, k, n);
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.ndim() != 2) throw std::invalid_argument("linear: weight must be 2-D");
  const int64_t in = w.shape()[0], out_f = w.shape()[1];
  if (x.ndim() < 1 || x.shape().back() != in) {
    throw std::invalid_argument("linear: input last dim " +
                                shape_str(x.shape()) + " does not match " +
                                shape_str(w.shape()));
  }
  if (bias.defined() &&
      (bias.ndim() != 1 || bias.shape()[0] != out_f)) {
    throw std::invalid_argument("linear: bad bias shape");
  }
  const int64_t rows = x.numel() / in;
  std::vector<double> out(static_cast<size_t>(rows * out_f), 0.0);
  mm_nn(x.data().data(), w.data().data(), out.data(), rows, in, out_f);
  if (bias.defined()) {
    const auto& bd = bias.data();
    for (int64_t r = 0; r < rows; ++r) {
      double* row = out.data() + r * out_f;
      for (int64_t j = 0; j < out_f; ++j) row[j] += bd[j];
    }
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_f;

  std::vector<Tensor> parents = bias.defined()
                                    ? std::vector<Tensor>{x, w, bias}
                                    : std::vector<Tensor>{x, w};
  return make_result(
      "linear", std::move(out_shape), std::move(out), std::move(parents),
      [rows, in, out_f](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xv = ctx.out().parents[0]->data;
        const auto& wv = ctx.out().parents[1]->data;
        if (ctx.needs(0)) {
          mm_nt(g.data(), wv.data(), ctx.grad_in(0).data(), rows, out_f, in);
        }
        if (ctx.needs(1)) {
          mm_tn(xv.data(), g.data(), ctx.grad_in(1).data(), rows, in, out_f);
        }
        if (ctx.out().parents.size() > 2 && ctx.needs(2)) {
          auto& gb = ctx.grad_in(2);
          for (int64_t r = 0; r < rows; ++r) {
            const double* grow = g.data() + r * out_f;
            for (int64_t j = 0; j < out_f; ++j) gb[j] += grow[j];
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias,
              int64_t stride, int64_t pad) {
  if (x.ndim() != 3 || k.ndim() != 4) {
    throw std::invalid_argument("conv2d: expected x [H,W,Cin], k [kh,kw,Cin,Cout]");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], ci = x.shape()[2];
  const int64_t kh = k.shape()[0], kw = k.shape()[1];
  if (k.shape()[2] != ci) {
    throw std::invalid_argument("conv2d: channel mismatch");
  }
  const int64_t co = k.shape()[3];
  if (stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d: bad stride or padding");
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.shape()[0] != co)) {
    throw std::invalid_argument("conv2d: bad bias shape");
  }
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }

  const auto& xd = x.data();
  const auto& kd = k.data();
  std::vector<double> out(static_cast<size_t>(oh * ow * co), 0.0);
  for (int64_t i = 0; i < oh; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      double* opos = out.data() + (i * ow + j) * co;
      for (int64_t ki = 0; ki < kh; ++ki) {
        const int64_t si = i * stride + ki - pad;
        if (si < 0 || si >= h) continue;
        for (int64_t kj = 0; kj < kw; ++kj) {
          const int64_t sj = j * stride + kj - pad;
          if (sj < 0 || sj >= w) continue;
          const double* xpos = xd.data() + (si * w + sj) * ci;
          const double* kpos = kd.data() + (ki * kw + kj) * ci * co;
          for (int64_t c = 0; c < ci; ++c) {
            const double xv = xpos[c];
            if (xv == 0.0) continue;
            const double* krow = kpos + c * co;
            for (int64_t oc = 0; oc < co; ++oc) opos[oc] += xv * krow[oc];
          }
        }
      }
      if (bias.defined()) {
        const auto& bd = bias.data();
        for (int64_t oc = 0; oc < co; ++oc) opos[oc] += bd[oc];
      }
    }
  }

  std::vector<Tensor> parents = bias.defined()
                                    ? std::vector<Tensor>{x, k, bias}
                                    : std::vector<Tensor>{x, k};
  return make_result(
      "conv2d", {oh, ow, co}, std::move(out), std::move(parents),
      [h, w, ci, kh, kw, co, oh, ow, stride, pad](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xd = ctx.out().parents[0]->data;
        const auto& kd = ctx.out().parents[1]->data;
        const bool nx = ctx.needs(0), nk = ctx.needs(1);
        std::vector<double>* gx = nx ? &ctx.grad_in(0) : nullptr;
        std::vector<double>* gk = nk ? &ctx.grad_in(1) : nullptr;
        if (nx || nk) {
          for (int64_t i = 0; i < oh; ++i) {
            for (int64_t j = 0; j < ow; ++j) {
              const double* gpos = g.data() + (i * ow + j) * co;
              for (int64_t ki = 0; ki < kh; ++ki) {
                const int64_t si = i * stride + ki - pad;
                if (si < 0 || si >= h) continue;
                for (int64_t kj = 0; kj < kw; ++kj) {
                  const int64_t sj = j * stride + kj - pad;
                  if (sj < 0 || sj >= w) continue;
                  const int64_t xoff = (si * w + sj) * ci;
                  const int64_t koff = (ki * kw + kj) * ci * co;
                  for (int64_t c = 0; c < ci; ++c) {
                    double gacc = 0.0;
                    const double xv = xd[static_cast<size_t>(xoff + c)];
                    for (int64_t oc = 0; oc < co; ++oc) {
                      const double gv = gpos[oc];
                      if (gk) (*gk)[static_cast<size_t>(koff + c * co + oc)] += xv * gv;
                      gacc += kd[static_cast<size_t>(koff + c * co + oc)] * gv;
                    }
                    if (gx) (*gx)[static_cast<size_t>(xoff + c)] += gacc;
                  }
                }
              }
            }
          }
        }
        if (ctx.out().parents.size() > 2 && ctx.needs(2)) {
          auto& gb = ctx.grad_in(2);
          for (int64_t p = 0; p < oh * ow; ++p) {
            const double* gpos = g.data() + p * co;
            for (int64_t oc = 0; oc < co; ++oc) gb[oc] += gpos[oc];
          }
        }
      });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& k) {
  if (x.ndim() != 3 || k.ndim() != 3) {
    throw std::invalid_argument(
        "depthwise_conv2d: expected x [H,W,C], k [kh,kw,C]");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const int64_t kh = k.shape()[0], kw = k.shape()[1];
  if (k.shape()[2] != c) {
    throw std::invalid_argument("depthwise_conv2d: channel mismatch (" +
                                std::to_string(k.shape()[2]) + " vs " +
                                std::to_string(c) + ")");
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("depthwise_conv2d: kernel extents must be odd");
  }
  const int64_t ph = kh / 2, pw = kw / 2;
  const auto& xd = x.data();
  const auto& kd = k.data();
  std::vector<double> out(static_cast<size_t>(h * w * c), 0.0);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double* opos = out.data() + (i * w + j) * c;
      for (int64_t ki = 0; ki < kh; ++ki) {
        const int64_t si = i + ki - ph;
        if (si < 0 || si >= h) continue;
        for (int64_t kj = 0; kj < kw; ++kj) {
          const int64_t sj = j + kj - pw;
          if (sj < 0 || sj >= w) continue;
          const double* xpos = xd.data() + (si * w + sj) * c;
          const double* kpos = kd.data() + (ki * kw + kj) * c;
          for (int64_t ch = 0; ch < c; ++ch) opos[ch] += xpos[ch] * kpos[ch];
        }
      }
    }
  }
  return make_result(
      "depthwise_conv2d", {h, w, c}, std::move(out), {x, k},
      [h, w, c, kh, kw, ph, pw](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xd = ctx.out().parents[0]->data;
        const auto& kd = ctx.out().parents[1]->data;
        const bool nx = ctx.needs(0), nk = ctx.needs(1);
        std::vector<double>* gx = nx ? &ctx.grad_in(0) : nullptr;
        std::vector<double>* gk = nk ? &ctx.grad_in(1) : nullptr;
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const double* gpos = g.data() + (i * w + j) * c;
            for (int64_t ki = 0; ki < kh; ++ki) {
              const int64_t si = i + ki - ph;
              if (si < 0 || si >= h) continue;
              for (int64_t kj = 0; kj < kw; ++kj) {
                const int64_t sj = j + kj - pw;
                if (sj < 0 || sj >= w) continue;
                const int64_t xoff = (si * w + sj) * c;
                const int64_t koff = (ki * kw + kj) * c;
                for (int64_t ch = 0; ch < c; ++ch) {
                  if (gx) (*gx)[static_cast<size_t>(xoff + ch)] +=
                      kd[static_cast<size_t>(koff + ch)] * gpos[ch];
                  if (gk) (*gk)[static_cast<size_t>(koff + ch)] +=
                      xd[static_cast<size_t>(xoff + ch)] * gpos[ch];
                }
              }
            }
          }
        }
      });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() < 1 || bias.ndim() != 1 ||
      bias.shape()[0] != x.shape().back()) {
    throw std::invalid_argument("add_channel_bias: bias must match last axis");
  }
  const int64_t c = x.shape().back();
  const int64_t positions = x.numel() / c;
  const auto& xd = x.data();
  const auto& bd = bias.data();
  std::vector<double> out(xd.size());
  for (int64_t p = 0; p < positions; ++p) {
    const double* row = xd.data() + p * c;
    double* orow = out.data() + p * c;
    for (int64_t ch = 0; ch < c; ++ch) orow[ch] = row[ch] + bd[ch];
  }
  return make_result("add_channel_bias", x.shape(), std::move(out), {x, bias},
                     [positions, c](const BackwardCtx& ctx) {
                       const auto& g = ctx.grad_out();
                       if (ctx.needs(0)) {
                         auto& gx = ctx.grad_in(0);
                         for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (ctx.needs(1)) {
                         auto& gb = ctx.grad_in(1);
                         for (int64_t p = 0; p < positions; ++p) {
                           const double* grow = g.data() + p * c;
                           for (int64_t ch = 0; ch < c; ++ch) gb[ch] += grow[ch];
                         }
                       }
                     });
}

Tensor group_norm(const Tensor& x, int64_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  if (x.ndim() < 1) throw std::invalid_argument("group_norm: rank >= 1 needed");
  const int64_t c = x.shape().back();
  if (groups < 1 || c % groups != 0) {
    throw std::invalid_argument("group_norm: channels " + std::to_string(c) +
                                " not divisible by groups " +
                                std::to_string(groups));
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw std::invalid_argument("group_norm: affine parameter size mismatch");
  }
  if (eps <= 0) throw std::invalid_argument("group_norm: eps must be positive");
  const int64_t positions = x.numel() / c;
  const int64_t gc = c / groups;  // channels per group
  const int64_t group_n = positions * gc;

  const auto& xd = x.data();
  std::vector<double> mu(static_cast<size_t>(groups), 0.0);
  std::vector<double> inv_std(static_cast<size_t>(groups), 0.0);
  for (int64_t grp = 0; grp < groups; ++grp) {
    double acc = 0.0;
    for (int64_t p = 0; p < positions; ++p) {
      const double* row = xd.data() + p * c + grp * gc;
      for (int64_t ch = 0; ch < gc; ++ch) acc += row[ch];
    }
    const double m = acc / static_cast<double>(group_n);
    double var_acc = 0.0;
    for (int64_t p = 0; p < positions; ++p) {
      const double* row = xd.data() + p * c + grp * gc;
      for (int64_t ch = 0; ch < gc; ++ch) {
        const double d = row[ch] - m;
        var_acc += d * d;
      }
    }
    mu[static_cast<size_t>(grp)] = m;
    inv_std[static_cast<size_t>(grp)] =
        1.0 / std::sqrt(var_acc / static_cast<double>(group_n) + eps);
  }

  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  std::vector<double> out(xd.size());
  for (int64_t p = 0; p < positions; ++p) {
    const double* row = xd.data() + p * c;
    double* orow = out.data() + p * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t grp = ch / gc;
      const double xhat =
          (row[ch] - mu[static_cast<size_t>(grp)]) * inv_std[static_cast<size_t>(grp)];
      orow[ch] = gd[ch] * xhat + bd[ch];
    }
  }
  return make_result(
      "group_norm", x.shape(), std::move(out), {x, gamma, beta},
      [positions, c, gc, groups, group_n, mu = std::move(mu),
       inv_std = std::move(inv_std)](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xd = ctx.out().parents[0]->data;
        const auto& gd = ctx.out().parents[1]->data;
        const bool nx = ctx.needs(0);
        const bool ng = ctx.needs(1), nb = ctx.needs(2);
        std::vector<double>* gx = nx ? &ctx.grad_in(0) : nullptr;
        std::vector<double>* gg = ng ? &ctx.grad_in(1) : nullptr;
        std::vector<double>* gb = nb ? &ctx.grad_in(2) : nullptr;

        for (int64_t grp = 0; grp < groups; ++grp) {
          const double m = mu[static_cast<size_t>(grp)];
          const double is = inv_std[static_cast<size_t>(grp)];
          double m1 = 0.0, m2 = 0.0;  // means of dxhat and dxhat*xhat
          if (nx) {
            for (int64_t p = 0; p < positions; ++p) {
              const int64_t base = p * c + grp * gc;
              for (int64_t ch = 0; ch < gc; ++ch) {
                const int64_t cc = grp * gc + ch;
                const double xhat = (xd[static_cast<size_t>(base + ch)] - m) * is;
                const double dxhat = g[static_cast<size_t>(base + ch)] * gd[static_cast<size_t>(cc)];
                m1 += dxhat;
                m2 += dxhat * xhat;
              }
            }
            m1 /= static_cast<double>(group_n);
            m2 /= static_cast<double>(group_n);
          }
          for (int64_t p = 0; p < positions; ++p) {
            const int64_t base = p * c + grp * gc;
            for (int64_t ch = 0; ch < gc; ++ch) {
              const int64_t cc = grp * gc + ch;
              const double xhat = (xd[static_cast<size_t>(base + ch)] - m) * is;
              const double gv = g[static_cast<size_t>(base + ch)];
              if (gx) {
                const double dxhat = gv * gd[static_cast<size_t>(cc)];
                (*gx)[static_cast<size_t>(base + ch)] +=
                    is * (dxhat - m1 - xhat * m2);
              }
              if (gg) (*gg)[static_cast<size_t>(cc)] += gv * xhat;
              if (gb) (*gb)[static_cast<size_t>(cc)] += gv;
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.ndim() < 1) throw std::invalid_argument("layer_norm: rank >= 1 needed");
  const int64_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c) {
    throw std::invalid_argument("layer_norm: affine parameter size mismatch");
  }
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be positive");
  const int64_t positions = x.numel() / c;
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();

  std::vector<double> mu(static_cast<size_t>(positions));
  std::vector<double> inv_std(static_cast<size_t>(positions));
  std::vector<double> out(xd.size());
  for (int64_t p = 0; p < positions; ++p) {
    const double* row = xd.data() + p * c;
    double acc = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) acc += row[ch];
    const double m = acc / static_cast<double>(c);
    double var_acc = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double d = row[ch] - m;
      var_acc += d * d;
    }
    const double is = 1.0 / std::sqrt(var_acc / static_cast<double>(c) + eps);
    mu[static_cast<size_t>(p)] = m;
    inv_std[static_cast<size_t>(p)] = is;
    double* orow = out.data() + p * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      orow[ch] = gd[ch] * ((row[ch] - m) * is) + bd[ch];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [positions, c, mu = std::move(mu),
       inv_std = std::move(inv_std)](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xd = ctx.out().parents[0]->data;
        const auto& gd = ctx.out().parents[1]->data;
        const bool nx = ctx.needs(0);
        const bool ng = ctx.needs(1), nb = ctx.needs(2);
        std::vector<double>* gx = nx ? &ctx.grad_in(0) : nullptr;
        std::vector<double>* gg = ng ? &ctx.grad_in(1) : nullptr;
        std::vector<double>* gb = nb ? &ctx.grad_in(2) : nullptr;
        for (int64_t p = 0; p < positions; ++p) {
          const double m = mu[static_cast<size_t>(p)];
          const double is = inv_std[static_cast<size_t>(p)];
          const double* row = xd.data() + p * c;
          const double* grow = g.data() + p * c;
          double m1 = 0.0, m2 = 0.0;
          if (nx) {
            for (int64_t ch = 0; ch < c; ++ch) {
              const double xhat = (row[ch] - m) * is;
              const double dxhat = grow[ch] * gd[ch];
              m1 += dxhat;
              m2 += dxhat * xhat;
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
          }
          for (int64_t ch = 0; ch < c; ++ch) {
            const double xhat = (row[ch] - m) * is;
            if (gx) {
              const double dxhat = grow[ch] * gd[ch];
              (*gx)[static_cast<size_t>(p * c + ch)] +=
                  is * (dxhat - m1 - xhat * m2);
            }
            if (gg) (*gg)[ch] += grow[ch] * xhat;
            if (gb) (*gb)[ch] += grow[ch];
          }
        }
      });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.ndim() < 1) throw std::invalid_argument("softmax: rank >= 1 needed");
  const int64_t c = x.shape().back();
  const int64_t positions = x.numel() / c;
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  for (int64_t p = 0; p < positions; ++p) {
    const double* row = xd.data() + p * c;
    double* orow = out.data() + p * c;
    double mx = row[0];
    for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, row[ch]);
    double denom = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
      orow[ch] = std::exp(row[ch] - mx);
      denom += orow[ch];
    }
    for (int64_t ch = 0; ch < c; ++ch) orow[ch] /= denom;
  }
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [positions, c](const BackwardCtx& ctx) {
                       if (!ctx.needs(0)) return;
                       const auto& g = ctx.grad_out();
                       const auto& p_out = ctx.out().data;
                       auto& gx = ctx.grad_in(0);
                       for (int64_t p = 0; p < positions; ++p) {
                         const double* prow = p_out.data() + p * c;
                         const double* grow = g.data() + p * c;
                         double dot = 0.0;
                         for (int64_t ch = 0; ch < c; ++ch) {
                           dot += grow[ch] * prow[ch];
                         }
                         double* gxrow = gx.data() + p * c;
                         for (int64_t ch = 0; ch < c; ++ch) {
                           gxrow[ch] += prow[ch] * (grow[ch] - dot);
                         }
                       }
                     });
}

Tensor cross_entropy_mean(const Tensor& logits,
                          const std::vector<int>& labels) {
  if (logits.ndim() < 1) {
    throw std::invalid_argument("cross_entropy: rank >= 1 needed");
  }
  const int64_t k = logits.shape().back();
  const int64_t positions = logits.numel() / k;
  if (static_cast<int64_t>(labels.size()) != positions) {
    throw std::invalid_argument("cross_entropy: label count mismatch");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= k) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
  }
  const auto& xd = logits.data();
  std::vector<double> probs(xd.size());
  double loss = 0.0;
  for (int64_t p = 0; p < positions; ++p) {
    const double* row = xd.data() + p * k;
    double* prow = probs.data() + p * k;
    double mx = row[0];
    for (int64_t ch = 1; ch < k; ++ch) mx = std::max(mx, row[ch]);
    double denom = 0.0;
    for (int64_t ch = 0; ch < k; ++ch) {
      prow[ch] = std::exp(row[ch] - mx);
      denom += prow[ch];
    }
    const double lse = mx + std::log(denom);
    for (int64_t ch = 0; ch < k; ++ch) prow[ch] /= denom;
    loss += lse - row[labels[static_cast<size_t>(p)]];
  }
  loss /= static_cast<double>(positions);
  return make_result(
      "cross_entropy", {1}, {loss}, {logits},
      [positions, k, labels, probs = std::move(probs)](const BackwardCtx& ctx) {
        if (!ctx.needs(0)) return;
        const double g0 = ctx.grad_out()[0] / static_cast<double>(positions);
        auto& gx = ctx.grad_in(0);
        for (int64_t p = 0; p < positions; ++p) {
          const double* prow = probs.data() + p * k;
          double* gxrow = gx.data() + p * k;
          const int lab = labels[static_cast<size_t>(p)];
          for (int64_t ch = 0; ch < k; ++ch) {
            gxrow[ch] += g0 * (prow[ch] - (ch == lab ? 1.0 : 0.0));
          }
        }
      });
}

Tensor resize2d(const Tensor& x, int64_t out_h, int64_t out_w,
                ResizeMode mode) {
  if (x.ndim() != 3) throw std::invalid_argument("resize2d: expected [H,W,C]");
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize2d: output extents must be positive");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const double sh = static_cast<double>(h) / static_cast<double>(out_h);
  const double sw = static_cast<double>(w) / static_cast<double>(out_w);

  if (mode == ResizeMode::kNearest) {
    std::vector<int64_t> src(static_cast<size_t>(out_h * out_w * c));
    size_t p = 0;
    for (int64_t i = 0; i < out_h; ++i) {
      int64_t si = static_cast<int64_t>((static_cast<double>(i) + 0.5) * sh);
      si = std::clamp<int64_t>(si, 0, h - 1);
      for (int64_t j = 0; j < out_w; ++j) {
        int64_t sj = static_cast<int64_t>((static_cast<double>(j) + 0.5) * sw);
        sj = std::clamp<int64_t>(sj, 0, w - 1);
        for (int64_t ch = 0; ch < c; ++ch) {
          src[p++] = (si * w + sj) * c + ch;
        }
      }
    }
    return gather_map("resize2d_nearest", x, {out_h, out_w, c},
                      std::move(src));
  }

  // bilinear, half-pixel centers, edge clamped
  struct Tap {
    int64_t i0, i1, j0, j1;
    double wi, wj;  // weight of the low index along each axis
  };
  std::vector<Tap> taps(static_cast<size_t>(out_h * out_w));
  for (int64_t i = 0; i < out_h; ++i) {
    double fi = (static_cast<double>(i) + 0.5) * sh - 0.5;
    fi = std::clamp(fi, 0.0, static_cast<double>(h - 1));
    const int64_t i0 = static_cast<int64_t>(std::floor(fi));
    const int64_t i1 = std::min<int64_t>(i0 + 1, h - 1);
    for (int64_t j = 0; j < out_w; ++j) {
      double fj = (static_cast<double>(j) + 0.5) * sw - 0.5;
      fj = std::clamp(fj, 0.0, static_cast<double>(w - 1));
      const int64_t j0 = static_cast<int64_t>(std::floor(fj));
      const int64_t j1 = std::min<int64_t>(j0 + 1, w - 1);
      taps[static_cast<size_t>(i * out_w + j)] = {
          i0, i1, j0, j1, 1.0 - (fi - static_cast<double>(i0)),
          1.0 - (fj - static_cast<double>(j0))};
    }
  }
  const auto& xd = x.data();
  std::vector<double> out(static_cast<size_t>(out_h * out_w * c));
  for (int64_t p = 0; p < out_h * out_w; ++p) {
    const Tap& t = taps[static_cast<size_t>(p)];
    double* orow = out.data() + p * c;
    const double w00 = t.wi * t.wj, w01 = t.wi * (1 - t.wj);
    const double w10 = (1 - t.wi) * t.wj, w11 = (1 - t.wi) * (1 - t.wj);
    const double* p00 = xd.data() + (t.i0 * w + t.j0) * c;
    const double* p01 = xd.data() + (t.i0 * w + t.j1) * c;
    const double* p10 = xd.data() + (t.i1 * w + t.j0) * c;
    const double* p11 = xd.data() + (t.i1 * w + t.j1) * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      orow[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
    }
  }
  return make_result(
      "resize2d_bilinear", {out_h, out_w, c}, std::move(out), {x},
      [taps = std::move(taps), w, c, out_h, out_w](const BackwardCtx& ctx) {
        if (!ctx.needs(0)) return;
        const auto& g = ctx.grad_out();
        auto& gx = ctx.grad_in(0);
        for (int64_t p = 0; p < out_h * out_w; ++p) {
          const Tap& t = taps[static_cast<size_t>(p)];
          const double* grow = g.data() + p * c;
          const double w00 = t.wi * t.wj, w01 = t.wi * (1 - t.wj);
          const double w10 = (1 - t.wi) * t.wj, w11 = (1 - t.wi) * (1 - t.wj);
          for (int64_t ch = 0; ch < c; ++ch) {
            gx[static_cast<size_t>((t.i0 * w + t.j0) * c + ch)] += w00 * grow[ch];
            gx[static_cast<size_t>((t.i0 * w + t.j1) * c + ch)] += w01 * grow[ch];
            gx[static_cast<size_t>((t.i1 * w + t.j0) * c + ch)] += w10 * grow[ch];
            gx[static_cast<size_t>((t.i1 * w + t.j1) * c + ch)] += w11 * grow[ch];
          }
        }
      });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  Tensor x_rg = Tensor::from_data(x.shape(), x.data(), true);
  Tensor y = f(x_rg);
  if (y.numel() != 1) {
    throw std::invalid_argument("grad_check: f must be scalar-valued");
  }
  y.backward();
  const std::vector<double> analytic = x_rg.grad();

  double max_rel = 0.0;
  std::vector<double> base = x.data();
  for (size_t i = 0; i < base.size(); ++i) {
    NoGradGuard ng;
    std::vector<double> plus = base, minus = base;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(Tensor::from_data(x.shape(), std::move(plus))).value();
    const double fm = f(Tensor::from_data(x.shape(), std::move(minus))).value();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace wemf
