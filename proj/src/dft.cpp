#include "wemf/dft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "wemf/error.hpp"

namespace wemf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void check_axes(const Shape& shape, AxisPair axes) {
  const auto rank = static_cast<int64_t>(shape.size());
  if (axes.first == axes.second) {
    throw std::invalid_argument("dft2: duplicate transform axes");
  }
  for (int64_t a : {axes.first, axes.second}) {
    if (a < 0 || a >= rank) {
      throw std::invalid_argument("dft2: axis " + std::to_string(a) +
                                  " out of range for rank " +
                                  std::to_string(rank));
    }
  }
}

// Radix-2 iterative transform; sign -1 forward, +1 inverse (unnormalized).
void fft_line(std::vector<std::complex<double>>& buf, int sign) {
  const size_t n = buf.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * kTwoPi / static_cast<double>(len);
    const size_t half = len / 2;
    for (size_t i = 0; i < n; i += len) {
      for (size_t j = 0; j < half; ++j) {
        const auto w = std::polar(1.0, ang * static_cast<double>(j));
        const auto u = buf[i + j];
        const auto v = buf[i + j + half] * w;
        buf[i + j] = u + v;
        buf[i + j + half] = u - v;
      }
    }
  }
}

void direct_line(const std::vector<std::complex<double>>& in,
                 std::vector<std::complex<double>>& out, int sign) {
  const int64_t n = static_cast<int64_t>(in.size());
  out.assign(in.size(), {0.0, 0.0});
  for (int64_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (int64_t m = 0; m < n; ++m) {
      const double ang = sign * kTwoPi * static_cast<double>(k * m) /
                         static_cast<double>(n);
      acc += in[static_cast<size_t>(m)] * std::polar(1.0, ang);
    }
    out[static_cast<size_t>(k)] = acc;
  }
}

void transform_axis(ComplexTensor& t, int64_t axis, int sign) {
  const int64_t n = t.shape[static_cast<size_t>(axis)];
  if (n == 1) return;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= t.shape[static_cast<size_t>(d)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < t.shape.size(); ++d) {
    inner *= t.shape[d];
  }
  const bool pow2 = is_pow2(n);
  std::vector<std::complex<double>> line(static_cast<size_t>(n));
  std::vector<std::complex<double>> scratch;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      for (int64_t m = 0; m < n; ++m) {
        const auto idx = static_cast<size_t>(base + m * inner);
        line[static_cast<size_t>(m)] = {t.re[idx], t.im[idx]};
      }
      const std::vector<std::complex<double>>* result = &line;
      if (pow2) {
        fft_line(line, sign);
      } else {
        direct_line(line, scratch, sign);
        result = &scratch;
      }
      for (int64_t m = 0; m < n; ++m) {
        const auto idx = static_cast<size_t>(base + m * inner);
        const auto v = (*result)[static_cast<size_t>(m)];
        t.re[idx] = v.real();
        t.im[idx] = v.imag();
      }
    }
  }
}

}  // namespace

ComplexTensor::ComplexTensor(Shape s)
    : shape(std::move(s)),
      re(static_cast<size_t>(shape_numel(shape)), 0.0),
      im(static_cast<size_t>(shape_numel(shape)), 0.0) {}

ComplexTensor::ComplexTensor(Shape s, std::vector<double> re_,
                             std::vector<double> im_)
    : shape(std::move(s)), re(std::move(re_)), im(std::move(im_)) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  if (re.size() != n || im.size() != n) {
    throw std::invalid_argument("ComplexTensor: plane size mismatch");
  }
}

ComplexTensor ComplexTensor::from_real(const Tensor& x) {
  ComplexTensor out;
  out.shape = x.shape();
  out.re = x.data();
  out.im.assign(out.re.size(), 0.0);
  return out;
}

ComplexTensor dft2(const Tensor& x, AxisPair axes) {
  check_axes(x.shape(), axes);
  ComplexTensor s = ComplexTensor::from_real(x);
  transform_axis(s, axes.first, -1);
  transform_axis(s, axes.second, -1);
  return s;
}

ComplexTensor dft2_complex(const ComplexTensor& x, AxisPair axes) {
  check_axes(x.shape, axes);
  ComplexTensor s = x;
  transform_axis(s, axes.first, -1);
  transform_axis(s, axes.second, -1);
  return s;
}

ComplexTensor idft2_complex(const ComplexTensor& s, AxisPair axes) {
  check_axes(s.shape, axes);
  ComplexTensor x = s;
  transform_axis(x, axes.first, 1);
  transform_axis(x, axes.second, 1);
  const double scale = 1.0 / static_cast<double>(
                                 s.shape[static_cast<size_t>(axes.first)] *
                                 s.shape[static_cast<size_t>(axes.second)]);
  for (double& v : x.re) v *= scale;
  for (double& v : x.im) v *= scale;
  return x;
}

bool is_hermitian(const ComplexTensor& s, AxisPair axes, double tol) {
  check_axes(s.shape, axes);
  double max_abs = 0.0;
  for (size_t i = 0; i < s.re.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(s.at_flat(static_cast<int64_t>(i))));
  }
  const double bound = tol * std::max(1.0, max_abs);
  const auto strides = row_major_strides(s.shape);
  const int64_t n = s.numel();
  const auto sa = static_cast<size_t>(axes.first);
  const auto sb = static_cast<size_t>(axes.second);
  std::vector<int64_t> idx(s.shape.size(), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    const int64_t ka = idx[sa], kb = idx[sb];
    const int64_t ma = ka == 0 ? 0 : s.shape[sa] - ka;
    const int64_t mb = kb == 0 ? 0 : s.shape[sb] - kb;
    const int64_t mirror =
        flat + (ma - ka) * strides[sa] + (mb - kb) * strides[sb];
    const auto v = s.at_flat(flat);
    const auto m = std::conj(s.at_flat(mirror));
    if (std::abs(v - m) > bound) return false;
    for (int64_t d = static_cast<int64_t>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < s.shape[static_cast<size_t>(d)]) {
        break;
      }
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  return true;
}

Tensor idft2(const ComplexTensor& s, AxisPair axes) {
  ComplexTensor x = idft2_complex(s, axes);
  if (is_hermitian(s, axes)) {
    double residue = 0.0;
    for (double v : x.im) residue = std::max(residue, std::abs(v));
    if (residue >= 1e-6) {
      throw NumericalError(
          "idft2: imaginary residue " + std::to_string(residue) +
          " on a Hermitian-symmetric spectrum");
    }
  }
  return Tensor::from_data(x.shape, std::move(x.re));
}

Tensor spectral_filter(const Tensor& x, const Tensor& w_re, const Tensor& w_im,
                       AxisPair axes) {
  check_axes(x.shape(), axes);
  if (w_re.shape() != x.shape() || w_im.shape() != x.shape()) {
    throw std::invalid_argument("spectral_filter: weight shape " +
                                shape_str(w_re.shape()) +
                                " must equal input shape " +
                                shape_str(x.shape()));
  }
  ComplexTensor spectrum = dft2(x, axes);
  const auto n = spectrum.re.size();
  const auto& wr = w_re.data();
  const auto& wi = w_im.data();
  ComplexTensor filtered(x.shape());
  for (size_t i = 0; i < n; ++i) {
    filtered.re[i] = spectrum.re[i] * wr[i] - spectrum.im[i] * wi[i];
    filtered.im[i] = spectrum.re[i] * wi[i] + spectrum.im[i] * wr[i];
  }
  ComplexTensor inv = idft2_complex(filtered, axes);
  // imaginary part discarded: an unconstrained W breaks Hermitian symmetry
  const double norm = static_cast<double>(
      x.shape()[static_cast<size_t>(axes.first)] *
      x.shape()[static_cast<size_t>(axes.second)]);

  return detail::make_result(
      "spectral_filter", x.shape(), std::move(inv.re), {x, w_re, w_im},
      [spectrum = std::move(spectrum), axes,
       norm](const detail::BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const Shape& shape = ctx.out().shape;
        ComplexTensor g_c;
        g_c.shape = shape;
        g_c.re = g;
        g_c.im.assign(g.size(), 0.0);
        // d/d(filtered) = conj(inverse transform of the output gradient)
        ComplexTensor gt = idft2_complex(g_c, axes);
        for (double& v : gt.im) v = -v;

        const auto& wr = ctx.out().parents[1]->data;
        const auto& wi = ctx.out().parents[2]->data;
        if (ctx.needs(1) || ctx.needs(2)) {
          auto* gwr = ctx.needs(1) ? &ctx.grad_in(1) : nullptr;
          auto* gwi = ctx.needs(2) ? &ctx.grad_in(2) : nullptr;
          for (size_t i = 0; i < g.size(); ++i) {
            // conj(S) * G_T
            const double re = spectrum.re[i] * gt.re[i] + spectrum.im[i] * gt.im[i];
            const double im = spectrum.re[i] * gt.im[i] - spectrum.im[i] * gt.re[i];
            if (gwr) (*gwr)[i] += re;
            if (gwi) (*gwi)[i] += im;
          }
        }
        if (ctx.needs(0)) {
          ComplexTensor gs;
          gs.shape = shape;
          gs.re.resize(g.size());
          gs.im.resize(g.size());
          for (size_t i = 0; i < g.size(); ++i) {
            // conj(W) * G_T
            gs.re[i] = wr[i] * gt.re[i] + wi[i] * gt.im[i];
            gs.im[i] = wr[i] * gt.im[i] - wi[i] * gt.re[i];
          }
          ComplexTensor gx = idft2_complex(gs, axes);
          auto& dst = ctx.grad_in(0);
          for (size_t i = 0; i < g.size(); ++i) dst[i] += norm * gx.re[i];
        }
      });
}

}  // namespace wemf
