#pragma once

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include "wemf/tensor.hpp"

namespace wemf {

// Dense complex array, row-major, split storage so the real and imaginary
// planes can live in Tensor parameters.
struct ComplexTensor {
  Shape shape;
  std::vector<double> re;
  std::vector<double> im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s);
  ComplexTensor(Shape s, std::vector<double> re_, std::vector<double> im_);
  static ComplexTensor from_real(const Tensor& x);

  int64_t numel() const { return static_cast<int64_t>(re.size()); }
  std::complex<double> at_flat(int64_t i) const {
    return {re[static_cast<size_t>(i)], im[static_cast<size_t>(i)]};
  }
};

using AxisPair = std::pair<int64_t, int64_t>;

// Unnormalized forward transform over the axis pair, all other axes batched.
ComplexTensor dft2(const Tensor& x, AxisPair axes);
ComplexTensor dft2_complex(const ComplexTensor& x, AxisPair axes);

// Inverse carries the 1/(Na*Nb) factor.
ComplexTensor idft2_complex(const ComplexTensor& s, AxisPair axes);

// Real part of the inverse. When the spectrum is Hermitian-symmetric the
// imaginary residue must stay below 1e-6 max abs (checked); otherwise the
// imaginary part is discarded.
Tensor idft2(const ComplexTensor& s, AxisPair axes);

bool is_hermitian(const ComplexTensor& s, AxisPair axes, double tol = 1e-9);

// Differentiable y = Re(idft2(dft2(x) * (w_re + i*w_im))). The weight shape
// must equal the input shape (one complex weight per spectral bin and batch
// index). Gradients flow to x, w_re, and w_im.
Tensor spectral_filter(const Tensor& x, const Tensor& w_re, const Tensor& w_im,
                       AxisPair axes);

}  // namespace wemf
