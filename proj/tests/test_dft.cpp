#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "wemf/dft.hpp"
#include "wemf/error.hpp"
#include "wemf/ops.hpp"
#include "wemf/rng.hpp"
#include "wemf/tensor.hpp"

using namespace wemf;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Direct-summation oracle for one [Na,Nb] plane, sign -1 forward.
std::vector<std::complex<double>> oracle_plane(
    const std::vector<std::complex<double>>& x, int na, int nb, int sign) {
  std::vector<std::complex<double>> out(static_cast<size_t>(na * nb));
  for (int ka = 0; ka < na; ++ka)
    for (int kb = 0; kb < nb; ++kb) {
      std::complex<double> acc{0.0, 0.0};
      for (int a = 0; a < na; ++a)
        for (int b = 0; b < nb; ++b) {
          const double ang = sign * 2.0 * kPi *
                             (static_cast<double>(ka * a) / na +
                              static_cast<double>(kb * b) / nb);
          acc += x[a * nb + b] * std::polar(1.0, ang);
        }
      out[ka * nb + kb] = acc;
    }
  return out;
}

// Forward-transform a [Na,Nb,C] tensor over axes (0,1), one channel at a time.
std::vector<std::complex<double>> oracle_dft2_hwc(const Tensor& t) {
  const int na = static_cast<int>(t.shape()[0]);
  const int nb = static_cast<int>(t.shape()[1]);
  const int c = t.ndim() == 3 ? static_cast<int>(t.shape()[2]) : 1;
  std::vector<std::complex<double>> out(static_cast<size_t>(na * nb * c));
  for (int ch = 0; ch < c; ++ch) {
    std::vector<std::complex<double>> plane(static_cast<size_t>(na * nb));
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < nb; ++b)
        plane[a * nb + b] = t.data()[(a * nb + b) * c + ch];
    auto s = oracle_plane(plane, na, nb, -1);
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < nb; ++b)
        out[(a * nb + b) * c + ch] = s[a * nb + b];
  }
  return out;
}

Tensor random_tensor(Shape shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

double max_abs_diff(const ComplexTensor& got,
                    const std::vector<std::complex<double>>& want) {
  double m = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    m = std::max(m, std::abs(got.at_flat(i) - want[static_cast<size_t>(i)]));
  }
  return m;
}

}  // namespace

TEST_CASE("constant plane concentrates in the DC bin") {
  Tensor x = Tensor::full({4, 4}, 2.5);
  ComplexTensor s = dft2(x, {0, 1});
  CHECK(s.at_flat(0).real() == doctest::Approx(16 * 2.5).epsilon(1e-12));
  CHECK(s.at_flat(0).imag() == doctest::Approx(0.0));
  for (int64_t i = 1; i < s.numel(); ++i) {
    CHECK(std::abs(s.at_flat(i)) < 1e-10);
  }
}

TEST_CASE("unit impulse transforms to a flat spectrum") {
  std::vector<double> d(64, 0.0);
  d[0] = 1.0;
  ComplexTensor s = dft2(Tensor::from_data({8, 8}, d), {0, 1});
  for (int64_t i = 0; i < s.numel(); ++i) {
    CHECK(s.at_flat(i).real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(s.at_flat(i).imag()) < 1e-12);
  }
}

TEST_CASE("matches the direct-summation oracle on both code paths") {
  // 3x5 exercises the direct path, 8x8 the radix-2 path, 8x6 a mix
  for (auto [h, w] : {std::pair{3, 5}, {8, 8}, {8, 6}, {16, 4}, {7, 7}}) {
    Tensor x = random_tensor({h, w}, static_cast<uint64_t>(h * 100 + w));
    ComplexTensor s = dft2(x, {0, 1});
    auto want = oracle_dft2_hwc(x);
    CHECK(max_abs_diff(s, want) < 1e-10);
  }
}

TEST_CASE("batched transform leaves other axes independent") {
  Tensor x = random_tensor({4, 6, 3}, 77);
  ComplexTensor s = dft2(x, {0, 1});
  auto want = oracle_dft2_hwc(x);
  CHECK(max_abs_diff(s, want) < 1e-10);
}

TEST_CASE("axis-pair views equal the permuted plane transform") {
  Tensor x = random_tensor({4, 5, 6}, 78);
  // transform over (2,1): compare against permuting to [C,W,H] and using (0,1)
  ComplexTensor a = dft2(x, {2, 1});
  Tensor xp = permute(x, {2, 1, 0});
  ComplexTensor b = dft2(xp, {0, 1});
  // b indexed [c,w,h] must equal a indexed [h,w,c]
  for (int64_t h = 0; h < 4; ++h)
    for (int64_t w = 0; w < 5; ++w)
      for (int64_t c = 0; c < 6; ++c) {
        const auto va = a.at_flat((h * 5 + w) * 6 + c);
        const auto vb = b.at_flat((c * 5 + w) * 4 + h);
        CHECK(std::abs(va - vb) < 1e-10);
      }
}

TEST_CASE("round trip restores the input") {
  Tensor x = random_tensor({6, 6}, 79);
  Tensor back = idft2(dft2(x, {0, 1}), {0, 1});
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(back.data()[static_cast<size_t>(i)] -
                   x.data()[static_cast<size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("inverse of hand-built spectra") {
  ComplexTensor zero({3, 4});
  Tensor z = idft2(zero, {0, 1});
  for (double v : z.data()) CHECK(v == 0.0);

  ComplexTensor dc({2, 2});
  dc.re[0] = 4.0;
  Tensor ones = idft2(dc, {0, 1});
  for (double v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Parseval energy identity") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    Tensor x = random_tensor({8, 12}, seed);
    ComplexTensor s = dft2(x, {0, 1});
    double lhs = 0.0;
    for (int64_t i = 0; i < s.numel(); ++i) lhs += std::norm(s.at_flat(i));
    double rhs = 0.0;
    for (double v : x.data()) rhs += v * v;
    rhs *= 8 * 12;
    CHECK(std::abs(lhs - rhs) / rhs < 1e-8);
  }
}

TEST_CASE("linearity of the transform") {
  Tensor x = random_tensor({5, 4}, 11);
  Tensor y = random_tensor({5, 4}, 12);
  const double a = 1.7, b = -0.3;
  ComplexTensor lhs = dft2(add(mul_scalar(x, a), mul_scalar(y, b)), {0, 1});
  ComplexTensor sx = dft2(x, {0, 1});
  ComplexTensor sy = dft2(y, {0, 1});
  for (int64_t i = 0; i < lhs.numel(); ++i) {
    const auto want = a * sx.at_flat(i) + b * sy.at_flat(i);
    CHECK(std::abs(lhs.at_flat(i) - want) < 1e-10);
  }
}

TEST_CASE("real input yields a Hermitian spectrum; perturbation breaks it") {
  Tensor x = random_tensor({6, 8}, 13);
  ComplexTensor s = dft2(x, {0, 1});
  CHECK(is_hermitian(s, {0, 1}));
  s.im[1 * 8 + 1] += 0.5;
  CHECK_FALSE(is_hermitian(s, {0, 1}));
}

TEST_CASE("idft2 flags excessive residue only for Hermitian spectra") {
  // non-Hermitian spectrum: imaginary part silently discarded
  ComplexTensor s({4, 4});
  s.im[5] = 3.0;
  Tensor out = idft2(s, {0, 1});
  CHECK(out.numel() == 16);
}

TEST_CASE("axis validation") {
  Tensor x = random_tensor({4, 4}, 21);
  CHECK_THROWS_AS(dft2(x, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(dft2(x, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(dft2(x, {-1, 1}), std::invalid_argument);
}

TEST_CASE("spectral filter with unit weight is the identity") {
  Tensor x = random_tensor({4, 6, 2}, 31);
  Tensor w1 = Tensor::full(x.shape(), 1.0);
  Tensor w0 = Tensor::zeros(x.shape());
  Tensor y = spectral_filter(x, w1, w0, {0, 1});
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(y.data()[static_cast<size_t>(i)] -
                   x.data()[static_cast<size_t>(i)]) < 1e-8);
  }
  Tensor z = spectral_filter(x, w0, w0, {0, 1});
  for (double v : z.data()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("spectral filter with one bin doubled matches the oracle") {
  Tensor x = random_tensor({2, 2, 4}, 32);
  std::vector<double> wr(16, 1.0);
  // double bin (1,0) of channel 2
  wr[(1 * 2 + 0) * 4 + 2] = 2.0;
  Tensor w_re = Tensor::from_data({2, 2, 4}, wr);
  Tensor w_im = Tensor::zeros({2, 2, 4});
  Tensor y = spectral_filter(x, w_re, w_im, {0, 1});

  auto spec = oracle_dft2_hwc(x);
  for (size_t i = 0; i < spec.size(); ++i) spec[i] *= wr[i];
  // inverse via the oracle with sign +1 and 1/(NaNb)
  for (int ch = 0; ch < 4; ++ch) {
    std::vector<std::complex<double>> plane(4);
    for (int p = 0; p < 4; ++p) plane[p] = spec[p * 4 + ch];
    auto back = oracle_plane(plane, 2, 2, +1);
    for (int p = 0; p < 4; ++p) {
      CHECK(std::abs(y.data()[p * 4 + ch] - back[p].real() / 4.0) < 1e-10);
    }
  }
}

TEST_CASE("spectral filter gradients match finite differences") {
  Tensor x = random_tensor({4, 4, 2}, 33);
  Tensor wr = add_scalar(mul_scalar(random_tensor({4, 4, 2}, 34), 0.1), 1.0);
  Tensor wi = mul_scalar(random_tensor({4, 4, 2}, 35), 0.1);
  auto loss = [&](const Tensor& t, const Tensor& a, const Tensor& b) {
    Tensor y = spectral_filter(t, a, b, {0, 1});
    return sum(mul(y, y));
  };
  CHECK(grad_check([&](const Tensor& t) { return loss(t, wr, wi); }, x) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return loss(x, t, wi); }, wr) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return loss(x, wr, t); }, wi) < 1e-4);
  // view over a non-leading axis pair
  CHECK(grad_check(
            [&](const Tensor& t) {
              Tensor y = spectral_filter(t, wr, wi, {2, 1});
              return sum(mul(y, y));
            },
            x) < 1e-4);
}

TEST_CASE("spectral filter rejects mismatched weight shapes") {
  Tensor x = random_tensor({4, 4, 2}, 36);
  Tensor bad = Tensor::zeros({4, 4, 1});
  CHECK_THROWS_AS(spectral_filter(x, bad, bad, {0, 1}),
                  std::invalid_argument);
}
