#include "wemf/ssm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "wemf/ops.hpp"

namespace wemf {

namespace {

using detail::BackwardCtx;
using detail::make_result;

double softplus_val(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_shape(const char* what, const Tensor& t, const Shape& want) {
  if (t.shape() != want) {
    throw std::invalid_argument(std::string("selective_scan: ") + what +
                                " has shape " + shape_str(t.shape()) +
                                ", expected " + shape_str(want));
  }
}

}  // namespace

void SsmDirectionParams::validate() const {
  const int64_t di = d_inner(), ds = d_state(), dr = dt_rank();
  require_shape("x_proj_w", x_proj_w, {di, dr + 2 * ds});
  require_shape("dt_proj_w", dt_proj_w, {dr, di});
  require_shape("dt_proj_b", dt_proj_b, {di});
  require_shape("a_log", a_log, {di, ds});
  require_shape("d_skip", d_skip, {di});
}

Tensor selective_scan_core(const Tensor& u, const Tensor& delta_raw,
                           const Tensor& b, const Tensor& c,
                           const Tensor& a_log, const Tensor& d_skip) {
  if (u.ndim() != 2 || a_log.ndim() != 2) {
    throw std::invalid_argument("selective_scan: u [L,d_inner], a_log [d_inner,d_state] required");
  }
  const int64_t len = u.shape()[0];
  const int64_t di = u.shape()[1];
  const int64_t ds = a_log.shape()[1];
  require_shape("delta_raw", delta_raw, {len, di});
  require_shape("b", b, {len, ds});
  require_shape("c", c, {len, ds});
  require_shape("a_log", a_log, {di, ds});
  require_shape("d_skip", d_skip, {di});

  const auto& ud = u.data();
  const auto& drd = delta_raw.data();
  const auto& bd = b.data();
  const auto& cd = c.data();
  const auto& ald = a_log.data();
  const auto& dd = d_skip.data();

  std::vector<double> a(static_cast<size_t>(di * ds));
  for (size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(ald[i]);
  std::vector<double> delta(static_cast<size_t>(len * di));
  for (size_t i = 0; i < delta.size(); ++i) delta[i] = softplus_val(drd[i]);

  std::vector<double> h(static_cast<size_t>(len * di * ds), 0.0);
  std::vector<double> y(static_cast<size_t>(len * di));
  for (int64_t t = 0; t < len; ++t) {
    const double* bt = bd.data() + t * ds;
    const double* ct = cd.data() + t * ds;
    for (int64_t i = 0; i < di; ++i) {
      const double dt = delta[static_cast<size_t>(t * di + i)];
      const double uv = ud[static_cast<size_t>(t * di + i)];
      const double du = dt * uv;
      const double* arow = a.data() + i * ds;
      const double* hprev =
          t > 0 ? h.data() + ((t - 1) * di + i) * ds : nullptr;
      double* hcur = h.data() + (t * di + i) * ds;
      double acc = 0.0;
      for (int64_t n = 0; n < ds; ++n) {
        const double abar = std::exp(dt * arow[n]);
        const double hv = (hprev ? abar * hprev[n] : 0.0) + du * bt[n];
        hcur[n] = hv;
        acc += ct[n] * hv;
      }
      y[static_cast<size_t>(t * di + i)] = acc + dd[static_cast<size_t>(i)] * uv;
    }
  }

  return make_result(
      "selective_scan", {len, di}, std::move(y),
      {u, delta_raw, b, c, a_log, d_skip},
      [len, di, ds, a = std::move(a), delta = std::move(delta),
       h = std::move(h)](const BackwardCtx& ctx) {
        const auto& g = ctx.grad_out();
        const auto& ud = ctx.out().parents[0]->data;
        const auto& drd = ctx.out().parents[1]->data;
        const auto& bd = ctx.out().parents[2]->data;
        const auto& cd = ctx.out().parents[3]->data;
        const auto& dd = ctx.out().parents[5]->data;

        auto* gu = ctx.needs(0) ? &ctx.grad_in(0) : nullptr;
        auto* gdr = ctx.needs(1) ? &ctx.grad_in(1) : nullptr;
        auto* gb = ctx.needs(2) ? &ctx.grad_in(2) : nullptr;
        auto* gc = ctx.needs(3) ? &ctx.grad_in(3) : nullptr;
        auto* gal = ctx.needs(4) ? &ctx.grad_in(4) : nullptr;
        auto* gd = ctx.needs(5) ? &ctx.grad_in(5) : nullptr;

        std::vector<double> carry(static_cast<size_t>(di * ds), 0.0);
        for (int64_t t = len - 1; t >= 0; --t) {
          const double* bt = bd.data() + t * ds;
          const double* ct = cd.data() + t * ds;
          for (int64_t i = 0; i < di; ++i) {
            const double dt = delta[static_cast<size_t>(t * di + i)];
            const double uv = ud[static_cast<size_t>(t * di + i)];
            const double gy = g[static_cast<size_t>(t * di + i)];
            const double* arow = a.data() + i * ds;
            const double* hprev =
                t > 0 ? h.data() + ((t - 1) * di + i) * ds : nullptr;
            const double* hcur = h.data() + (t * di + i) * ds;
            double* carr = carry.data() + i * ds;
            double gdelta = 0.0, gu_acc = 0.0;
            for (int64_t n = 0; n < ds; ++n) {
              const double gh = gy * ct[n] + carr[n];
              const double abar = std::exp(dt * arow[n]);
              const double hp = hprev ? hprev[n] : 0.0;
              const double gabar = gh * hp;
              gdelta += gabar * arow[n] * abar + gh * bt[n] * uv;
              gu_acc += gh * dt * bt[n];
              if (gal) (*gal)[static_cast<size_t>(i * ds + n)] +=
                  gabar * dt * abar * arow[n];
              if (gb) (*gb)[static_cast<size_t>(t * ds + n)] += gh * dt * uv;
              if (gc) (*gc)[static_cast<size_t>(t * ds + n)] += gy * hcur[n];
              carr[n] = gh * abar;
            }
            if (gu) (*gu)[static_cast<size_t>(t * di + i)] +=
                gu_acc + gy * dd[static_cast<size_t>(i)];
            if (gdr) (*gdr)[static_cast<size_t>(t * di + i)] +=
                gdelta * sigmoid_val(drd[static_cast<size_t>(t * di + i)]);
            if (gd) (*gd)[static_cast<size_t>(i)] += gy * uv;
          }
        }
      });
}

Tensor selective_scan(const Tensor& u, const SsmDirectionParams& p) {
  p.validate();
  const int64_t dr = p.dt_rank(), ds = p.d_state();
  Tensor xdbl = linear(u, p.x_proj_w, Tensor());
  Tensor dt_in = slice(xdbl, 1, 0, dr);
  Tensor b = slice(xdbl, 1, dr, ds);
  Tensor c = slice(xdbl, 1, dr + ds, ds);
  Tensor delta_raw = linear(dt_in, p.dt_proj_w, p.dt_proj_b);
  return selective_scan_core(u, delta_raw, b, c, p.a_log, p.d_skip);
}

std::vector<int64_t> scan_order(int64_t h, int64_t w, int direction) {
  const int64_t n = h * w;
  std::vector<int64_t> order(static_cast<size_t>(n));
  switch (direction) {
    case 0:
      for (int64_t l = 0; l < n; ++l) order[static_cast<size_t>(l)] = l;
      break;
    case 1:
      for (int64_t l = 0; l < n; ++l) order[static_cast<size_t>(l)] = n - 1 - l;
      break;
    case 2:
      for (int64_t j = 0; j < w; ++j)
        for (int64_t i = 0; i < h; ++i)
          order[static_cast<size_t>(j * h + i)] = i * w + j;
      break;
    case 3:
      for (int64_t j = 0; j < w; ++j)
        for (int64_t i = 0; i < h; ++i)
          order[static_cast<size_t>(n - 1 - (j * h + i))] = i * w + j;
      break;
    default:
      throw std::invalid_argument("scan_order: direction must be 0..3");
  }
  return order;
}

std::vector<int64_t> inverse_order(const std::vector<int64_t>& order) {
  std::vector<int64_t> inv(order.size());
  for (size_t k = 0; k < order.size(); ++k) {
    inv[static_cast<size_t>(order[k])] = static_cast<int64_t>(k);
  }
  return inv;
}

Tensor ss2d(const Tensor& x, const std::array<SsmDirectionParams, 4>& dirs) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("ss2d: expected [h,w,d_inner]");
  }
  const int64_t h = x.shape()[0], w = x.shape()[1], di = x.shape()[2];
  Tensor flat = reshape(x, {h * w, di});
  Tensor acc;
  for (int d = 0; d < 4; ++d) {
    const auto order = scan_order(h, w, d);
    Tensor seq = gather_rows(flat, order);
    Tensor out = selective_scan(seq, dirs[static_cast<size_t>(d)]);
    Tensor restored = gather_rows(out, inverse_order(order));
    acc = d == 0 ? restored : add(acc, restored);
  }
  return reshape(acc, {h, w, di});
}

Tensor vss_block(const Tensor& x, const VssBlockParams& p) {
  Tensor xn = layer_norm(x, p.ln_gamma, p.ln_beta, 1e-5);
  Tensor xz = linear(xn, p.in_proj_w, Tensor());
  auto parts = split(xz, 2, 2);
  Tensor xc = add_channel_bias(depthwise_conv2d(parts[0], p.conv_kernel),
                               p.conv_bias);
  Tensor scanned = ss2d(silu(xc), p.dirs);
  Tensor yn = layer_norm(scanned, p.scan_ln_gamma, p.scan_ln_beta, 1e-5);
  Tensor gated = mul(yn, silu(parts[1]));
  return add(x, linear(gated, p.out_proj_w, Tensor()));
}

SsmDirectionParams init_ssm_direction(int64_t d_inner, int64_t d_state,
                                      int64_t dt_rank, Rng& rng) {
  SsmDirectionParams p;
  const double x_std = 1.0 / std::sqrt(static_cast<double>(d_inner));
  {
    Tensor t = Tensor::randn({d_inner, dt_rank + 2 * d_state}, rng);
    p.x_proj_w = Tensor::from_data(t.shape(),
                                   [&] {
                                     auto d = t.data();
                                     for (double& v : d) v *= x_std;
                                     return d;
                                   }(),
                                   true);
  }
  const double dt_std = 1.0 / std::sqrt(static_cast<double>(dt_rank));
  {
    Tensor t = Tensor::randn({dt_rank, d_inner}, rng);
    p.dt_proj_w = Tensor::from_data(t.shape(),
                                    [&] {
                                      auto d = t.data();
                                      for (double& v : d) v *= dt_std;
                                      return d;
                                    }(),
                                    true);
  }
  {
    // bias chosen so softplus(bias) is log-uniform in [1e-3, 1e-1]
    std::vector<double> bias(static_cast<size_t>(d_inner));
    for (double& v : bias) {
      const double dt = std::exp(std::log(1e-3) +
                                 rng.uniform() * (std::log(1e-1) - std::log(1e-3)));
      v = std::log(std::expm1(dt));  // softplus inverse
    }
    p.dt_proj_b = Tensor::from_data({d_inner}, std::move(bias), true);
  }
  {
    std::vector<double> al(static_cast<size_t>(d_inner * d_state));
    for (int64_t i = 0; i < d_inner; ++i)
      for (int64_t n = 0; n < d_state; ++n)
        al[static_cast<size_t>(i * d_state + n)] =
            std::log(static_cast<double>(n + 1));
    p.a_log = Tensor::from_data({d_inner, d_state}, std::move(al), true);
  }
  p.d_skip = Tensor::full({d_inner}, 1.0, true);
  return p;
}

VssBlockParams init_vss_block(int64_t channels, int64_t d_state, Rng& rng) {
  const int64_t di = 2 * channels;
  const int64_t dr = std::max<int64_t>(1, di / 16);
  VssBlockParams p;
  p.ln_gamma = Tensor::full({channels}, 1.0, true);
  p.ln_beta = Tensor::zeros({channels}, true);
  auto scaled_randn = [&rng](Shape shape, double std) {
    Tensor t = Tensor::randn(std::move(shape), rng);
    auto d = t.data();
    for (double& v : d) v *= std;
    return Tensor::from_data(t.shape(), std::move(d), true);
  };
  p.in_proj_w = scaled_randn({channels, 2 * di},
                             1.0 / std::sqrt(static_cast<double>(channels)));
  p.conv_kernel = scaled_randn({3, 3, di}, 1.0 / 3.0);
  p.conv_bias = Tensor::zeros({di}, true);
  for (auto& dir : p.dirs) dir = init_ssm_direction(di, d_state, dr, rng);
  p.scan_ln_gamma = Tensor::full({di}, 1.0, true);
  p.scan_ln_beta = Tensor::zeros({di}, true);
  p.out_proj_w =
      scaled_randn({di, channels}, 1.0 / std::sqrt(static_cast<double>(di)));
  return p;
}

}  // namespace wemf
