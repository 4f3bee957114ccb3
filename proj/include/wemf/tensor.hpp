#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wemf/rng.hpp"

namespace wemf {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int64_t> row_major_strides(const Shape& s);

namespace detail {

struct TensorImpl;

// Per-backward-run context handed to a node's backward function. Gradients
// flow through run-local buffers and are folded into the persistent grads
// once the whole sweep finishes, so calling backward twice on the same graph
// doubles every accumulated gradient exactly.
class BackwardCtx {
 public:
  BackwardCtx(TensorImpl& out, const std::vector<double>& out_grad,
              std::function<std::vector<double>&(TensorImpl*)> buffer_of)
      : out_(out), out_grad_(out_grad), buffer_of_(std::move(buffer_of)) {}

  TensorImpl& out() const { return out_; }
  const std::vector<double>& grad_out() const { return out_grad_; }

  bool needs(size_t parent_index) const;
  // Run-local gradient buffer for parent i, zero-initialized on first use.
  std::vector<double>& grad_in(size_t parent_index) const;

 private:
  TensorImpl& out_;
  const std::vector<double>& out_grad_;
  std::function<std::vector<double>&(TensorImpl*)> buffer_of_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation

  // tape
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(const BackwardCtx&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void accumulate_grad(const std::vector<double>& g);
};

}  // namespace detail

// Dense, row-major, double-precision tensor. A cheap shared handle: copies
// alias the same storage. Values are immutable after construction; only the
// gradient accumulates. Results of operations on requires_grad tensors carry
// a dynamically recorded tape used by backward().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // Rejects non-finite entries.
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t numel() const { return impl_->numel(); }
  const std::vector<double>& data() const { return impl_->data; }

  // Scalar (1-element) tensors only.
  double value() const;

  template <typename... Is>
  double at(Is... idx) const {
    const int64_t flat = flat_index({static_cast<int64_t>(idx)...});
    return impl_->data[static_cast<size_t>(flat)];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and accumulates gradients into every
  // requires_grad tensor reachable through the tape. Scalar tensors only.
  void backward() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  int64_t flat_index(std::initializer_list<int64_t> idx) const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// While alive on a thread, operations record no tape and results are plain
// leaves. Used for inference and metric evaluation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

namespace detail {

// Shared constructor for every operation: validates finiteness (NaN policy:
// abort naming the originating op), wires the tape when grad mode is on and
// any parent requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents,
                   std::function<void(const BackwardCtx&)> backward_fn);

void check_finite(const char* op, const std::vector<double>& data);

}  // namespace detail

}  // namespace wemf
