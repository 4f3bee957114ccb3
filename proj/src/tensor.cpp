#include "wemf/tensor.hpp"

#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "wemf/error.hpp"

namespace wemf {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

namespace {

thread_local int g_no_grad_depth = 0;

void validate_shape(const Shape& shape) {
  for (int64_t e : shape) {
    if (e <= 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_str(shape));
    }
  }
}

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

namespace detail {

void TensorImpl::accumulate_grad(const std::vector<double>& g) {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  assert(g.size() == grad.size());
  for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

bool BackwardCtx::needs(size_t parent_index) const {
  return out_.parents[parent_index]->requires_grad;
}

std::vector<double>& BackwardCtx::grad_in(size_t parent_index) const {
  return buffer_of_(out_.parents[parent_index].get());
}

void check_finite(const char* op, const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by op '") +
                           op + "'");
    }
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents,
                   std::function<void(const BackwardCtx&)> backward_fn) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument(std::string("op '") + op +
                                "': data length does not match shape " +
                                shape_str(shape));
  }
  check_finite(op, data);

  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->op = op;

  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
  }
  if (rg) {
    impl->requires_grad = true;
    impl->parents.reserve(parents.size());
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  if (!std::isfinite(value)) {
    throw NumericalError("tensor values must be finite");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError("tensor values must be finite");
    }
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  validate_shape(shape);
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
  for (double& v : data) v = rng.normal(0.0, stddev);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

double Tensor::value() const {
  if (numel() != 1) {
    throw std::invalid_argument("value() requires a scalar tensor, got shape " +
                                shape_str(shape()));
  }
  return impl_->data[0];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> idx) const {
  const Shape& s = impl_->shape;
  if (idx.size() != s.size()) {
    throw std::invalid_argument("index rank mismatch for shape " +
                                shape_str(s));
  }
  int64_t flat = 0;
  size_t d = 0;
  for (int64_t i : idx) {
    if (i < 0 || i >= s[d]) {
      throw std::out_of_range("index out of range for shape " + shape_str(s));
    }
    flat = flat * s[d] + i;
    ++d;
  }
  return flat;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::backward() const {
  using detail::TensorImpl;
  if (numel() != 1) {
    throw std::invalid_argument(
        "backward() requires a scalar loss, got shape " + shape_str(shape()));
  }

  // Iterative post-order DFS. The on-stack set asserts acyclicity, which
  // holds by construction of the tape.
  std::vector<TensorImpl*> topo;
  std::unordered_set<TensorImpl*> visited;
  std::unordered_set<TensorImpl*> on_stack;
  struct Frame {
    TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({impl_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent == 0) {
      if (visited.count(f.node)) {
        stack.pop_back();
        continue;
      }
      on_stack.insert(f.node);
    }
    if (f.next_parent < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (!visited.count(p)) {
        assert(!on_stack.count(p) && "cycle in autodiff graph");
        stack.push_back({p, 0});
      }
    } else {
      visited.insert(f.node);
      on_stack.erase(f.node);
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // Run-local gradient buffers; folded into persistent grads at the end.
  std::unordered_map<TensorImpl*, std::vector<double>> local;
  auto buffer_of = [&local](TensorImpl* node) -> std::vector<double>& {
    auto it = local.find(node);
    if (it == local.end()) {
      it = local.emplace(node, std::vector<double>(node->data.size(), 0.0))
               .first;
    }
    return it->second;
  };

  buffer_of(impl_.get())[0] = 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorImpl* node = *it;
    auto found = local.find(node);
    if (found == local.end()) continue;  // no gradient reached this node
    if (node->backward_fn) {
      detail::BackwardCtx ctx(*node, found->second, buffer_of);
      node->backward_fn(ctx);
    }
  }

  for (auto& [node, g] : local) {
    if (node->requires_grad) node->accumulate_grad(g);
  }
}

}  // namespace wemf
