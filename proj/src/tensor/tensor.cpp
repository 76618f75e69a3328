#include "tensor/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::ad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local BranchTrace* t_trace = nullptr;

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

void detail::TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape)
        if (d == 0) fail_invalid(fmt::format("tensor shape {} has a zero extent", shape_str(shape)));
    if (values.size() != shape_numel(shape))
        fail_invalid(fmt::format("tensor shape {} needs {} values, got {}", shape_str(shape), shape_numel(shape),
                                 values.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size())
        fail_invalid(fmt::format("axis {} out of range for shape {}", axis, shape_str(impl_->shape)));
    return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::values() const { return impl_->data; }
std::span<double> Tensor::values() { return impl_->data; }

double Tensor::item() const {
    if (numel() != 1) fail_invalid(fmt::format("item() on tensor of shape {}", shape_str(shape())));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::grad() { return impl_->grad; }

void Tensor::zero_grad() {
    if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1)
        fail_invalid(fmt::format("backward() without upstream needs a scalar, got shape {}", shape_str(shape())));
    const double one = 1.0;
    backward(std::span<const double>(&one, 1));
}

void Tensor::backward(std::span<const double> upstream) const {
    if (upstream.size() != numel())
        fail_invalid(fmt::format("upstream gradient has {} values, tensor has {}", upstream.size(), numel()));

    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        if (t->node && next < t->node->inputs.size()) {
            auto* in = t->node->inputs[next++].get();
            if (in->requires_grad && seen.insert(in).second) stack.emplace_back(in, 0);
            continue;
        }
        order.push_back(t);
        stack.pop_back();
    }

    impl_->ensure_grad();
    for (std::size_t i = 0; i < upstream.size(); ++i) impl_->grad[i] += upstream[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* t = *it;
        if (!t->node) continue;
        for (auto& in : t->node->inputs)
            if (in->requires_grad) in->ensure_grad();
        t->node->backward(*t);
    }
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

void Tensor::release_graph() { impl_->node.reset(); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

BranchTrace::BranchTrace() : previous_(t_trace) { t_trace = this; }
BranchTrace::~BranchTrace() { t_trace = previous_; }

void BranchTrace::mix(std::uint64_t v) {
    // FNV-1a over the 8 bytes of v.
    for (int i = 0; i < 8; ++i) {
        hash_ ^= (v >> (8 * i)) & 0xffu;
        hash_ *= 1099511628211ull;
    }
}

BranchTrace* BranchTrace::active() { return t_trace; }

Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::vector<Tensor> inputs,
                   std::function<void(const detail::TensorImpl& out)> backward) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    if (t_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            impl->requires_grad = true;
            auto node = std::make_shared<detail::Node>();
            node->op = op;
            node->inputs.reserve(inputs.size());
            for (auto& in : inputs) node->inputs.push_back(in.impl());
            node->backward = std::move(backward);
            impl->node = std::move(node);
        }
    }
    return Tensor(std::move(impl));
}

} // namespace vos::ad
