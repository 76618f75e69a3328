#pragma once

// Dense double-precision tensors with a reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Every op that
// receives at least one input requiring gradients records a Node holding its
// inputs and a backward closure; calling backward() on a scalar result walks
// the recorded graph in reverse topological order and accumulates into the
// grad buffers of every tensor that requires them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vos::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first accumulated into
    bool requires_grad = false;
    std::shared_ptr<Node> node; // null for leaves

    void ensure_grad();
};

struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads out.grad and accumulates into inputs[i]->grad for every input that
    // requires grad. Input grad buffers are allocated before the call.
    std::function<void(const TensorImpl& out)> backward;
};

} // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> values() const;
    std::span<double> values();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad();
    void zero_grad();

    // Seeds d(self)/d(self) = 1; requires a single-element tensor.
    void backward() const;
    // Seeds with an explicit upstream gradient of this tensor's shape.
    void backward(std::span<const double> upstream) const;

    // Fresh leaf holding a copy of the values.
    Tensor detach() const;
    // Drops the recorded graph behind this tensor, keeping values.
    void release_graph();

    // Internal: used by op implementations.
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

// Records the branch decisions of piecewise ops (relu gates, pooling argmax,
// clamp saturation) while active. Finite differences across a branch change
// are meaningless, so the gradient checker uses this to tell them apart.
class BranchTrace {
public:
    BranchTrace();
    ~BranchTrace();
    BranchTrace(const BranchTrace&) = delete;
    BranchTrace& operator=(const BranchTrace&) = delete;

    std::uint64_t digest() const { return hash_; }
    void mix(std::uint64_t v);

    static BranchTrace* active();

private:
    std::uint64_t hash_ = 1469598103934665603ull;
    BranchTrace* previous_;
};

// Builds an op result. When grad mode is on and any input requires grad, the
// output is attached to a node carrying `backward`.
Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::vector<Tensor> inputs,
                   std::function<void(const detail::TensorImpl& out)> backward);

} // namespace vos::ad
