#include "tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::ad {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs, std::uint64_t& digest) {
    NoGradGuard no_grad;
    BranchTrace trace;
    const Tensor out = fn(inputs);
    digest = trace.digest();
    return out.item();
}

} // namespace

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps) {
    if (!(eps > 0.0)) fail_invalid("grad_check: eps must be positive");
    std::vector<bool> previous;
    for (const auto& t : inputs) {
        for (double v : t.values())
            if (!std::isfinite(v)) fail_invalid("grad_check: inputs must be finite");
        previous.push_back(t.requires_grad());
    }
    for (auto t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }

    std::uint64_t base_digest = 0;
    Tensor out;
    {
        BranchTrace trace;
        out = fn(inputs);
        base_digest = trace.digest();
    }
    if (out.numel() != 1)
        fail_invalid(fmt::format("grad_check: closure must return a scalar, got shape {}", shape_str(out.shape())));
    out.backward();

    GradCheckResult result;
    for (auto t : inputs) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto vals = t.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            std::uint64_t dp = 0, dm = 0;
            vals[i] = orig + eps;
            const double fp = evaluate(fn, inputs, dp);
            vals[i] = orig - eps;
            const double fm = evaluate(fn, inputs, dm);
            vals[i] = orig;
            if (dp != base_digest || dm != base_digest) {
                ++result.skipped;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * eps);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / denom);
            ++result.checked;
        }
    }

    out.release_graph();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto t = inputs[k];
        t.zero_grad();
        t.set_requires_grad(previous[k]);
    }
    return result;
}

} // namespace vos::ad
