#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tensor/tensor.hpp"

namespace vos::ad {

struct GradCheckResult {
    // max over checked coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    // Coordinates whose +-eps probes changed a branch decision (relu gate,
    // pooling argmax, clamp) relative to the base point. Central differences
    // straddle a kink there, so they are excluded and counted instead.
    std::size_t skipped = 0;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of a scalar-valued closure against central
// differences, coordinate by coordinate, over every input.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-5);

} // namespace vos::ad
