#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vos::verify {

struct OpGradResult {
    std::string op;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

// Names of the cases run by grad_suite, in report order.
std::vector<std::string> grad_suite_ops();

// Finite-difference checks of every differentiable op, both losses and a tiny
// U-Net end to end, on random inputs drawn from seeds first_seed..first_seed+trials-1.
// Errors are maxima over all trials.
std::vector<OpGradResult> grad_suite(std::uint64_t first_seed, std::size_t trials);

} // namespace vos::verify
