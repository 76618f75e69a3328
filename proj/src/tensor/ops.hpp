#pragma once

#include <cstddef>
#include <span>

#include "tensor/tensor.hpp"

namespace vos::ad {

// Zero padding per side. Same-padding for odd kernels is symmetric; the
// 2x2 up-convolution uses {0, 0, 1, 1}.
struct Padding2d {
    std::size_t top = 0;
    std::size_t left = 0;
    std::size_t bottom = 0;
    std::size_t right = 0;

    static Padding2d uniform(std::size_t p) { return {p, p, p, p}; }
};

// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              Padding2d padding);
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

// input [N,Cin,H,W], weight [Cin,Cout,kh,kw], bias [Cout] -> [N,Cout,(H-1)s+kh,(W-1)s+kw].
Tensor transposed_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride);

// Window maximum; ties go to the first element in row-major scan order.
Tensor maxpool2d(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

Tensor upsample_nearest(const Tensor& input, std::size_t factor = 2);

// Center-crops `skip` (floor offsets) to the spatial size of `up`, then
// concatenates [skip, up] along channels.
Tensor crop_concat(const Tensor& skip, const Tensor& up);

Tensor relu(const Tensor& input);

// Output clamped into the open interval (0, 1) so that saturated inputs never
// produce exact 0 or 1.
Tensor sigmoid(const Tensor& input);

Tensor sum(const Tensor& input);

// sum_i coeffs[i] * input[i]; coeffs are constants.
Tensor weighted_sum(const Tensor& input, std::span<const double> coeffs);

Tensor scale(const Tensor& input, double factor);

// Scalar node with a precomputed gradient d(value)/d(input); used by the
// loss functions, which evaluate value and gradient in closed form.
Tensor scalar_with_gradient(const Tensor& input, double value, std::vector<double> gradient, const char* op);

} // namespace vos::ad
