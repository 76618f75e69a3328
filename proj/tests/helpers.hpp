#pragma once

#include <span>
#include <vector>

#include "common/random.hpp"
#include "tensor/tensor.hpp"

namespace vos::test {

inline ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(ad::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return ad::Tensor::from(std::move(shape), std::move(v));
}

inline std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }
inline std::vector<double> to_vector(const ad::Tensor& t) { return to_vector(t.values()); }

inline double dot(const ad::Tensor& a, const ad::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

} // namespace vos::test
