#include "tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>
#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (!t.defined()) fail_invalid(fmt::format("{}: {} is undefined", op, what));
    if (t.rank() != rank)
        fail_invalid(fmt::format("{}: {} must have rank {}, got shape {}", op, what, rank, shape_str(t.shape())));
}

struct ConvGeom {
    std::size_t channels, height, width; // input plane
    std::size_t kh, kw, stride;
    Padding2d pad;
    std::size_t out_h, out_w;

    std::size_t rows() const { return channels * kh * kw; }
    std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one sample [C,H,W] into col [C*kh*kw, out_h*out_w].
void im2col(const double* src, const ConvGeom& g, double* col) {
    const auto plane = g.height * g.width;
    const auto ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* s = src + c * plane;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                double* row = col + ((c * g.kh + ky) * g.kw + kx) * ncols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad.top);
                    double* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* srow = s + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad.left);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                                      ? 0.0
                                      : srow[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds col back into [C,H,W].
void col2im(const double* col, const ConvGeom& g, double* dst) {
    const auto plane = g.height * g.width;
    const auto ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* d = dst + c * plane;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const double* row = col + ((c * g.kh + ky) * g.kw + kx) * ncols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad.top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    double* drow = d + static_cast<std::size_t>(iy) * g.width;
                    const double* srow = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad.left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        drow[static_cast<std::size_t>(ix)] += srow[ox];
                    }
                }
            }
        }
    }
}

void require_bias(const Tensor& bias, std::size_t channels, const char* op) {
    require_rank(bias, 1, op, "bias");
    if (bias.dim(0) != channels)
        fail_invalid(fmt::format("{}: bias has {} entries, expected {}", op, bias.dim(0), channels));
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              Padding2d padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    const auto n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != cin)
        fail_invalid(fmt::format("conv2d: input {} has {} channels but weight {} expects {}", shape_str(input.shape()),
                                 cin, shape_str(weight.shape()), weight.dim(1)));
    require_bias(bias, cout, "conv2d");
    if (stride < 1) fail_invalid("conv2d: stride must be >= 1");
    if (h + padding.top + padding.bottom < kh || w + padding.left + padding.right < kw)
        fail_invalid(fmt::format("conv2d: kernel {}x{} larger than padded input {}x{}", kh, kw,
                                 h + padding.top + padding.bottom, w + padding.left + padding.right));

    ConvGeom g{cin, h, w, kh, kw, stride, padding, 0, 0};
    g.out_h = (h + padding.top + padding.bottom - kh) / stride + 1;
    g.out_w = (w + padding.left + padding.right - kw) / stride + 1;

    const auto in_sz = cin * h * w;
    const auto out_plane = g.cols();
    std::vector<double> out(n * cout * out_plane);
    std::vector<double> col(g.rows() * g.cols());
    CMapMat wm(weight.values().data(), cout, g.rows());
    const auto bv = bias.values();
    for (std::size_t s = 0; s < n; ++s) {
        im2col(input.values().data() + s * in_sz, g, col.data());
        MapMat om(out.data() + s * cout * out_plane, cout, out_plane);
        om.noalias() = wm * CMapMat(col.data(), g.rows(), g.cols());
        for (std::size_t c = 0; c < cout; ++c) om.row(c).array() += bv[c];
    }

    auto in_i = input.impl();
    auto w_i = weight.impl();
    auto b_i = bias.impl();
    return make_result({n, cout, g.out_h, g.out_w}, std::move(out), "conv2d", {input, weight, bias},
                       [in_i, w_i, b_i, g, n, cout](const detail::TensorImpl& o) {
                           const auto in_sz = g.channels * g.height * g.width;
                           const auto out_plane = g.cols();
                           std::vector<double> col(g.rows() * g.cols());
                           CMapMat wm(w_i->data.data(), cout, g.rows());
                           for (std::size_t s = 0; s < n; ++s) {
                               CMapMat dout(o.grad.data() + s * cout * out_plane, cout, out_plane);
                               if (w_i->requires_grad) {
                                   im2col(in_i->data.data() + s * in_sz, g, col.data());
                                   MapMat dw(w_i->grad.data(), cout, g.rows());
                                   dw.noalias() += dout * CMapMat(col.data(), g.rows(), g.cols()).transpose();
                               }
                               if (b_i->requires_grad)
                                   for (std::size_t c = 0; c < cout; ++c) {
                                       // Plain loop: Eigen's vectorized sum peels by address, so its
                                       // rounding would depend on where the buffer landed.
                                       const double* row = o.grad.data() + (s * cout + c) * out_plane;
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < out_plane; ++i) acc += row[i];
                                       b_i->grad[c] += acc;
                                   }
                               if (in_i->requires_grad) {
                                   MapMat dcol(col.data(), g.rows(), g.cols());
                                   dcol.noalias() = wm.transpose() * dout;
                                   col2im(col.data(), g, in_i->grad.data() + s * in_sz);
                               }
                           }
                       });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    return conv2d(input, weight, bias, stride, Padding2d::uniform(padding));
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride) {
    require_rank(input, 4, "transposed_conv2d", "input");
    require_rank(weight, 4, "transposed_conv2d", "weight");
    const auto n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(0) != cin)
        fail_invalid(fmt::format("transposed_conv2d: input {} has {} channels but weight {} expects {}",
                                 shape_str(input.shape()), cin, shape_str(weight.shape()), weight.dim(0)));
    require_bias(bias, cout, "transposed_conv2d");
    if (stride < 1) fail_invalid("transposed_conv2d: stride must be >= 1");

    const auto out_h = (h - 1) * stride + kh;
    const auto out_w = (w - 1) * stride + kw;
    // Geometry of the equivalent forward conv mapping the output back to the input.
    ConvGeom g{cout, out_h, out_w, kh, kw, stride, {}, h, w};

    const auto in_plane = h * w;
    const auto out_sz = cout * out_h * out_w;
    std::vector<double> out(n * out_sz, 0.0);
    std::vector<double> col(g.rows() * g.cols());
    CMapMat wm(weight.values().data(), cin, g.rows());
    const auto bv = bias.values();
    for (std::size_t s = 0; s < n; ++s) {
        MapMat cm(col.data(), g.rows(), g.cols());
        cm.noalias() = wm.transpose() * CMapMat(input.values().data() + s * cin * in_plane, cin, in_plane);
        double* dst = out.data() + s * out_sz;
        col2im(col.data(), g, dst);
        for (std::size_t c = 0; c < cout; ++c)
            for (std::size_t i = 0; i < out_h * out_w; ++i) dst[c * out_h * out_w + i] += bv[c];
    }

    auto in_i = input.impl();
    auto w_i = weight.impl();
    auto b_i = bias.impl();
    return make_result({n, cout, out_h, out_w}, std::move(out), "transposed_conv2d", {input, weight, bias},
                       [in_i, w_i, b_i, g, n, cin](const detail::TensorImpl& o) {
                           const auto in_plane = g.out_h * g.out_w;
                           const auto out_sz = g.channels * g.height * g.width;
                           std::vector<double> col(g.rows() * g.cols());
                           CMapMat wm(w_i->data.data(), cin, g.rows());
                           for (std::size_t s = 0; s < n; ++s) {
                               const double* dout = o.grad.data() + s * out_sz;
                               im2col(dout, g, col.data());
                               CMapMat cm(col.data(), g.rows(), g.cols());
                               if (in_i->requires_grad) {
                                   MapMat dx(in_i->grad.data() + s * cin * in_plane, cin, in_plane);
                                   dx.noalias() += wm * cm;
                               }
                               if (w_i->requires_grad) {
                                   MapMat dw(w_i->grad.data(), cin, g.rows());
                                   dw.noalias() +=
                                       CMapMat(in_i->data.data() + s * cin * in_plane, cin, in_plane) * cm.transpose();
                               }
                               if (b_i->requires_grad) {
                                   const auto plane = g.height * g.width;
                                   for (std::size_t c = 0; c < g.channels; ++c) {
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < plane; ++i) acc += dout[c * plane + i];
                                       b_i->grad[c] += acc;
                                   }
                               }
                           }
                       });
}

Tensor maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
    require_rank(input, 4, "maxpool2d", "input");
    const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (window < 1 || stride < 1) fail_invalid("maxpool2d: window and stride must be >= 1");
    if (window > h || window > w)
        fail_invalid(fmt::format("maxpool2d: window {} larger than spatial extent {}x{}", window, h, w));
    const auto oh = (h - window) / stride + 1;
    const auto ow = (w - window) / stride + 1;
    std::vector<double> out(n * c * oh * ow);
    std::vector<std::size_t> argmax(out.size());
    const auto in = input.values();
    auto* trace = BranchTrace::active();
    for (std::size_t p = 0; p < n * c; ++p) {
        const double* src = in.data() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * stride) * w + ox * stride;
                for (std::size_t dy = 0; dy < window; ++dy)
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const auto idx = (oy * stride + dy) * w + ox * stride + dx;
                        if (src[idx] > src[best]) best = idx;
                    }
                const auto o = p * oh * ow + oy * ow + ox;
                out[o] = src[best];
                argmax[o] = p * h * w + best;
                if (trace) trace->mix(best);
            }
        }
    }
    auto in_i = input.impl();
    return make_result({n, c, oh, ow}, std::move(out), "maxpool2d", {input},
                       [in_i, argmax = std::move(argmax)](const detail::TensorImpl& o) {
                           for (std::size_t i = 0; i < argmax.size(); ++i) in_i->grad[argmax[i]] += o.grad[i];
                       });
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
    require_rank(input, 4, "upsample_nearest", "input");
    if (factor < 1) fail_invalid("upsample_nearest: factor must be >= 1");
    const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto oh = h * factor, ow = w * factor;
    std::vector<double> out(n * c * oh * ow);
    const auto in = input.values();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
                out[p * oh * ow + y * ow + x] = in[p * h * w + (y / factor) * w + x / factor];
    auto in_i = input.impl();
    return make_result({n, c, oh, ow}, std::move(out), "upsample_nearest", {input},
                       [in_i, n, c, h, w, factor](const detail::TensorImpl& o) {
                           const auto oh = h * factor, ow = w * factor;
                           for (std::size_t p = 0; p < n * c; ++p)
                               for (std::size_t y = 0; y < oh; ++y)
                                   for (std::size_t x = 0; x < ow; ++x)
                                       in_i->grad[p * h * w + (y / factor) * w + x / factor] +=
                                           o.grad[p * oh * ow + y * ow + x];
                       });
}

Tensor crop_concat(const Tensor& skip, const Tensor& up) {
    require_rank(skip, 4, "crop_concat", "skip");
    require_rank(up, 4, "crop_concat", "up");
    const auto n = skip.dim(0), c1 = skip.dim(1), h1 = skip.dim(2), w1 = skip.dim(3);
    const auto c2 = up.dim(1), h2 = up.dim(2), w2 = up.dim(3);
    if (up.dim(0) != n)
        fail_invalid(fmt::format("crop_concat: batch mismatch {} vs {}", shape_str(skip.shape()), shape_str(up.shape())));
    if (h1 < h2 || w1 < w2)
        fail_invalid(fmt::format("crop_concat: skip {} smaller than up {}", shape_str(skip.shape()),
                                 shape_str(up.shape())));
    const auto oy = (h1 - h2) / 2, ox = (w1 - w2) / 2;
    const auto cout = c1 + c2;
    const auto plane = h2 * w2;
    std::vector<double> out(n * cout * plane);
    const auto sv = skip.values();
    const auto uv = up.values();
    for (std::size_t s = 0; s < n; ++s) {
        double* dst = out.data() + s * cout * plane;
        for (std::size_t c = 0; c < c1; ++c)
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t x = 0; x < w2; ++x)
                    dst[c * plane + y * w2 + x] = sv[((s * c1 + c) * h1 + y + oy) * w1 + x + ox];
        std::copy_n(uv.data() + s * c2 * plane, c2 * plane, dst + c1 * plane);
    }
    auto sk_i = skip.impl();
    auto up_i = up.impl();
    return make_result({n, cout, h2, w2}, std::move(out), "crop_concat", {skip, up},
                       [sk_i, up_i, n, c1, c2, h1, w1, h2, w2, oy, ox](const detail::TensorImpl& o) {
                           const auto plane = h2 * w2;
                           const auto cout = c1 + c2;
                           for (std::size_t s = 0; s < n; ++s) {
                               const double* g = o.grad.data() + s * cout * plane;
                               if (sk_i->requires_grad)
                                   for (std::size_t c = 0; c < c1; ++c)
                                       for (std::size_t y = 0; y < h2; ++y)
                                           for (std::size_t x = 0; x < w2; ++x)
                                               sk_i->grad[((s * c1 + c) * h1 + y + oy) * w1 + x + ox] +=
                                                   g[c * plane + y * w2 + x];
                               if (up_i->requires_grad)
                                   for (std::size_t i = 0; i < c2 * plane; ++i)
                                       up_i->grad[s * c2 * plane + i] += g[c1 * plane + i];
                           }
                       });
}

Tensor relu(const Tensor& input) {
    const auto in = input.values();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    if (auto* trace = BranchTrace::active()) {
        std::uint64_t word = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
            word = (word << 1) | (in[i] > 0.0 ? 1u : 0u);
            if (i % 64 == 63) trace->mix(word), word = 0;
        }
        trace->mix(word);
    }
    auto in_i = input.impl();
    return make_result(input.shape(), std::move(out), "relu", {input}, [in_i](const detail::TensorImpl& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (in_i->data[i] > 0.0) in_i->grad[i] += o.grad[i];
    });
}

Tensor sigmoid(const Tensor& input) {
    static const double lo = std::numeric_limits<double>::min();
    static const double hi = std::nextafter(1.0, 0.0);
    const auto in = input.values();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double x = in[i];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        out[i] = std::clamp(s, lo, hi);
    }
    auto in_i = input.impl();
    return make_result(input.shape(), out, "sigmoid", {input}, [in_i](const detail::TensorImpl& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double s = o.data[i];
            in_i->grad[i] += o.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor sum(const Tensor& input) {
    double acc = 0.0;
    for (double v : input.values()) acc += v;
    auto in_i = input.impl();
    return make_result({1}, {acc}, "sum", {input}, [in_i](const detail::TensorImpl& o) {
        for (auto& g : in_i->grad) g += o.grad[0];
    });
}

Tensor weighted_sum(const Tensor& input, std::span<const double> coeffs) {
    if (coeffs.size() != input.numel())
        fail_invalid(fmt::format("weighted_sum: {} coefficients for {} values", coeffs.size(), input.numel()));
    double acc = 0.0;
    const auto in = input.values();
    for (std::size_t i = 0; i < in.size(); ++i) acc += coeffs[i] * in[i];
    auto in_i = input.impl();
    std::vector<double> k(coeffs.begin(), coeffs.end());
    return make_result({1}, {acc}, "weighted_sum", {input}, [in_i, k = std::move(k)](const detail::TensorImpl& o) {
        for (std::size_t i = 0; i < k.size(); ++i) in_i->grad[i] += o.grad[0] * k[i];
    });
}

Tensor scale(const Tensor& input, double factor) {
    std::vector<double> out(input.values().begin(), input.values().end());
    for (auto& v : out) v *= factor;
    auto in_i = input.impl();
    return make_result(input.shape(), std::move(out), "scale", {input}, [in_i, factor](const detail::TensorImpl& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) in_i->grad[i] += o.grad[i] * factor;
    });
}

Tensor scalar_with_gradient(const Tensor& input, double value, std::vector<double> gradient, const char* op) {
    if (gradient.size() != input.numel())
        fail_invalid(fmt::format("{}: gradient has {} values for input of {}", op, gradient.size(), input.numel()));
    auto in_i = input.impl();
    return make_result({1}, {value}, op, {input}, [in_i, g = std::move(gradient)](const detail::TensorImpl& o) {
        for (std::size_t i = 0; i < g.size(); ++i) in_i->grad[i] += o.grad[0] * g[i];
    });
}

} // namespace vos::ad
