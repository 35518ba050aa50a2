#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mfnet/layers.hpp"
#include "mfnet/tensor.hpp"

namespace mfnet::testutil {

inline double rel_err(double a, double b) {
    double denom = std::max(std::abs(a) + std::abs(b), 1e-8);
    return std::abs(a - b) / denom;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

// Brute-force six-nested-loop convolution, the independent oracle for the
// im2col path.
inline Tensor conv2d_oracle(const Tensor& x, const ConvLayer& layer) {
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t out_c = layer.filters.dim(0), kh = layer.filters.dim(2), kw = layer.filters.dim(3);
    int64_t out_h = (h + 2 * layer.pad - kh) / layer.stride + 1;
    int64_t out_w = (w + 2 * layer.pad - kw) / layer.stride + 1;
    Tensor y({n, out_c, out_h, out_w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t o = 0; o < out_c; ++o)
            for (int64_t oy = 0; oy < out_h; ++oy)
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    double sum = layer.bias[o];
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t iy = oy * layer.stride - layer.pad + ky;
                                int64_t ix = ox * layer.stride - layer.pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                sum += x.at4(i, ch, iy, ix) * layer.filters.at4(o, ch, ky, kx);
                            }
                    y.at4(i, o, oy, ox) = sum;
                }
    return y;
}

// Central finite differences of a scalar function of one tensor, checked
// against the provided analytic gradient. Returns the max relative error.
inline double fd_check(Tensor& subject, const std::function<double()>& loss, const Tensor& analytic,
                       double eps = 1e-6) {
    double worst = 0.0;
    for (int64_t i = 0; i < subject.size(); ++i) {
        double saved = subject[i];
        subject[i] = saved + eps;
        double lp = loss();
        subject[i] = saved - eps;
        double lm = loss();
        subject[i] = saved;
        double numeric = (lp - lm) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

}  // namespace mfnet::testutil
