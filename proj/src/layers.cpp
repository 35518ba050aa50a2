#include "mfnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfnet {

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    throw ArgumentError("unknown activation kind '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

namespace {

// Gathers receptive fields of one sample into a [in_c*kh*kw, out_h*out_w] matrix.
void im2col(const double* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int stride, int pad,
            int64_t out_h, int64_t out_w, double* cols) {
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
                double* row = cols + ((ch * kh + ky) * kw + kx) * out_h * out_w;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                    int64_t iy = oy * stride - pad + ky;
                    double* dst = row + oy * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + out_w, 0.0);
                        continue;
                    }
                    const double* src = x + (ch * h + iy) * w;
                    for (int64_t ox = 0; ox < out_w; ++ox) {
                        int64_t ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of the col matrix back into an image buffer.
void col2im_add(const double* cols, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int stride,
                int pad, int64_t out_h, int64_t out_w, double* x) {
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
                const double* row = cols + ((ch * kh + ky) * kw + kx) * out_h * out_w;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                    int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = x + (ch * h + iy) * w;
                    const double* src = row + oy * out_w;
                    for (int64_t ox = 0; ox < out_w; ++ox) {
                        int64_t ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void check_conv_args(const Tensor& x, const ConvLayer& layer) {
    if (x.rank() != 4) throw DimensionError("conv2d expects [n,c,h,w] input, got " + shape_to_string(x.shape()));
    if (layer.filters.rank() != 4)
        throw DimensionError("conv2d filters must be [out_c,in_c,kh,kw], got " +
                             shape_to_string(layer.filters.shape()));
    if (layer.stride < 1) throw ArgumentError("conv2d stride must be >= 1");
    if (layer.pad < 0) throw ArgumentError("conv2d pad must be >= 0");
    if (x.dim(1) != layer.filters.dim(1))
        throw DimensionError("conv2d channel mismatch: input " + shape_to_string(x.shape()) + " vs filters " +
                             shape_to_string(layer.filters.shape()));
    if (layer.bias.rank() != 1 || layer.bias.dim(0) != layer.filters.dim(0))
        throw DimensionError("conv2d bias must be [out_c]");
    if (x.dim(2) + 2 * layer.pad < layer.filters.dim(2) || x.dim(3) + 2 * layer.pad < layer.filters.dim(3))
        throw DimensionError("conv2d kernel larger than padded input: " + shape_to_string(x.shape()) +
                             " vs " + shape_to_string(layer.filters.shape()));
}

}  // namespace

std::vector<int64_t> conv2d_output_shape(const std::vector<int64_t>& x_shape, const ConvLayer& layer) {
    int64_t out_h = (x_shape[2] + 2 * layer.pad - layer.filters.dim(2)) / layer.stride + 1;
    int64_t out_w = (x_shape[3] + 2 * layer.pad - layer.filters.dim(3)) / layer.stride + 1;
    return {x_shape[0], layer.filters.dim(0), out_h, out_w};
}

std::pair<Tensor, ConvCache> conv2d_forward(const Tensor& x, const ConvLayer& layer) {
    check_conv_args(x, layer);
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t out_c = layer.filters.dim(0), kh = layer.filters.dim(2), kw = layer.filters.dim(3);
    auto out_shape = conv2d_output_shape(x.shape(), layer);
    int64_t out_h = out_shape[2], out_w = out_shape[3];

    Tensor y(out_shape);
    std::vector<double> cols(static_cast<size_t>(c * kh * kw * out_h * out_w));
    for (int64_t i = 0; i < n; ++i) {
        im2col(x.data() + i * c * h * w, c, h, w, kh, kw, layer.stride, layer.pad, out_h, out_w, cols.data());
        double* out = y.data() + i * out_c * out_h * out_w;
        matmul_buffers(layer.filters.data(), out_c, c * kh * kw, cols.data(), out_h * out_w, out, false);
        for (int64_t o = 0; o < out_c; ++o) {
            double b = layer.bias[o];
            double* dst = out + o * out_h * out_w;
            for (int64_t p = 0; p < out_h * out_w; ++p) dst[p] += b;
        }
    }
    apply_precision(y);
    return {std::move(y), ConvCache{x}};
}

ConvGrads conv2d_backward(const Tensor& grad_y, const ConvCache& cache, const ConvLayer& layer) {
    const Tensor& x = cache.input;
    check_conv_args(x, layer);
    auto out_shape = conv2d_output_shape(x.shape(), layer);
    if (grad_y.shape() != out_shape)
        throw DimensionError("conv2d_backward: grad " + shape_to_string(grad_y.shape()) +
                             " does not match forward output " + shape_to_string(out_shape));

    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t out_c = layer.filters.dim(0), kh = layer.filters.dim(2), kw = layer.filters.dim(3);
    int64_t out_h = out_shape[2], out_w = out_shape[3];
    int64_t patch = c * kh * kw, field = out_h * out_w;

    ConvGrads g{Tensor(x.shape()), Tensor(layer.filters.shape()), Tensor(layer.bias.shape())};
    std::vector<double> cols(static_cast<size_t>(patch * field));
    std::vector<double> grad_cols(static_cast<size_t>(patch * field));

    for (int64_t i = 0; i < n; ++i) {
        const double* gy = grad_y.data() + i * out_c * field;
        im2col(x.data() + i * c * h * w, c, h, w, kh, kw, layer.stride, layer.pad, out_h, out_w, cols.data());

        // grad_filters[o, p] += gy[o, :] . cols[p, :]
        for (int64_t o = 0; o < out_c; ++o) {
            const double* gyo = gy + o * field;
            double* gf = g.filters.data() + o * patch;
            for (int64_t p = 0; p < patch; ++p) {
                const double* colp = cols.data() + p * field;
                double sum = 0.0;
                for (int64_t q = 0; q < field; ++q) sum += gyo[q] * colp[q];
                gf[p] += sum;
            }
            double bsum = 0.0;
            for (int64_t q = 0; q < field; ++q) bsum += gyo[q];
            g.bias[o] += bsum;
        }

        // grad_cols = filters^T [patch, out_c] * gy [out_c, field]
        std::fill(grad_cols.begin(), grad_cols.end(), 0.0);
        for (int64_t o = 0; o < out_c; ++o) {
            const double* f = layer.filters.data() + o * patch;
            const double* gyo = gy + o * field;
            for (int64_t p = 0; p < patch; ++p) {
                double fv = f[p];
                if (fv == 0.0) continue;
                double* dst = grad_cols.data() + p * field;
                for (int64_t q = 0; q < field; ++q) dst[q] += fv * gyo[q];
            }
        }
        col2im_add(grad_cols.data(), c, h, w, kh, kw, layer.stride, layer.pad, out_h, out_w,
                   g.input.data() + i * c * h * w);
    }
    apply_precision(g.input);
    apply_precision(g.filters);
    apply_precision(g.bias);
    return g;
}

std::pair<Tensor, MaxPoolCache> maxpool2d_forward(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("maxpool2d expects [n,c,h,w], got " + shape_to_string(x.shape()));
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t out_h = (h + 1) / 2, out_w = (w + 1) / 2;
    Tensor y({n, c, out_h, out_w});
    MaxPoolCache cache;
    cache.argmax.resize(static_cast<size_t>(y.size()));
    cache.input_shape = x.shape();

    int64_t out_idx = 0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* plane = x.data() + (i * c + ch) * h * w;
            for (int64_t oy = 0; oy < out_h; ++oy) {
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_at = -1;
                    for (int64_t dy = 0; dy < 2; ++dy) {
                        int64_t iy = oy * 2 + dy;
                        if (iy >= h) break;
                        for (int64_t dx = 0; dx < 2; ++dx) {
                            int64_t ix = ox * 2 + dx;
                            if (ix >= w) break;
                            double v = plane[iy * w + ix];
                            if (v > best) {  // strict: first max in scan order wins
                                best = v;
                                best_at = (i * c + ch) * h * w + iy * w + ix;
                            }
                        }
                    }
                    y[out_idx] = best;
                    cache.argmax[static_cast<size_t>(out_idx)] = best_at;
                    ++out_idx;
                }
            }
        }
    }
    return {std::move(y), std::move(cache)};
}

Tensor maxpool2d_backward(const Tensor& grad_y, const MaxPoolCache& cache) {
    if (static_cast<size_t>(grad_y.size()) != cache.argmax.size())
        throw DimensionError("maxpool2d_backward: grad does not match cached forward output");
    Tensor gx(cache.input_shape);
    for (int64_t i = 0; i < grad_y.size(); ++i) gx[cache.argmax[static_cast<size_t>(i)]] += grad_y[i];
    apply_precision(gx);
    return gx;
}

std::pair<Tensor, DenseCache> dense_forward(const Tensor& x, const DenseLayer& layer) {
    if (x.rank() != 2) throw DimensionError("dense expects [n,in] input, got " + shape_to_string(x.shape()));
    if (x.dim(1) != layer.weights.dim(0))
        throw DimensionError("dense shape mismatch: input " + shape_to_string(x.shape()) + " vs weights " +
                             shape_to_string(layer.weights.shape()));
    Tensor y = matmul(x, layer.weights);
    int64_t n = y.dim(0), out = y.dim(1);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out; ++j) y.at2(i, j) += layer.bias[j];
    apply_precision(y);
    return {std::move(y), DenseCache{x}};
}

DenseGrads dense_backward(const Tensor& grad_y, const DenseCache& cache, const DenseLayer& layer) {
    const Tensor& x = cache.input;
    if (grad_y.rank() != 2 || grad_y.dim(0) != x.dim(0) || grad_y.dim(1) != layer.weights.dim(1))
        throw DimensionError("dense_backward: grad " + shape_to_string(grad_y.shape()) +
                             " does not match forward output");
    int64_t n = x.dim(0), in = x.dim(1), out = grad_y.dim(1);
    DenseGrads g{Tensor(x.shape()), Tensor(layer.weights.shape()), Tensor(layer.bias.shape())};

    // grad_w[i,o] = sum_n x[n,i] * gy[n,o]
    for (int64_t s = 0; s < n; ++s) {
        const double* xi = x.data() + s * in;
        const double* gy = grad_y.data() + s * out;
        for (int64_t i = 0; i < in; ++i) {
            double xv = xi[i];
            if (xv == 0.0) continue;
            double* gw = g.weights.data() + i * out;
            for (int64_t o = 0; o < out; ++o) gw[o] += xv * gy[o];
        }
        for (int64_t o = 0; o < out; ++o) g.bias[o] += gy[o];
    }
    // grad_x = gy . w^T
    for (int64_t s = 0; s < n; ++s) {
        const double* gy = grad_y.data() + s * out;
        double* gx = g.input.data() + s * in;
        for (int64_t i = 0; i < in; ++i) {
            const double* wrow = layer.weights.data() + i * out;
            double sum = 0.0;
            for (int64_t o = 0; o < out; ++o) sum += gy[o] * wrow[o];
            gx[i] = sum;
        }
    }
    apply_precision(g.input);
    apply_precision(g.weights);
    apply_precision(g.bias);
    return g;
}

Tensor activation_forward(const Tensor& x, Activation kind) {
    Tensor y(x.shape());
    switch (kind) {
        case Activation::relu:
            for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case Activation::sigmoid:
            for (int64_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
        case Activation::tanh:
            for (int64_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
            break;
    }
    apply_precision(y);
    return y;
}

Tensor activation_backward(const Tensor& grad_y, const Tensor& x, const Tensor& y, Activation kind) {
    if (!grad_y.same_shape(x)) throw DimensionError("activation_backward: grad shape mismatch");
    Tensor gx(x.shape());
    switch (kind) {
        case Activation::relu:
            // derivative at exactly 0 is taken as 0
            for (int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
            break;
        case Activation::sigmoid:
            for (int64_t i = 0; i < x.size(); ++i) gx[i] = grad_y[i] * y[i] * (1.0 - y[i]);
            break;
        case Activation::tanh:
            for (int64_t i = 0; i < x.size(); ++i) gx[i] = grad_y[i] * (1.0 - y[i] * y[i]);
            break;
    }
    apply_precision(gx);
    return gx;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("softmax expects [n,k], got " + shape_to_string(logits.shape()));
    int64_t n = logits.dim(0), k = logits.dim(1);
    Tensor p(logits.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        double* out = p.data() + i * k;
        for (int64_t j = 0; j < k; ++j) {
            out[j] = std::exp(row[j] - m);
            sum += out[j];
        }
        for (int64_t j = 0; j < k; ++j) out[j] /= sum;
    }
    apply_precision(p);
    return p;
}

DropoutResult dropout_forward(const Tensor& x, double keep_prob, bool training, SeededRng& rng) {
    if (keep_prob < 0.0 || keep_prob > 1.0) throw ArgumentError("keep_prob must be in [0,1]");
    if (!training || keep_prob == 1.0) return {x, Tensor()};
    if (keep_prob == 0.0) {
        Tensor zeros(x.shape());
        Tensor mask(x.shape());
        return {std::move(zeros), std::move(mask)};
    }
    Tensor mask(x.shape());
    Tensor y(x.shape());
    double inv = 1.0 / keep_prob;
    for (int64_t i = 0; i < x.size(); ++i) {
        double keep = rng.next_unit() < keep_prob ? inv : 0.0;
        mask[i] = keep;
        y[i] = x[i] * keep;
    }
    apply_precision(mask);
    apply_precision(y);
    return {std::move(y), std::move(mask)};
}

Tensor dropout_backward(const Tensor& grad_y, const DropoutResult& forward) {
    if (forward.mask.empty()) return grad_y;  // identity forward
    if (!grad_y.same_shape(forward.mask)) throw DimensionError("dropout_backward: grad shape mismatch");
    Tensor gx(grad_y.shape());
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] = grad_y[i] * forward.mask[i];
    apply_precision(gx);
    return gx;
}

Tensor batchnorm_forward(const Tensor& x, BatchNormLayer& layer, bool training, bool update_running,
                         BatchNormCache* cache) {
    if (x.rank() != 4) throw DimensionError("batchnorm expects [n,c,h,w], got " + shape_to_string(x.shape()));
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (layer.gamma.dim(0) != c)
        throw DimensionError("batchnorm channel mismatch: input " + shape_to_string(x.shape()) + " vs gamma " +
                             shape_to_string(layer.gamma.shape()));
    if (training && n < 2) throw ArgumentError("batchnorm training mode needs batch size >= 2");

    int64_t m = n * h * w;
    Tensor y(x.shape());
    Tensor x_hat(x.shape());
    Tensor inv_std({c});

    for (int64_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (training) {
            double sum = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * h * w;
                for (int64_t p = 0; p < h * w; ++p) sum += plane[p];
            }
            mean = sum / static_cast<double>(m);
            double sq = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * h * w;
                for (int64_t p = 0; p < h * w; ++p) {
                    double d = plane[p] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<double>(m);  // population variance
            if (update_running) {
                layer.running_mean[ch] =
                    apply_precision(layer.momentum * layer.running_mean[ch] + (1.0 - layer.momentum) * mean);
                layer.running_var[ch] =
                    apply_precision(layer.momentum * layer.running_var[ch] + (1.0 - layer.momentum) * var);
            }
        } else {
            mean = layer.running_mean[ch];
            var = layer.running_var[ch];
        }
        double istd = 1.0 / std::sqrt(var + layer.epsilon);
        inv_std[ch] = istd;
        double g = layer.gamma[ch], b = layer.beta[ch];
        for (int64_t i = 0; i < n; ++i) {
            const double* src = x.data() + (i * c + ch) * h * w;
            double* xh = x_hat.data() + (i * c + ch) * h * w;
            double* dst = y.data() + (i * c + ch) * h * w;
            for (int64_t p = 0; p < h * w; ++p) {
                xh[p] = (src[p] - mean) * istd;
                dst[p] = g * xh[p] + b;
            }
        }
    }
    apply_precision(y);
    if (cache) {
        apply_precision(x_hat);
        apply_precision(inv_std);
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
        cache->training = training;
    }
    return y;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_y, const BatchNormCache& cache,
                                  const BatchNormLayer& layer) {
    const Tensor& x_hat = cache.x_hat;
    if (!grad_y.same_shape(x_hat)) throw DimensionError("batchnorm_backward: grad shape mismatch");
    int64_t n = grad_y.dim(0), c = grad_y.dim(1), h = grad_y.dim(2), w = grad_y.dim(3);
    int64_t m = n * h * w;

    BatchNormGrads g{Tensor(grad_y.shape()), Tensor({c}), Tensor({c})};
    for (int64_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double* dy = grad_y.data() + (i * c + ch) * h * w;
            const double* xh = x_hat.data() + (i * c + ch) * h * w;
            for (int64_t p = 0; p < h * w; ++p) {
                sum_dy += dy[p];
                sum_dy_xhat += dy[p] * xh[p];
            }
        }
        g.beta[ch] = sum_dy;
        g.gamma[ch] = sum_dy_xhat;

        double gamma = layer.gamma[ch];
        double istd = cache.inv_std[ch];
        if (cache.training) {
            double scale = gamma * istd / static_cast<double>(m);
            for (int64_t i = 0; i < n; ++i) {
                const double* dy = grad_y.data() + (i * c + ch) * h * w;
                const double* xh = x_hat.data() + (i * c + ch) * h * w;
                double* gx = g.input.data() + (i * c + ch) * h * w;
                for (int64_t p = 0; p < h * w; ++p)
                    gx[p] = scale * (static_cast<double>(m) * dy[p] - sum_dy - xh[p] * sum_dy_xhat);
            }
        } else {
            // running statistics are constants in inference mode
            double scale = gamma * istd;
            for (int64_t i = 0; i < n; ++i) {
                const double* dy = grad_y.data() + (i * c + ch) * h * w;
                double* gx = g.input.data() + (i * c + ch) * h * w;
                for (int64_t p = 0; p < h * w; ++p) gx[p] = scale * dy[p];
            }
        }
    }
    apply_precision(g.input);
    apply_precision(g.gamma);
    apply_precision(g.beta);
    return g;
}

}  // namespace mfnet
