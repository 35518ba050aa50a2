#pragma once

#include <utility>

#include "mfnet/tensor.hpp"

namespace mfnet {

struct ConvLayer {
    Tensor filters;  // [out_c, in_c, kh, kw]
    Tensor bias;     // [out_c]
    int stride = 1;
    int pad = 0;
};

struct DenseLayer {
    Tensor weights;  // [in, out]
    Tensor bias;     // [out]
};

struct BatchNormLayer {
    Tensor gamma;         // [c]
    Tensor beta;          // [c]
    Tensor running_mean;  // [c]
    Tensor running_var;   // [c]
    double momentum = 0.9;
    double epsilon = 1e-5;
};

struct DropoutLayer {
    double keep_prob = 1.0;
};

enum class Activation { relu, sigmoid, tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// ---- convolution ----

struct ConvCache {
    Tensor input;  // retained for the backward pass
};

struct ConvGrads {
    Tensor input;
    Tensor filters;
    Tensor bias;
};

std::vector<int64_t> conv2d_output_shape(const std::vector<int64_t>& x_shape, const ConvLayer& layer);
std::pair<Tensor, ConvCache> conv2d_forward(const Tensor& x, const ConvLayer& layer);
ConvGrads conv2d_backward(const Tensor& grad_y, const ConvCache& cache, const ConvLayer& layer);

// ---- max pooling, fixed 2x2 window with stride 2 ----
// Odd trailing dims are handled as if padded with -inf on the bottom/right.

struct MaxPoolCache {
    std::vector<int64_t> argmax;       // flat index into x per output element
    std::vector<int64_t> input_shape;  // [n,c,h,w]
};

std::pair<Tensor, MaxPoolCache> maxpool2d_forward(const Tensor& x);
Tensor maxpool2d_backward(const Tensor& grad_y, const MaxPoolCache& cache);

// ---- dense ----

struct DenseCache {
    Tensor input;  // [n, in]
};

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

std::pair<Tensor, DenseCache> dense_forward(const Tensor& x, const DenseLayer& layer);
DenseGrads dense_backward(const Tensor& grad_y, const DenseCache& cache, const DenseLayer& layer);

// ---- activations ----

Tensor activation_forward(const Tensor& x, Activation kind);
// `x` is the forward input, `y` the forward output.
Tensor activation_backward(const Tensor& grad_y, const Tensor& x, const Tensor& y, Activation kind);

// ---- softmax over the trailing dim of [n, k] ----

Tensor softmax(const Tensor& logits);

// ---- dropout (inverted: scaling happens at train time) ----

struct DropoutResult {
    Tensor output;
    Tensor mask;  // empty when the call was an identity (inference or keep_prob == 1)
};

DropoutResult dropout_forward(const Tensor& x, double keep_prob, bool training, SeededRng& rng);
Tensor dropout_backward(const Tensor& grad_y, const DropoutResult& forward);

// ---- batch norm over channels of [n,c,h,w] ----

struct BatchNormCache {
    Tensor x_hat;    // normalized pre-affine input
    Tensor inv_std;  // [c]
    bool training = false;
};

struct BatchNormGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

// In training mode batch statistics are used and, when update_running is set,
// folded into the running estimates. Inference uses the running estimates.
Tensor batchnorm_forward(const Tensor& x, BatchNormLayer& layer, bool training, bool update_running,
                         BatchNormCache* cache);
BatchNormGrads batchnorm_backward(const Tensor& grad_y, const BatchNormCache& cache,
                                  const BatchNormLayer& layer);

}  // namespace mfnet
