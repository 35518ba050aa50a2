#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnet/error.hpp"

namespace mfnet {

// Global numeric mode. Training runs in fp32, gradient checking needs fp64.
// In fp32 mode every tensor produced by a public operation is quantized to
// the nearest float-representable value, so checkpoints can store f32
// payloads losslessly. Storage stays double either way; there is one code
// path for both modes.
enum class Precision { fp32, fp64 };

Precision active_precision();
void set_precision(Precision p);

// RAII helper for tests and the gradcheck tool.
struct PrecisionGuard {
    explicit PrecisionGuard(Precision p) : saved_(active_precision()) { set_precision(p); }
    ~PrecisionGuard() { set_precision(saved_); }

  private:
    Precision saved_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

// Dense row-major tensor. Layout convention is channels-first: images and
// activations are [n, c, h, w], dense weights are [in, out].
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);

    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor from(std::vector<int64_t> shape, std::vector<double> values);

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    double& at3(int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double at3(int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    double& at4(int64_t n, int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    Tensor reshaped(std::vector<int64_t> new_shape) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// Quantizes t in place when the active precision is fp32; no-op in fp64.
// Every kernel calls this on its result before handing it out.
void apply_precision(Tensor& t);
double apply_precision(double v);

// Counter-style deterministic generator (splitmix64). The output stream is a
// pure function of (seed, draw index), identical on every platform.
class SeededRng {
  public:
    explicit SeededRng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t next_u64();

    // uniform in [0, 1)
    double next_unit();
    double uniform(double a, double b);
    double normal(double mu, double sigma);

    // Independent stream derived from the construction seed; unaffected by
    // how many draws this generator has produced.
    SeededRng split(uint64_t stream) const;

  private:
    uint64_t seed_;
    uint64_t state_;
};

uint64_t mix_seed(uint64_t seed, uint64_t stream);

struct Distribution {
    enum class Kind { uniform, normal } kind;
    double a = 0.0;  // lower bound / mean
    double b = 1.0;  // upper bound / stddev

    static Distribution uniform_in(double lo, double hi) { return {Kind::uniform, lo, hi}; }
    static Distribution normal_with(double mu, double sigma) { return {Kind::normal, mu, sigma}; }
};

// c[i,j] = sum_k a[i,k] * b[k,j]
Tensor matmul(const Tensor& a, const Tensor& b);

// Raw buffer product used by the conv kernels: c[m,n] (+)= a[m,k] * b[k,n].
void matmul_buffers(const double* a, int64_t m, int64_t k, const double* b, int64_t n, double* c,
                    bool accumulate);

// Zero border of width `pad` around the two trailing dims of an [n,c,h,w] tensor.
Tensor pad2d(const Tensor& x, int pad);

// Indices of the k largest entries, descending, ties broken by lower index.
std::vector<int> topk_indices(const std::vector<double>& values, int k);

Tensor seeded_random(SeededRng& rng, std::vector<int64_t> shape, const Distribution& dist);

}  // namespace mfnet
