#include "mfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace mfnet {

namespace {

Precision read_precision_from_env() {
    if (const char* env = std::getenv("MFNET_PRECISION")) {
        std::string v(env);
        if (v == "fp64") return Precision::fp64;
        if (v == "fp32") return Precision::fp32;
        throw ArgumentError("MFNET_PRECISION must be fp32 or fp64, got '" + v + "'");
    }
    return Precision::fp32;
}

Precision& precision_slot() {
    static Precision p = read_precision_from_env();
    return p;
}

int64_t checked_element_count(const std::vector<int64_t>& shape) {
    if (shape.empty()) throw DimensionError("tensor rank must be >= 1");
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 1) throw DimensionError("tensor dimensions must be >= 1, got " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

}  // namespace

Precision active_precision() { return precision_slot(); }
void set_precision(Precision p) { precision_slot() = p; }

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream out;
    out << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ",";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(checked_element_count(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), apply_precision(value));
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values) {
    int64_t n = checked_element_count(shape);
    if (n != static_cast<int64_t>(values.size()))
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape_to_string(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    apply_precision(t);
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (checked_element_count(new_shape) != size())
        throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void apply_precision(Tensor& t) {
    if (active_precision() != Precision::fp32) return;
    for (double& v : t.buffer()) v = static_cast<double>(static_cast<float>(v));
}

double apply_precision(double v) {
    if (active_precision() != Precision::fp32) return v;
    return static_cast<double>(static_cast<float>(v));
}

uint64_t SeededRng::next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double SeededRng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double a, double b) {
    if (!(a < b)) throw ArgumentError("uniform bounds require a < b");
    return a + (b - a) * next_unit();
}

double SeededRng::normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw ArgumentError("normal stddev must be > 0");
    // Box-Muller; one draw per call, two uniforms consumed.
    double u1 = 1.0 - next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ull + (stream << 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

SeededRng SeededRng::split(uint64_t stream) const { return SeededRng(mix_seed(seed_, stream)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul expects rank-2 operands, got " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    Tensor c({a.dim(0), b.dim(1)});
    matmul_buffers(a.data(), a.dim(0), a.dim(1), b.data(), b.dim(1), c.data(), false);
    apply_precision(c);
    return c;
}

void matmul_buffers(const double* a, int64_t m, int64_t k, const double* b, int64_t n, double* c,
                    bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    // i-k-j order keeps the inner loop contiguous over both b and c.
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor pad2d(const Tensor& x, int pad) {
    if (x.rank() != 4) throw DimensionError("pad2d expects [n,c,h,w], got " + shape_to_string(x.shape()));
    if (pad < 0) throw ArgumentError("pad must be >= 0");
    if (pad == 0) return x;
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, h + 2 * pad, w + 2 * pad});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j)
            for (int64_t r = 0; r < h; ++r) {
                const double* src = x.data() + ((i * c + j) * h + r) * w;
                double* dst = y.data() + (((i * c + j) * (h + 2 * pad) + r + pad) * (w + 2 * pad)) + pad;
                std::copy(src, src + w, dst);
            }
    return y;
}

std::vector<int> topk_indices(const std::vector<double>& values, int k) {
    if (k < 1 || static_cast<size_t>(k) > values.size())
        throw ArgumentError("topk: k must be in [1, " + std::to_string(values.size()) + "], got " +
                            std::to_string(k));
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int lhs, int rhs) {
        if (values[static_cast<size_t>(lhs)] != values[static_cast<size_t>(rhs)])
            return values[static_cast<size_t>(lhs)] > values[static_cast<size_t>(rhs)];
        return lhs < rhs;
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

Tensor seeded_random(SeededRng& rng, std::vector<int64_t> shape, const Distribution& dist) {
    Tensor t(std::move(shape));
    if (dist.kind == Distribution::Kind::uniform) {
        if (!(dist.a < dist.b)) throw ArgumentError("uniform distribution requires a < b");
        for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(dist.a, dist.b);
    } else {
        if (!(dist.b > 0.0)) throw ArgumentError("normal distribution requires sigma > 0");
        for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(dist.a, dist.b);
    }
    apply_precision(t);
    return t;
}

}  // namespace mfnet
