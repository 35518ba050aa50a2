#include "mfnet/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfnet {

namespace {

constexpr double kMinProb = 1e-12;

// Squared euclidean distances between rows of x [n, d].
std::vector<double> pairwise_sq_dist(const Tensor& x) {
    int64_t n = x.dim(0), d = x.dim(1);
    std::vector<double> dist(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const double* xi = x.data() + i * d;
        for (int64_t j = i + 1; j < n; ++j) {
            const double* xj = x.data() + j * d;
            double s = 0.0;
            for (int64_t f = 0; f < d; ++f) {
                double diff = xi[f] - xj[f];
                s += diff * diff;
            }
            dist[static_cast<size_t>(i * n + j)] = s;
            dist[static_cast<size_t>(j * n + i)] = s;
        }
    }
    return dist;
}

// Conditional p_{j|i} for one row via binary search on beta = 1/(2 sigma^2)
// until the entropy of the row matches log(perplexity).
void row_probabilities(const std::vector<double>& dist, int64_t n, int64_t i, double target_entropy,
                       double* p_row) {
    double beta = 1.0, beta_min = -std::numeric_limits<double>::infinity();
    double beta_max = std::numeric_limits<double>::infinity();
    const double* d = dist.data() + i * n;

    for (int iter = 0; iter < 200; ++iter) {
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double v = (j == i) ? 0.0 : std::exp(-beta * d[j]);
            p_row[j] = v;
            sum += v;
        }
        if (sum <= 0.0) sum = kMinProb;
        double entropy = 0.0;  // H = log(sum) + beta * <d>
        for (int64_t j = 0; j < n; ++j)
            if (j != i) entropy += beta * d[j] * p_row[j];
        entropy = entropy / sum + std::log(sum);
        for (int64_t j = 0; j < n; ++j) p_row[j] /= sum;

        double diff = entropy - target_entropy;
        if (std::abs(diff) < 1e-5) return;
        if (diff > 0) {
            beta_min = beta;
            beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
        } else {
            beta_max = beta;
            beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
        }
    }
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) kl += p[i] * std::log(std::max(p[i], kMinProb) / std::max(q[i], kMinProb));
    return kl;
}

// Student-t similarities of the 2-D map; returns normalized q and the raw
// 1/(1+d2) numerators in `num`.
void map_similarities(const std::vector<double>& y, int64_t n, std::vector<double>& num,
                      std::vector<double>& q) {
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        num[static_cast<size_t>(i * n + i)] = 0.0;
        for (int64_t j = i + 1; j < n; ++j) {
            double dx = y[static_cast<size_t>(2 * i)] - y[static_cast<size_t>(2 * j)];
            double dy = y[static_cast<size_t>(2 * i + 1)] - y[static_cast<size_t>(2 * j + 1)];
            double v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[static_cast<size_t>(i * n + j)] = v;
            num[static_cast<size_t>(j * n + i)] = v;
            sum += 2.0 * v;
        }
    }
    if (sum <= 0.0) sum = kMinProb;
    for (size_t i = 0; i < q.size(); ++i) q[i] = num[i] / sum;
}

}  // namespace

EmbeddingSet tsne_embed(const Tensor& features, const TsneConfig& config, const std::vector<int>& class_ids) {
    if (features.rank() != 2)
        throw DimensionError("tsne expects [n,d] features, got " + shape_to_string(features.shape()));
    int64_t n = features.dim(0), d = features.dim(1);
    if (d < 2) throw ArgumentError("tsne needs feature dimension >= 2");
    if (!(config.perplexity > 0.0)) throw ArgumentError("perplexity must be > 0");
    if (static_cast<double>(n) < 3.0 * config.perplexity)
        throw ArgumentError("tsne needs n >= 3*perplexity (n=" + std::to_string(n) + ", perplexity=" +
                            std::to_string(config.perplexity) + ")");
    if (!class_ids.empty() && static_cast<int64_t>(class_ids.size()) != n)
        throw ArgumentError("class id count does not match point count");

    // center and scale the input, as the reference implementations do
    Tensor x = features;
    for (int64_t f = 0; f < d; ++f) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += x.at2(i, f);
        mean /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) x.at2(i, f) -= mean;
    }
    double max_abs = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) max_abs = std::max(max_abs, std::abs(x[i]));
    if (max_abs > 0.0)
        for (int64_t i = 0; i < x.size(); ++i) x[i] /= max_abs;

    std::vector<double> dist = pairwise_sq_dist(x);
    double max_dist = *std::max_element(dist.begin(), dist.end());
    if (max_dist <= 0.0) throw ArgumentError("tsne input is degenerate: all points identical");

    // conditional distributions, then symmetrize
    std::vector<double> p(static_cast<size_t>(n * n), 0.0);
    double target_entropy = std::log(config.perplexity);
    std::vector<double> row(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        row_probabilities(dist, n, i, target_entropy, row.data());
        for (int64_t j = 0; j < n; ++j) p[static_cast<size_t>(i * n + j)] = row[static_cast<size_t>(j)];
    }
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            double v = (p[static_cast<size_t>(i * n + j)] + p[static_cast<size_t>(j * n + i)]) /
                       (2.0 * static_cast<double>(n));
            v = std::max(v, kMinProb);
            p[static_cast<size_t>(i * n + j)] = v;
            p[static_cast<size_t>(j * n + i)] = v;
        }
    for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i * n + i)] = 0.0;

    // optimization state
    SeededRng rng(config.seed);
    std::vector<double> y(static_cast<size_t>(2 * n));
    for (double& v : y) v = rng.normal(0.0, 1e-4);
    std::vector<double> velocity(static_cast<size_t>(2 * n), 0.0);
    std::vector<double> gains(static_cast<size_t>(2 * n), 1.0);
    std::vector<double> num(static_cast<size_t>(n * n));
    std::vector<double> q(static_cast<size_t>(n * n));
    std::vector<double> grad(static_cast<size_t>(2 * n));

    double exaggeration = config.early_exaggeration;
    double post_exaggeration_kl = 0.0;

    for (int iter = 0; iter < config.iterations; ++iter) {
        if (iter == config.exaggeration_iters) {
            exaggeration = 1.0;
            map_similarities(y, n, num, q);
            post_exaggeration_kl = kl_divergence(p, q);
        }
        double momentum = iter < config.exaggeration_iters ? config.momentum_start : config.momentum_final;

        map_similarities(y, n, num, q);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                size_t ij = static_cast<size_t>(i * n + j);
                double mult = (exaggeration * p[ij] - q[ij]) * num[ij];
                grad[static_cast<size_t>(2 * i)] +=
                    4.0 * mult * (y[static_cast<size_t>(2 * i)] - y[static_cast<size_t>(2 * j)]);
                grad[static_cast<size_t>(2 * i + 1)] +=
                    4.0 * mult * (y[static_cast<size_t>(2 * i + 1)] - y[static_cast<size_t>(2 * j + 1)]);
            }
        }
        for (size_t i = 0; i < y.size(); ++i) {
            gains[i] = (grad[i] > 0.0) != (velocity[i] > 0.0) ? gains[i] + 0.2 : gains[i] * 0.8;
            gains[i] = std::max(gains[i], 0.01);
            velocity[i] = momentum * velocity[i] - config.learning_rate * gains[i] * grad[i];
            y[i] += velocity[i];
        }
        // recenter
        double mx = 0.0, my = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            mx += y[static_cast<size_t>(2 * i)];
            my += y[static_cast<size_t>(2 * i + 1)];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            y[static_cast<size_t>(2 * i)] -= mx;
            y[static_cast<size_t>(2 * i + 1)] -= my;
        }
    }

    map_similarities(y, n, num, q);
    double final_kl = kl_divergence(p, q);
    if (config.iterations <= config.exaggeration_iters) post_exaggeration_kl = final_kl;

    EmbeddingSet out;
    out.coords = Tensor::from({n, 2}, std::move(y));
    if (!out.coords.all_finite()) throw StateError("tsne produced non-finite coordinates");
    out.class_ids = class_ids.empty() ? std::vector<int>(static_cast<size_t>(n), 0) : class_ids;
    out.final_kl = final_kl;
    out.post_exaggeration_kl = post_exaggeration_kl;
    out.config = config;
    return out;
}

}  // namespace mfnet
