#include "vqar/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vqar/errors.hpp"

namespace vqar {

namespace {

double squared_distance(const double* a, const double* b, std::size_t n) {
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double diff = a[k] - b[k];
        d += diff * diff;
    }
    return d;
}

std::size_t nearest_in(const double* h, const double* table, std::size_t rows, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rows; ++j) {
        const double d = squared_distance(h, table + j * dim, dim);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

void require_ready(const Codebook& cb) {
    if (!cb.initialized()) throw StateError("codebook used before initialization");
}

std::size_t row_count(std::span<const double> encodings, std::size_t dim) {
    if (dim == 0 || encodings.size() % dim != 0) {
        throw ContractError("encoding buffer of length " + std::to_string(encodings.size()) +
                            " is not a multiple of the codebook dimension " + std::to_string(dim));
    }
    return encodings.size() / dim;
}

}  // namespace

Codebook::Codebook(CodebookConfig config, bool trainable) : config_(config) {
    if (config_.size < 1 || config_.dim < 1) throw ConfigError("codebook needs J >= 1 and E >= 1");
    if (!(config_.decay >= 0.0 && config_.decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
    if (config_.commitment_cost < 0.0 || config_.replace_threshold < 0.0) {
        throw ConfigError("commitment cost and replacement threshold must be non-negative");
    }
    vectors_ = Tensor::zeros({config_.size, config_.dim}, trainable);
    ema_cluster_size_.assign(config_.size, 0.0);
    ema_sum_.assign(config_.size * config_.dim, 0.0);
}

std::span<const double> Codebook::row(std::size_t j) const {
    return vectors_.data().subspan(j * config_.dim, config_.dim);
}

void Codebook::set_vectors(std::span<const double> values) {
    if (values.size() != config_.size * config_.dim) {
        throw ContractError("codebook vectors need " + std::to_string(config_.size * config_.dim) + " values");
    }
    auto v = vectors_.mutable_data();
    std::copy(values.begin(), values.end(), v.begin());
    std::fill(ema_cluster_size_.begin(), ema_cluster_size_.end(), 1.0);
    std::copy(values.begin(), values.end(), ema_sum_.begin());
    initialized_ = true;
}

std::size_t Codebook::nearest(std::span<const double> h) const {
    if (h.size() != config_.dim) {
        throw ContractError("encoder output has length " + std::to_string(h.size()) + ", codebook dimension is " +
                            std::to_string(config_.dim));
    }
    return nearest_in(h.data(), vectors_.data().data(), config_.size, config_.dim);
}

BatchQuantizeResult quantize_batch(const Tensor& h_enc, const Codebook& cb) {
    require_ready(cb);
    if (h_enc.rank() != 2 || h_enc.cols() != cb.dim()) {
        throw ContractError("quantize: encoder batch " + shape_str(h_enc.shape()) + " vs codebook " +
                            shape_str(cb.vectors().shape()));
    }
    BatchQuantizeResult r;
    const std::size_t rows = h_enc.rows();
    const auto hv = h_enc.data();
    r.indices.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) r.indices[i] = cb.nearest(hv.subspan(i * cb.dim(), cb.dim()));
    r.quantized = gather_rows(cb.vectors(), r.indices);
    r.st_output = straight_through(h_enc, r.quantized);
    r.vq_loss_codebook = row_sum(square(sub(stop_gradient(h_enc), r.quantized)));
    r.vq_loss_commit = row_sum(square(sub(h_enc, stop_gradient(r.quantized))));
    return r;
}

QuantizeResult quantize(const Tensor& h_enc, const Codebook& cb) {
    require_ready(cb);
    if (h_enc.rank() != 1 || h_enc.size() != cb.dim()) {
        throw ContractError("quantize: encoder output " + shape_str(h_enc.shape()) + " vs codebook " +
                            shape_str(cb.vectors().shape()));
    }
    const std::size_t e = cb.dim();
    auto batch = quantize_batch(reshape(h_enc, {1, e}), cb);
    QuantizeResult r;
    r.index = batch.indices[0];
    r.quantized = reshape(batch.quantized, {e});
    r.st_output = reshape(batch.st_output, {e});
    r.vq_loss_codebook = reshape(batch.vq_loss_codebook, {});
    r.vq_loss_commit = reshape(batch.vq_loss_commit, {});
    return r;
}

std::vector<double> posterior(const Tensor& h_enc, const Codebook& cb) {
    require_ready(cb);
    std::vector<double> q(cb.size(), 0.0);
    q[cb.nearest(h_enc.data())] = 1.0;
    return q;
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
    if (q.size() != p.size()) throw ContractError("kl_divergence: length mismatch");
    double kl = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        if (q[j] > 0.0) kl += q[j] * std::log(q[j] / p[j]);
    }
    return kl;
}

double kl_to_uniform(std::span<const double> q) {
    std::vector<double> uniform(q.size(), 1.0 / static_cast<double>(q.size()));
    return kl_divergence(q, uniform);
}

KMeansReport kmeans_init(Codebook& cb, std::span<const double> encodings, std::size_t iters, Rng& rng) {
    if (cb.initialized()) throw StateError("kmeans_init on an already initialized codebook");
    const std::size_t dim = cb.dim();
    const std::size_t clusters = cb.size();
    const std::size_t m = row_count(encodings, dim);
    if (m == 0) throw ContractError("kmeans_init needs at least one encoding");

    KMeansReport report;
    std::vector<double> centroids(clusters * dim);
    std::vector<std::size_t> seeds;
    if (m >= clusters) {
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        // Partial Fisher-Yates: first J entries become distinct random rows.
        for (std::size_t j = 0; j < clusters; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, m - 1);
            std::swap(order[j], order[pick(rng)]);
        }
        seeds.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(clusters));
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, m - 1);
        for (std::size_t j = 0; j < clusters; ++j) seeds.push_back(pick(rng));
        report.warning = "k-means batch has " + std::to_string(m) + " rows for " + std::to_string(clusters) +
                         " clusters; seeded from random rows with duplication";
    }
    for (std::size_t j = 0; j < clusters; ++j) {
        std::copy_n(encodings.begin() + seeds[j] * dim, dim, centroids.begin() + j * dim);
    }

    std::vector<std::size_t> assign(m);
    std::vector<double> counts(clusters);
    std::vector<double> sums(clusters * dim);
    auto assign_all = [&] {
        std::fill(counts.begin(), counts.end(), 0.0);
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* h = encodings.data() + i * dim;
            const std::size_t j = nearest_in(h, centroids.data(), clusters, dim);
            assign[i] = j;
            counts[j] += 1.0;
            for (std::size_t k = 0; k < dim; ++k) sums[j * dim + k] += h[k];
        }
    };

    std::uniform_int_distribution<std::size_t> any_row(0, m - 1);
    for (std::size_t it = 0; it < iters; ++it) {
        assign_all();
        for (std::size_t j = 0; j < clusters; ++j) {
            if (counts[j] > 0.0) {
                for (std::size_t k = 0; k < dim; ++k) centroids[j * dim + k] = sums[j * dim + k] / counts[j];
            } else {
                const std::size_t r = any_row(rng);
                std::copy_n(encodings.begin() + r * dim, dim, centroids.begin() + j * dim);
                ++report.reseeded_clusters;
            }
        }
    }
    assign_all();

    auto v = cb.vectors().mutable_data();
    std::copy(centroids.begin(), centroids.end(), v.begin());
    // EMA statistics consistent with the centroids: N_j = count, m_j = N_j z_j.
    for (std::size_t j = 0; j < clusters; ++j) {
        cb.ema_cluster_size()[j] = counts[j];
        for (std::size_t k = 0; k < dim; ++k) cb.ema_sum()[j * dim + k] = counts[j] * centroids[j * dim + k];
    }
    cb.mark_initialized();
    return report;
}

void ema_update(Codebook& cb, std::span<const double> encodings, std::span<const std::size_t> assignments) {
    require_ready(cb);
    const std::size_t dim = cb.dim();
    const std::size_t clusters = cb.size();
    const std::size_t m = row_count(encodings, dim);
    if (assignments.size() != m) {
        throw ContractError("ema_update: " + std::to_string(assignments.size()) + " assignments for " +
                            std::to_string(m) + " encodings");
    }
    std::vector<double> counts(clusters, 0.0);
    std::vector<double> sums(clusters * dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = assignments[i];
        if (j >= clusters) {
            throw ContractError("ema_update: assignment " + std::to_string(j) + " out of range for J=" +
                                std::to_string(clusters));
        }
        counts[j] += 1.0;
        for (std::size_t k = 0; k < dim; ++k) sums[j * dim + k] += encodings[i * dim + k];
    }
    const double gamma = cb.config().decay;
    auto& n = cb.ema_cluster_size();
    auto& s = cb.ema_sum();
    auto v = cb.vectors().mutable_data();
    for (std::size_t j = 0; j < clusters; ++j) {
        n[j] = gamma * n[j] + (1.0 - gamma) * counts[j];
        const double denom = std::max(n[j], kEmaEpsilon);
        for (std::size_t k = 0; k < dim; ++k) {
            const std::size_t idx = j * dim + k;
            s[idx] = gamma * s[idx] + (1.0 - gamma) * sums[idx];
            v[idx] = s[idx] / denom;
        }
    }
}

std::size_t replace_dead(Codebook& cb, std::span<const double> encodings, Rng& rng) {
    require_ready(cb);
    const std::size_t dim = cb.dim();
    const std::size_t m = row_count(encodings, dim);
    if (m == 0) throw ContractError("replace_dead needs at least one encoding");
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    auto v = cb.vectors().mutable_data();
    std::size_t replaced = 0;
    for (std::size_t j = 0; j < cb.size(); ++j) {
        if (cb.ema_cluster_size()[j] >= cb.config().replace_threshold) continue;
        const std::size_t r = pick(rng);
        for (std::size_t k = 0; k < dim; ++k) {
            v[j * dim + k] = encodings[r * dim + k];
            cb.ema_sum()[j * dim + k] = encodings[r * dim + k];
        }
        cb.ema_cluster_size()[j] = 1.0;
        ++replaced;
    }
    return replaced;
}

Tensor vq_loss(const QuantizeResult& result, const Codebook& cb, bool use_ema) {
    Tensor commit = scale(result.vq_loss_commit, cb.config().commitment_cost);
    return use_ema ? commit : add(result.vq_loss_codebook, commit);
}

Tensor vq_loss(const BatchQuantizeResult& result, const Codebook& cb, bool use_ema) {
    Tensor commit = scale(result.vq_loss_commit, cb.config().commitment_cost);
    return use_ema ? commit : add(result.vq_loss_codebook, commit);
}

std::size_t utilization(std::span<const std::size_t> assignments, std::size_t codebook_size) {
    std::vector<bool> used(codebook_size, false);
    for (auto a : assignments) {
        if (a < codebook_size) used[a] = true;
    }
    return static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
}

}  // namespace vqar
