#pragma once

// Vector-quantization bottleneck: nearest-prototype assignment, the two VQ
// loss terms, EMA codebook re-estimation, k-means initialization and
// replacement of dead codebook entries.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqar/random.hpp"
#include "vqar/tensor.hpp"

namespace vqar {

struct CodebookConfig {
    std::size_t size = 128;         // J
    std::size_t dim = 64;           // E
    double decay = 0.99;            // EMA decay
    double commitment_cost = 0.25;  // beta
    double replace_threshold = 2.0; // Q
};

inline constexpr double kEmaEpsilon = 1e-5;

class Codebook {
public:
    explicit Codebook(CodebookConfig config, bool trainable = false);

    const CodebookConfig& config() const { return config_; }
    std::size_t size() const { return config_.size; }
    std::size_t dim() const { return config_.dim; }
    bool initialized() const { return initialized_; }

    // [J, E] prototype vectors. A gradient leaf when the codebook is trained
    // by the optimizer instead of the EMA scheme.
    const Tensor& vectors() const { return vectors_; }
    Tensor& vectors() { return vectors_; }
    std::span<const double> row(std::size_t j) const;

    std::vector<double>& ema_cluster_size() { return ema_cluster_size_; }
    const std::vector<double>& ema_cluster_size() const { return ema_cluster_size_; }
    // [J * E], row-major
    std::vector<double>& ema_sum() { return ema_sum_; }
    const std::vector<double>& ema_sum() const { return ema_sum_; }

    // Sets vectors directly and marks the codebook initialized; EMA state is
    // reset to one unit of mass per entry.
    void set_vectors(std::span<const double> values);
    void mark_initialized() { initialized_ = true; }

    // Index of the nearest prototype; ties go to the smallest index.
    std::size_t nearest(std::span<const double> h) const;

private:
    CodebookConfig config_;
    Tensor vectors_;
    std::vector<double> ema_cluster_size_;
    std::vector<double> ema_sum_;
    bool initialized_ = false;
};

struct QuantizeResult {
    std::size_t index = 0;
    Tensor quantized;         // [E], exact copy of the codebook row
    Tensor st_output;         // [E], forward = quantized, gradient -> encoder
    Tensor vq_loss_codebook;  // ||sg(h) - z||^2
    Tensor vq_loss_commit;    // ||h - sg(z)||^2
};

QuantizeResult quantize(const Tensor& h_enc, const Codebook& cb);

// Row-wise quantization of a [B, E] batch of encoder outputs.
struct BatchQuantizeResult {
    std::vector<std::size_t> indices;
    Tensor quantized;         // [B, E]
    Tensor st_output;         // [B, E]
    Tensor vq_loss_codebook;  // [B, 1]
    Tensor vq_loss_commit;    // [B, 1]
};

BatchQuantizeResult quantize_batch(const Tensor& h_enc, const Codebook& cb);

// One-hot categorical posterior over the J entries.
std::vector<double> posterior(const Tensor& h_enc, const Codebook& cb);
// KL(q || p) with 0 log 0 = 0.
double kl_divergence(std::span<const double> q, std::span<const double> p);
double kl_to_uniform(std::span<const double> q);

struct KMeansReport {
    std::size_t reseeded_clusters = 0;
    std::optional<std::string> warning;
};

// Lloyd's algorithm on a row-major [M, E] batch, seeded with J distinct rows.
KMeansReport kmeans_init(Codebook& cb, std::span<const double> encodings, std::size_t iters, Rng& rng);

// EMA re-estimation of cluster sizes, sums and prototypes. Runs outside the
// gradient graph.
void ema_update(Codebook& cb, std::span<const double> encodings, std::span<const std::size_t> assignments);

// Replaces entries whose EMA cluster size fell below Q by random batch rows.
std::size_t replace_dead(Codebook& cb, std::span<const double> encodings, Rng& rng);

// beta * commit, plus the codebook term unless the EMA scheme handles it.
Tensor vq_loss(const QuantizeResult& result, const Codebook& cb, bool use_ema);
Tensor vq_loss(const BatchQuantizeResult& result, const Codebook& cb, bool use_ema);

// Number of entries with at least one assignment in `assignments`.
std::size_t utilization(std::span<const std::size_t> assignments, std::size_t codebook_size);

}  // namespace vqar
