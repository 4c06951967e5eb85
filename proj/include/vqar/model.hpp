#pragma once

// The full VQ-AR network: encoder GRU over (previous target, covariates),
// vector-quantization bottleneck, decoder GRU over the quantized latent and a
// distribution head. Also holds the identity embedding.

#include <cstddef>
#include <span>
#include <vector>

#include "vqar/dataset.hpp"
#include "vqar/heads.hpp"
#include "vqar/quantizer.hpp"
#include "vqar/recurrent.hpp"

namespace vqar {

struct ModelConfig {
    std::size_t encoder_size = 64;   // E
    std::size_t decoder_size = 40;   // H
    std::size_t codebook_size = 128; // J
    double commitment_cost = 0.25;   // beta
    double replace_threshold = 2.0;  // Q
    double ema_decay = 0.99;         // gamma
    bool use_ema = true;
    HeadFamily head = HeadFamily::Gaussian;
};

class VqArModel {
public:
    VqArModel(const ModelConfig& config, const FeatureConfig& features, Rng& rng);

    const ModelConfig& config() const { return config_; }
    const FeatureConfig& features() const { return features_; }

    GruCell encoder;
    GruCell decoder;
    Codebook codebook;
    HeadProjection head;
    Tensor embedding;  // [categories, embedding_dim]; undefined without identity features

    // Everything the optimizer updates. The codebook joins the list only when
    // it is trained by gradient instead of the EMA scheme.
    std::vector<Tensor> parameters() const;

    // Identity embedding rows for the given categories, or an undefined tensor.
    Tensor identity_rows(std::span<const std::size_t> categories) const;

private:
    ModelConfig config_;
    FeatureConfig features_;
};

struct ForwardOptions {
    // Per-step codebook indices to use instead of the nearest entry, laid out
    // [step][window]. Used to check gradients at a fixed assignment pattern.
    std::span<const std::size_t> forced_indices{};
    // With forced indices: evaluate the smooth surrogate of the loss around a
    // base point (h0, z0), both [T * B, E]. Every stop-gradient operand is
    // replaced by its base value and the decoder sees h + (z0 - h0), so the
    // surrogate's exact gradient at the base point is the straight-through
    // gradient. Finite differences of it check the composed model.
    std::span<const double> base_encodings{};
    std::span<const double> base_quantized{};
    bool keep_step_losses = false;
};

struct BatchForward {
    Tensor loss;                          // mean over windows and positions
    std::vector<Tensor> step_losses;      // per position, [B, 1]; only when requested
    std::vector<double> encodings;        // [T * B, E] row-major, step-major
    std::vector<std::size_t> assignments; // [T * B]
    double nll_sum = 0.0;
};

// Teacher-forced pass over positions 1 .. C+P-1 of each window.
BatchForward forward_batch(const VqArModel& model, std::span<const TrainingWindow> windows,
                           const ForwardOptions& options = {});

// Encoder-only pass returning the [T * B, E] encoder outputs (k-means warm-up).
std::vector<double> encode_windows(const VqArModel& model, std::span<const TrainingWindow> windows);

// Loss at a single position t (1 <= t <= C+P-1) of one window.
Tensor step_loss(const VqArModel& model, const TrainingWindow& window, std::size_t t);

}  // namespace vqar
