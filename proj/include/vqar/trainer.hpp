#pragma once

// Mini-batch training with Adam, EMA codebook maintenance and checkpoints.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vqar/dataset.hpp"
#include "vqar/model.hpp"
#include "vqar/random.hpp"

namespace vqar {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    std::size_t batches_per_epoch = 0;  // 0: derived from the dataset
    std::size_t kmeans_iters = 10;
    std::uint64_t seed = 0;
};

// ceil(sum of usable positions / (batch * (C + P))), clamped to [1, 100].
std::size_t default_batches_per_epoch(const TimeSeriesDataset& ds, std::size_t batch_size);

struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

// One bias-corrected Adam update from the gradients stored on `params`.
// Parameters without a gradient are treated as having a zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t codebook_utilization = 0;
    std::size_t replacements = 0;
};

struct TrainState {
    std::unique_ptr<VqArModel> model;
    ModelConfig model_config;
    TrainConfig train_config;
    std::size_t context_length = 0;     // C of the training data
    std::size_t prediction_length = 0;  // P of the training data
    std::size_t epoch = 0;
    Rng rng;
    AdamState adam;
    std::vector<EpochLog> log;
    std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Builds a model from the dataset and trains it. Deterministic given the seed.
TrainState train(const TimeSeriesDataset& ds, const ModelConfig& model_config, const FeatureConfig& features,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Continues training an existing model for `epochs` epochs.
void train_epochs(TrainState& state, const TimeSeriesDataset& ds, std::size_t epochs, const EpochCallback& on_epoch);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace vqar
