#pragma once

// Autoregressive sample-path forecasting and empirical quantiles.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vqar/dataset.hpp"
#include "vqar/model.hpp"
#include "vqar/random.hpp"

namespace vqar {

struct ForecastOptions {
    std::size_t num_samples = 100;  // S
    std::uint64_t seed = 0;
    std::uint64_t series_key = 0;   // selects the RNG substreams of this series
    std::size_t first_path = 0;     // path k draws from substream first_path + k
    double noise_level = 0.0;       // context perturbation, in units of the context std
};

struct ForecastResult {
    std::string item_id;
    std::size_t num_samples = 0;
    std::size_t horizon = 0;
    std::vector<double> samples;  // [S, P] row-major, raw scale
    double nu = 1.0;
    Timestamp start{};            // timestamp of the first forecast step

    double at(std::size_t path, std::size_t step) const { return samples[path * horizon + step]; }
    std::vector<double> step_samples(std::size_t step) const;
};

// Forecasts `horizon` steps after the end of `history`, conditioning on its
// last `context_length` points.
ForecastResult forecast(const VqArModel& model, const Series& history, std::size_t context_length,
                        std::size_t horizon, const ForecastOptions& options);

// Adds iid N(0, (level * sigma)^2) noise to every point, sigma being the
// population standard deviation of `context`.
std::vector<double> perturb_context(std::span<const double> context, double level, Rng& rng);

// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);
// [levels, P] row-major.
std::vector<double> quantiles(const ForecastResult& result, std::span<const double> levels);
std::vector<double> mean_path(const ForecastResult& result);
std::vector<double> median_path(const ForecastResult& result);

}  // namespace vqar
