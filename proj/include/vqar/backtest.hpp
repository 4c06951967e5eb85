#pragma once

// Back-testing: forecast the last P points of every series from the points
// before them and score the forecasts.

#include <cstdint>
#include <vector>

#include "vqar/metrics.hpp"
#include "vqar/model.hpp"

namespace vqar {

struct BacktestOptions {
    std::size_t num_samples = 100;
    std::uint64_t seed = 0;
    double noise_level = 0.0;
    std::size_t context_length = 0;  // 0: the dataset's C
};

struct Backtest {
    std::vector<ForecastResult> forecasts;
    std::vector<std::vector<double>> actuals;
    std::vector<std::vector<double>> insample;
    EvalReport report;
};

Backtest backtest(const VqArModel& model, const TimeSeriesDataset& ds, const BacktestOptions& options);

// Refuses to apply a checkpoint to a dataset whose covariates it cannot
// reproduce; the error names both feature sets.
void check_feature_compatibility(const FeatureConfig& trained, const FeatureConfig& target);

}  // namespace vqar
