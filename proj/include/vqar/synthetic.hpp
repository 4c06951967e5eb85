#pragma once

#include <cstddef>

#include "vqar/dataset.hpp"

namespace vqar {

struct SinusoidSuite {
    std::size_t num_series = 10;
    std::size_t length = 400;
    std::size_t prediction_length = 30;
    std::size_t context_length = 180;
    double relative_amplitude = 0.5;
};

// Noiseless daily sinusoids x_t = a_i (1 + b sin(2 pi t / period_i + phase_i))
// with levels a_i = 1 + i, periods cycling through 7, 14, 28 days and evenly
// spread phases. Fully deterministic.
TimeSeriesDataset make_sinusoid_suite(const SinusoidSuite& spec = {});

}  // namespace vqar
