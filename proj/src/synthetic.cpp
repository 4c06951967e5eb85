#include "vqar/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "vqar/errors.hpp"

namespace vqar {

TimeSeriesDataset make_sinusoid_suite(const SinusoidSuite& spec) {
    if (spec.num_series == 0 || spec.length == 0 || spec.prediction_length == 0 || spec.context_length == 0) {
        throw ConfigError("synthetic suite sizes must be positive");
    }
    static constexpr double kPeriods[] = {7.0, 14.0, 28.0};
    TimeSeriesDataset ds;
    ds.freq = Frequency::Daily;
    ds.prediction_length = spec.prediction_length;
    ds.context_length = spec.context_length;
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < spec.num_series; ++i) {
        Series s;
        s.item_id = "sin_" + std::to_string(i);
        s.start = parse_timestamp("2020-01-01");
        s.static_cat = static_cast<std::int64_t>(i);
        const double level = 1.0 + static_cast<double>(i);
        const double period = kPeriods[i % 3];
        const double phase = two_pi * static_cast<double>(i) / static_cast<double>(spec.num_series);
        s.target.resize(spec.length);
        for (std::size_t t = 0; t < spec.length; ++t) {
            s.target[t] = level * (1.0 + spec.relative_amplitude * std::sin(two_pi * static_cast<double>(t) / period + phase));
        }
        ds.series.push_back(std::move(s));
    }
    return ds;
}

}  // namespace vqar
