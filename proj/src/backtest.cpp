#include "vqar/backtest.hpp"

#include "vqar/errors.hpp"

namespace vqar {

Backtest backtest(const VqArModel& model, const TimeSeriesDataset& ds, const BacktestOptions& options) {
    const std::size_t p = ds.prediction_length;
    const std::size_t c = options.context_length > 0 ? options.context_length : ds.context_length;
    if (ds.size() == 0) throw DataError("back-test on an empty dataset");
    Backtest out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Series& s = ds.series[i];
        if (s.target.size() <= p) {
            throw DataError("series '" + s.item_id + "' has " + std::to_string(s.target.size()) +
                            " points; the back-test horizon needs more than " + std::to_string(p));
        }
        Series history = s;
        history.target.resize(s.target.size() - p);
        ForecastOptions fo;
        fo.num_samples = options.num_samples;
        fo.seed = options.seed;
        fo.series_key = i;
        fo.noise_level = options.noise_level;
        out.forecasts.push_back(forecast(model, history, c, p, fo));
        out.actuals.emplace_back(s.target.end() - static_cast<std::ptrdiff_t>(p), s.target.end());
        out.insample.push_back(std::move(history.target));
    }
    const auto levels = default_quantile_levels();
    out.report = evaluate_forecasts(out.forecasts, out.actuals, out.insample, seasonality(ds.freq), levels);
    return out;
}

void check_feature_compatibility(const FeatureConfig& trained, const FeatureConfig& target) {
    const bool same = trained.freq == target.freq && trained.lags == target.lags && trained.use_age == target.use_age &&
                      trained.dim() == target.dim();
    if (!same) {
        throw ConfigError("feature mismatch: checkpoint was trained with [" + trained.describe() +
                          "] but the target dataset yields [" + target.describe() + "]");
    }
}

}  // namespace vqar
