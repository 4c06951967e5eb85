#pragma once

// Forecast accuracy metrics. Undefined values (zero denominators) come back as
// NaN; the report collects a flag for each.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqar/forecaster.hpp"

namespace vqar {

inline constexpr double kMsisAlpha = 0.05;
std::vector<double> default_quantile_levels();  // 0.1, 0.2, ..., 0.9

// 2 * sum |(xhat - x) (1{x <= xhat} - q)|, unnormalized.
double pinball_sum(std::span<const double> actual, std::span<const double> predicted, double q);
// pinball_sum / sum |x|.
double quantile_loss(std::span<const double> actual, std::span<const double> predicted, double q);

// Mean over `levels` of the quantile loss at the empirical sample quantiles,
// pooled over every series and step and normalized by the pooled sum |x|.
double crps_empirical(std::span<const ForecastResult> forecasts, std::span<const std::vector<double>> actuals,
                      std::span<const double> levels);

// Mean absolute seasonal difference of the in-sample series; NaN if the
// series is not longer than m or the differences vanish relative to the
// series level (below 1e-10 of mean |x|).
double seasonal_naive_mae(std::span<const double> insample, std::size_t m);

double msis(std::span<const double> upper, std::span<const double> lower, std::span<const double> actual,
            std::span<const double> insample, std::size_t m, double alpha = kMsisAlpha);

double nrmse(std::span<const double> actual, std::span<const double> forecast);
double smape(std::span<const double> actual, std::span<const double> forecast);
double mase(std::span<const double> actual, std::span<const double> forecast, std::span<const double> insample,
            std::size_t m);

struct PointMetrics {
    double nrmse = 0.0;
    double smape = 0.0;
    double mase = 0.0;
};
PointMetrics point_metrics(std::span<const double> actual, std::span<const double> forecast,
                           std::span<const double> insample, std::size_t m);

struct SeriesEvaluation {
    std::string item_id;
    double crps = 0.0;  // normalized within the series
    double ql50 = 0.0;
    double ql90 = 0.0;
    double msis = 0.0;
    double nrmse = 0.0;
    double smape = 0.0;
    double mase = 0.0;
};

struct EvalReport {
    double crps = 0.0;
    double ql50 = 0.0;
    double ql90 = 0.0;
    double msis = 0.0;
    double nrmse = 0.0;
    double smape = 0.0;
    double mase = 0.0;
    std::vector<SeriesEvaluation> per_series;
    std::vector<double> quantile_levels;
    std::size_t seasonality = 1;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    // One header line and one row, columns in the order CRPS QL50 QL90 MSIS NRMSE sMAPE MASE.
    std::string to_table() const;
};

// CRPS, QL50, QL90 and NRMSE are pooled over all series and steps; MSIS,
// sMAPE and MASE are computed per series and averaged over the series where
// they are defined. sMAPE and MASE use the median path, NRMSE the mean path.
EvalReport evaluate_forecasts(std::span<const ForecastResult> forecasts, std::span<const std::vector<double>> actuals,
                              std::span<const std::vector<double>> insample, std::size_t m,
                              std::span<const double> levels);

}  // namespace vqar
