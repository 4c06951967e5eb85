#include "vqar/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vqar/errors.hpp"

namespace vqar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDegenerateScale = 1e-10;

void same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ContractError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                            ")");
    }
}

double abs_sum(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

std::vector<double> column(const std::vector<double>& matrix, std::size_t row, std::size_t width) {
    return {matrix.begin() + static_cast<std::ptrdiff_t>(row * width),
            matrix.begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
}

}  // namespace

std::vector<double> default_quantile_levels() {
    std::vector<double> q;
    for (int i = 1; i <= 9; ++i) q.push_back(i / 10.0);
    return q;
}

double pinball_sum(std::span<const double> actual, std::span<const double> predicted, double q) {
    same_length(actual.size(), predicted.size(), "quantile loss");
    if (!(q > 0.0 && q < 1.0)) throw ContractError("quantile level must lie in (0, 1)");
    double s = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double indicator = actual[t] <= predicted[t] ? 1.0 : 0.0;
        s += std::abs((predicted[t] - actual[t]) * (indicator - q));
    }
    return 2.0 * s;
}

double quantile_loss(std::span<const double> actual, std::span<const double> predicted, double q) {
    const double num = pinball_sum(actual, predicted, q);
    const double den = abs_sum(actual);
    return den == 0.0 ? kNaN : num / den;
}

double crps_empirical(std::span<const ForecastResult> forecasts, std::span<const std::vector<double>> actuals,
                      std::span<const double> levels) {
    same_length(forecasts.size(), actuals.size(), "crps");
    if (levels.empty()) throw ContractError("crps needs at least one quantile level");
    double den = 0.0;
    double num = 0.0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        same_length(forecasts[i].horizon, actuals[i].size(), "crps");
        den += abs_sum(actuals[i]);
        auto q = quantiles(forecasts[i], levels);
        for (std::size_t k = 0; k < levels.size(); ++k) {
            num += pinball_sum(actuals[i], column(q, k, forecasts[i].horizon), levels[k]);
        }
    }
    return den == 0.0 ? kNaN : num / den / static_cast<double>(levels.size());
}

double seasonal_naive_mae(std::span<const double> insample, std::size_t m) {
    if (m == 0) throw ContractError("seasonality must be >= 1");
    if (insample.size() <= m) return kNaN;
    double s = 0.0;
    for (std::size_t t = m; t < insample.size(); ++t) s += std::abs(insample[t] - insample[t - m]);
    s /= static_cast<double>(insample.size() - m);
    // An exactly periodic series leaves only rounding noise here; dividing by
    // it would report astronomically large scores.
    const double level = abs_sum(insample) / static_cast<double>(insample.size());
    return s <= kDegenerateScale * level ? kNaN : s;
}

double msis(std::span<const double> upper, std::span<const double> lower, std::span<const double> actual,
            std::span<const double> insample, std::size_t m, double alpha) {
    same_length(upper.size(), actual.size(), "msis");
    same_length(lower.size(), actual.size(), "msis");
    if (actual.empty()) throw ContractError("msis of an empty horizon");
    const double scale = seasonal_naive_mae(insample, m);
    if (std::isnan(scale)) return kNaN;
    double s = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (upper[t] < lower[t]) throw ContractError("msis: upper bound below lower bound");
        s += upper[t] - lower[t];
        if (actual[t] < lower[t]) s += 2.0 / alpha * (lower[t] - actual[t]);
        if (actual[t] > upper[t]) s += 2.0 / alpha * (actual[t] - upper[t]);
    }
    return s / static_cast<double>(actual.size()) / scale;
}

double nrmse(std::span<const double> actual, std::span<const double> forecast) {
    same_length(actual.size(), forecast.size(), "nrmse");
    if (actual.empty()) throw ContractError("nrmse of an empty horizon");
    double se = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) se += (actual[t] - forecast[t]) * (actual[t] - forecast[t]);
    const double n = static_cast<double>(actual.size());
    const double level = abs_sum(actual) / n;
    return level == 0.0 ? kNaN : std::sqrt(se / n) / level;
}

double smape(std::span<const double> actual, std::span<const double> forecast) {
    same_length(actual.size(), forecast.size(), "smape");
    if (actual.empty()) throw ContractError("smape of an empty horizon");
    double s = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const double den = std::abs(actual[t]) + std::abs(forecast[t]);
        if (den > 0.0) s += std::abs(actual[t] - forecast[t]) / den;
    }
    return 2.0 * s / static_cast<double>(actual.size());
}

double mase(std::span<const double> actual, std::span<const double> forecast, std::span<const double> insample,
            std::size_t m) {
    same_length(actual.size(), forecast.size(), "mase");
    if (actual.empty()) throw ContractError("mase of an empty horizon");
    const double scale = seasonal_naive_mae(insample, m);
    if (std::isnan(scale)) return kNaN;
    double s = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) s += std::abs(actual[t] - forecast[t]);
    return s / static_cast<double>(actual.size()) / scale;
}

PointMetrics point_metrics(std::span<const double> actual, std::span<const double> forecast,
                           std::span<const double> insample, std::size_t m) {
    return {nrmse(actual, forecast), smape(actual, forecast), mase(actual, forecast, insample, m)};
}

EvalReport evaluate_forecasts(std::span<const ForecastResult> forecasts, std::span<const std::vector<double>> actuals,
                              std::span<const std::vector<double>> insample, std::size_t m,
                              std::span<const double> levels) {
    same_length(forecasts.size(), actuals.size(), "evaluate");
    same_length(forecasts.size(), insample.size(), "evaluate");
    if (forecasts.empty()) throw DataError("nothing to evaluate");
    EvalReport report;
    report.quantile_levels.assign(levels.begin(), levels.end());
    report.seasonality = m;

    double abs_total = 0.0, se_total = 0.0, ql50 = 0.0, ql90 = 0.0;
    std::size_t points = 0;
    double msis_sum = 0.0, smape_sum = 0.0, mase_sum = 0.0;
    std::size_t msis_n = 0, mase_n = 0;
    const double tail[] = {kMsisAlpha / 2.0, 0.5, 0.9, 1.0 - kMsisAlpha / 2.0};
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        const auto& f = forecasts[i];
        const auto& x = actuals[i];
        same_length(f.horizon, x.size(), "evaluate");
        auto q = quantiles(f, tail);
        const auto lower = column(q, 0, f.horizon);
        const auto median = column(q, 1, f.horizon);
        const auto q90 = column(q, 2, f.horizon);
        const auto upper = column(q, 3, f.horizon);
        const auto mean = mean_path(f);

        SeriesEvaluation s;
        s.item_id = f.item_id;
        s.crps = crps_empirical(std::span<const ForecastResult>(&f, 1), std::span<const std::vector<double>>(&x, 1),
                                levels);
        s.ql50 = quantile_loss(x, median, 0.5);
        s.ql90 = quantile_loss(x, q90, 0.9);
        s.msis = msis(upper, lower, x, insample[i], m);
        s.nrmse = nrmse(x, mean);
        s.smape = smape(x, median);
        s.mase = mase(x, median, insample[i], m);
        report.per_series.push_back(s);

        abs_total += abs_sum(x);
        ql50 += pinball_sum(x, median, 0.5);
        ql90 += pinball_sum(x, q90, 0.9);
        for (std::size_t t = 0; t < x.size(); ++t) se_total += (x[t] - mean[t]) * (x[t] - mean[t]);
        points += x.size();
        smape_sum += s.smape;
        if (!std::isnan(s.msis)) {
            msis_sum += s.msis;
            ++msis_n;
        } else {
            report.flags.push_back("msis undefined for series '" + s.item_id + "' (seasonal-naive scale is zero or history too short)");
        }
        if (!std::isnan(s.mase)) {
            mase_sum += s.mase;
            ++mase_n;
        } else {
            report.flags.push_back("mase undefined for series '" + s.item_id + "' (seasonal-naive scale is zero or history too short)");
        }
    }
    report.crps = crps_empirical(forecasts, actuals, levels);
    if (abs_total == 0.0) {
        report.flags.push_back("sum |x| is zero: crps, ql50, ql90 and nrmse are undefined");
        report.ql50 = report.ql90 = report.nrmse = kNaN;
    } else {
        report.ql50 = ql50 / abs_total;
        report.ql90 = ql90 / abs_total;
        const double n = static_cast<double>(points);
        report.nrmse = std::sqrt(se_total / n) / (abs_total / n);
    }
    report.smape = smape_sum / static_cast<double>(forecasts.size());
    report.msis = msis_n ? msis_sum / static_cast<double>(msis_n) : kNaN;
    report.mase = mase_n ? mase_sum / static_cast<double>(mase_n) : kNaN;
    return report;
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : per_series) {
        series.push_back({{"item_id", s.item_id},
                          {"crps", number(s.crps)},
                          {"ql50", number(s.ql50)},
                          {"ql90", number(s.ql90)},
                          {"msis", number(s.msis)},
                          {"nrmse", number(s.nrmse)},
                          {"smape", number(s.smape)},
                          {"mase", number(s.mase)}});
    }
    return {{"metrics",
             {{"crps", number(crps)},
              {"ql50", number(ql50)},
              {"ql90", number(ql90)},
              {"msis", number(msis)},
              {"nrmse", number(nrmse)},
              {"smape", number(smape)},
              {"mase", number(mase)}}},
            {"config",
             {{"quantile_levels", quantile_levels},
              {"seasonality", seasonality},
              {"msis_alpha", kMsisAlpha},
              {"normalization", "global sum |x| for crps/ql/nrmse; per-series mean for msis/smape/mase"}}},
            {"flags", flags},
            {"per_series", series}};
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << std::left;
    for (const char* h : {"CRPS", "QL50", "QL90", "MSIS", "NRMSE", "sMAPE", "MASE"}) os << std::setw(11) << h;
    os << '\n' << std::fixed << std::setprecision(4);
    for (double v : {crps, ql50, ql90, msis, nrmse, smape, mase}) os << std::setw(10) << v << ' ';
    os << '\n';
    return os.str();
}

}  // namespace vqar
