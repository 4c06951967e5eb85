#include "vqar/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vqar/errors.hpp"

namespace vqar {

std::vector<double> ForecastResult::step_samples(std::size_t step) const {
    std::vector<double> out(num_samples);
    for (std::size_t s = 0; s < num_samples; ++s) out[s] = at(s, step);
    return out;
}

std::vector<double> perturb_context(std::span<const double> context, double level, Rng& rng) {
    if (level < 0.0) throw ContractError("noise level must be non-negative");
    std::vector<double> out(context.begin(), context.end());
    if (context.empty() || level == 0.0) return out;
    double mean = 0.0;
    for (double v : context) mean += v;
    mean /= static_cast<double>(context.size());
    double var = 0.0;
    for (double v : context) var += (v - mean) * (v - mean);
    const double sigma = std::sqrt(var / static_cast<double>(context.size()));
    if (sigma == 0.0) return out;
    std::normal_distribution<double> noise(0.0, level * sigma);
    for (auto& v : out) v += noise(rng);
    return out;
}

namespace {

// Substream index reserved for context noise; path indices stay far below it.
constexpr std::uint64_t kNoiseStream = std::numeric_limits<std::uint64_t>::max();

Tensor repeat_rows(std::span<const double> row, std::size_t times) {
    std::vector<double> v;
    v.reserve(row.size() * times);
    for (std::size_t i = 0; i < times; ++i) v.insert(v.end(), row.begin(), row.end());
    return Tensor::matrix(times, row.size(), std::move(v));
}

Tensor step_input(const VqArModel& model, const Tensor& identity, std::vector<std::vector<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t width = model.features().numeric_dim();
    std::vector<double> v;
    v.reserve(n * width);
    for (auto& r : rows) v.insert(v.end(), r.begin(), r.end());
    Tensor numeric = Tensor::matrix(n, width, std::move(v));
    return identity.defined() ? concat_cols({numeric, identity}) : numeric;
}

Tensor latent(const VqArModel& model, const Tensor& h_enc) {
    return quantize_batch(h_enc, model.codebook).quantized;
}

}  // namespace

ForecastResult forecast(const VqArModel& model, const Series& history, std::size_t context_length,
                        std::size_t horizon, const ForecastOptions& options) {
    if (options.num_samples == 0) throw ContractError("forecast needs at least one sample path");
    if (horizon == 0 || context_length == 0) throw ContractError("forecast needs positive horizon and context");
    if (history.target.empty()) throw DataError("series '" + history.item_id + "' has no history");
    NoGradGuard no_grad;

    const FeatureConfig& feats = model.features();
    const auto n = static_cast<std::int64_t>(history.target.size());
    const auto c = static_cast<std::int64_t>(context_length);
    const std::size_t paths = options.num_samples;

    std::vector<double> values = history.target;
    if (options.noise_level > 0.0) {
        Rng noise_rng = make_substream(options.seed, options.series_key, kNoiseStream);
        const std::size_t begin = static_cast<std::size_t>(std::max<std::int64_t>(0, n - c));
        auto noisy = perturb_context(std::span<const double>(values).subspan(begin), options.noise_level, noise_rng);
        std::copy(noisy.begin(), noisy.end(), values.begin() + static_cast<std::ptrdiff_t>(begin));
    }
    auto value_at = [&](const std::vector<double>& v, std::int64_t pos) {
        return pos >= 0 && pos < static_cast<std::int64_t>(v.size()) ? v[static_cast<std::size_t>(pos)] : 0.0;
    };

    std::vector<double> context(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < c; ++i) context[static_cast<std::size_t>(i)] = value_at(values, n - c + i);
    const double nu = compute_scale(context);

    ForecastResult result;
    result.item_id = history.item_id;
    result.num_samples = paths;
    result.horizon = horizon;
    result.nu = nu;
    result.start = history.time_at(n, feats.freq);
    result.samples.assign(paths * horizon, 0.0);

    const std::size_t cat = static_cast<std::size_t>(history.static_cat);
    std::vector<std::size_t> one_cat{cat};
    const Tensor identity_one = model.identity_rows(one_cat);

    // Warm-up over the context window, shared by every path.
    Tensor h_enc = Tensor::zeros({1, model.config().encoder_size});
    Tensor h_dec = Tensor::zeros({1, model.config().decoder_size});
    for (std::int64_t t = n - c + 1; t < n; ++t) {
        Tensor x_prev = Tensor::matrix(1, 1, {value_at(values, t - 1) / nu});
        Tensor cov = step_input(model, identity_one, {covariates_at(feats, history, values, t, nu)});
        h_enc = encode_step(model.encoder, h_enc, x_prev, cov);
        h_dec = decode_step(model.decoder, h_dec, latent(model, h_enc));
    }

    h_enc = repeat_rows(h_enc.data(), paths);
    h_dec = repeat_rows(h_dec.data(), paths);
    std::vector<std::size_t> cats(paths, cat);
    const Tensor identity = model.identity_rows(cats);
    std::vector<Rng> rngs;
    rngs.reserve(paths);
    for (std::size_t k = 0; k < paths; ++k) {
        rngs.push_back(make_substream(options.seed, options.series_key, options.first_path + k));
    }
    std::vector<std::vector<double>> path_values(paths, values);
    for (auto& pv : path_values) pv.reserve(values.size() + horizon);

    for (std::size_t h = 0; h < horizon; ++h) {
        const std::int64_t t = n + static_cast<std::int64_t>(h);
        std::vector<double> x(paths);
        std::vector<std::vector<double>> cov_rows;
        cov_rows.reserve(paths);
        for (std::size_t k = 0; k < paths; ++k) {
            x[k] = value_at(path_values[k], t - 1) / nu;
            cov_rows.push_back(covariates_at(feats, history, path_values[k], t, nu));
        }
        h_enc = encode_step(model.encoder, h_enc, Tensor::matrix(paths, 1, std::move(x)),
                            step_input(model, identity, std::move(cov_rows)));
        h_dec = decode_step(model.decoder, h_dec, latent(model, h_enc));
        DistributionParams params = rescale(project(model.head, h_dec), nu);
        for (std::size_t k = 0; k < paths; ++k) {
            const double draw = sample(params, k, rngs[k]);
            if (!std::isfinite(draw)) {
                throw NumericalError("non-finite sample for series '" + history.item_id + "' at horizon step " +
                                     std::to_string(h));
            }
            result.samples[k * horizon + h] = draw;
            path_values[k].push_back(draw);
        }
    }
    return result;
}

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? values[lo] : values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> quantiles(const ForecastResult& result, std::span<const double> levels) {
    std::vector<double> out(levels.size() * result.horizon);
    for (std::size_t h = 0; h < result.horizon; ++h) {
        auto column = result.step_samples(h);
        for (std::size_t i = 0; i < levels.size(); ++i) out[i * result.horizon + h] = empirical_quantile(column, levels[i]);
    }
    return out;
}

std::vector<double> mean_path(const ForecastResult& result) {
    std::vector<double> out(result.horizon, 0.0);
    for (std::size_t h = 0; h < result.horizon; ++h) {
        for (std::size_t s = 0; s < result.num_samples; ++s) out[h] += result.at(s, h);
        out[h] /= static_cast<double>(result.num_samples);
    }
    return out;
}

std::vector<double> median_path(const ForecastResult& result) {
    const double half = 0.5;
    return quantiles(result, std::span<const double>(&half, 1));
}

}  // namespace vqar
