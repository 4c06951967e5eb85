#pragma once

// Time-series datasets: JSON-lines ingestion, covariates (time features,
// lags, age), mean scaling and random training windows.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vqar/random.hpp"

namespace vqar {

enum class Frequency { HalfHourly, Hourly, Daily };

// Accepts pandas-style aliases: "D"/"1D"/"daily", "H"/"1H"/"hourly",
// "30min"/"30T"/"0.5H".
Frequency parse_frequency(std::string_view text);
std::string to_string(Frequency freq);
std::chrono::seconds step_of(Frequency freq);
// Seasonal period used by MASE and MSIS.
std::size_t seasonality(Frequency freq);

using Timestamp = std::chrono::sys_seconds;

// "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or with a 'T' separator.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

struct Series {
    std::string item_id;
    Timestamp start{};
    std::vector<double> target;
    std::int64_t static_cat = 0;

    Timestamp time_at(std::int64_t position, Frequency freq) const { return start + position * step_of(freq); }
};

struct Metadata {
    Frequency freq = Frequency::Daily;
    std::size_t prediction_length = 1;
    std::optional<std::size_t> context_length;
};

struct TimeSeriesDataset {
    std::vector<Series> series;
    Frequency freq = Frequency::Daily;
    std::size_t prediction_length = 1;  // P
    std::size_t context_length = 6;     // C

    std::size_t size() const { return series.size(); }
    // Number of identity categories (max static_cat + 1).
    std::size_t num_categories() const;
    bool integer_valued() const;
};

Metadata load_metadata(const std::filesystem::path& path);
// Parses one JSON object per line. `context_length` defaults to 6 P.
TimeSeriesDataset load_jsonl(const std::filesystem::path& path, const Metadata& meta);
// A directory holding metadata.json and one or more *.jsonl files, or a
// single .jsonl file with metadata next to it.
TimeSeriesDataset load_dataset(const std::filesystem::path& data, const std::optional<std::filesystem::path>& metadata);

void write_jsonl(const std::filesystem::path& path, const TimeSeriesDataset& ds);
void write_metadata(const std::filesystem::path& path, const TimeSeriesDataset& ds);

// Every series truncated by `steps` at the end (back-test split).
TimeSeriesDataset drop_last(const TimeSeriesDataset& ds, std::size_t steps);
// Every target multiplied by c.
TimeSeriesDataset scaled_copy(const TimeSeriesDataset& ds, double c);

struct FeatureConfig {
    Frequency freq = Frequency::Daily;
    std::vector<std::size_t> lags;
    bool use_age = true;
    bool use_identity = true;
    std::size_t embedding_dim = 0;  // used only when use_identity
    std::size_t num_categories = 0;

    std::size_t num_time_features() const;
    // Covariates computed from data (time features, lags, age).
    std::size_t numeric_dim() const { return num_time_features() + lags.size() + (use_age ? 1 : 0); }
    // F: numeric covariates plus the identity embedding.
    std::size_t dim() const { return numeric_dim() + (use_identity ? embedding_dim : 0); }
    std::size_t max_lag() const { return lags.empty() ? 0 : lags.back(); }
    std::string describe() const;
};

std::vector<std::size_t> default_lags(Frequency freq);
FeatureConfig default_feature_config(const TimeSeriesDataset& ds, bool use_identity);

// Calendar features scaled to [-0.5, 0.5]:
// daily (day_of_week, day_of_month, day_of_year), hourly adds hour_of_day,
// half-hourly adds hour_of_day and minute_of_hour.
std::vector<double> time_features(Timestamp ts, Frequency freq);

// x_{t-lag} / nu for each lag; positions before the series start read 0.
std::vector<double> lag_values(std::span<const double> target, std::int64_t t, std::span<const std::size_t> lags,
                               double nu);

// Context mean, or 1 when that mean is exactly zero.
double compute_scale(std::span<const double> context);

double age_feature(std::int64_t position, std::size_t series_length);

// Numeric covariates for absolute position t of a series. `values` holds the
// series as observed so far (history plus any sampled continuation).
std::vector<double> covariates_at(const FeatureConfig& cfg, const Series& s, std::span<const double> values,
                                  std::int64_t t, double nu);

struct TrainingWindow {
    std::size_t item_index = 0;
    std::size_t category = 0;            // static_cat of the series
    std::int64_t start = 0;              // absolute position of window step 0; negative when padded
    std::vector<double> raw_target;     // C + P, zero where padded
    std::vector<double> scaled_target;  // raw_target / nu
    std::vector<double> covariates;     // (C + P) x numeric_dim, row-major
    std::size_t cov_dim = 0;
    double nu = 1.0;

    std::size_t length() const { return scaled_target.size(); }
    std::span<const double> covariates_row(std::size_t i) const {
        return std::span<const double>(covariates).subspan(i * cov_dim, cov_dim);
    }
};

// The window of length C + P starting at absolute position `start`.
TrainingWindow make_window(const TimeSeriesDataset& ds, const FeatureConfig& cfg, std::size_t item,
                           std::int64_t start);

// Uniform series, then a uniform start among positions whose window fits in
// the series; a series shorter than C + P has the single left-padded start.
TrainingWindow sample_window(const TimeSeriesDataset& ds, const FeatureConfig& cfg, Rng& rng);

}  // namespace vqar
