#include "vqar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "vqar/errors.hpp"

namespace vqar {

namespace fs = std::filesystem;
using json = nlohmann::json;

Frequency parse_frequency(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "d" || s == "1d" || s == "daily" || s == "day") return Frequency::Daily;
    if (s == "h" || s == "1h" || s == "hourly" || s == "hour") return Frequency::Hourly;
    if (s == "30min" || s == "30t" || s == "0.5h" || s == "30m" || s == "half-hourly") return Frequency::HalfHourly;
    throw ConfigError("unsupported frequency '" + std::string(text) + "' (D | H | 30min)");
}

std::string to_string(Frequency freq) {
    switch (freq) {
        case Frequency::Daily:
            return "D";
        case Frequency::Hourly:
            return "H";
        case Frequency::HalfHourly:
            return "30min";
    }
    return "?";
}

std::chrono::seconds step_of(Frequency freq) {
    switch (freq) {
        case Frequency::Daily:
            return std::chrono::hours(24);
        case Frequency::Hourly:
            return std::chrono::hours(1);
        case Frequency::HalfHourly:
            return std::chrono::minutes(30);
    }
    return std::chrono::hours(24);
}

std::size_t seasonality(Frequency freq) {
    switch (freq) {
        case Frequency::Daily:
            return 7;
        case Frequency::Hourly:
            return 24;
        case Frequency::HalfHourly:
            return 48;
    }
    return 1;
}

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    int v = 0;
    if (pos + len > text.size()) throw DataError("malformed timestamp '" + std::string(whole) + "'");
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc() || ptr != text.data() + pos + len) {
        throw DataError("malformed timestamp '" + std::string(whole) + "'");
    }
    return v;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        throw DataError("malformed timestamp '" + std::string(text) + "'");
    }
    const year_month_day ymd{year{read_int(text, 0, 4, text)}, month{static_cast<unsigned>(read_int(text, 5, 2, text))},
                             day{static_cast<unsigned>(read_int(text, 8, 2, text))}};
    if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
    int hh = 0, mm = 0, ss = 0;
    if (text.size() > 10) {
        if (text[10] != ' ' && text[10] != 'T') throw DataError("malformed timestamp '" + std::string(text) + "'");
        hh = read_int(text, 11, 2, text);
        mm = read_int(text, 14, 2, text);
        if (text.size() >= 19) ss = read_int(text, 17, 2, text);
        if (hh > 23 || mm > 59 || ss > 59) throw DataError("invalid time of day '" + std::string(text) + "'");
    }
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto days = floor<std::chrono::days>(ts);
    const year_month_day ymd{days};
    const hh_mm_ss hms{ts - days};
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
       << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day()) << ' '
       << std::setw(2) << hms.hours().count() << ':' << std::setw(2) << hms.minutes().count() << ':' << std::setw(2)
       << hms.seconds().count();
    return os.str();
}

std::size_t TimeSeriesDataset::num_categories() const {
    std::int64_t top = -1;
    for (const auto& s : series) top = std::max(top, s.static_cat);
    return static_cast<std::size_t>(top + 1);
}

bool TimeSeriesDataset::integer_valued() const {
    for (const auto& s : series) {
        for (double v : s.target) {
            if (v < 0.0 || v != std::floor(v)) return false;
        }
    }
    return true;
}

Metadata load_metadata(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metadata file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("metadata " + path.string() + ": " + e.what());
    }
    Metadata m;
    if (!j.contains("freq") || !j.contains("prediction_length")) {
        throw ConfigError("metadata " + path.string() + " needs 'freq' and 'prediction_length'");
    }
    m.freq = parse_frequency(j.at("freq").get<std::string>());
    const auto p = j.at("prediction_length").get<std::int64_t>();
    if (p < 1) throw ConfigError("prediction_length must be >= 1");
    m.prediction_length = static_cast<std::size_t>(p);
    if (j.contains("context_length")) {
        const auto c = j.at("context_length").get<std::int64_t>();
        if (c < 1) throw ConfigError("context_length must be >= 1");
        m.context_length = static_cast<std::size_t>(c);
    }
    return m;
}

TimeSeriesDataset load_jsonl(const fs::path& path, const Metadata& meta) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());
    TimeSeriesDataset ds;
    ds.freq = meta.freq;
    ds.prediction_length = meta.prediction_length;
    ds.context_length = meta.context_length.value_or(6 * meta.prediction_length);

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": parse error: " + e.what());
        }
        Series s;
        try {
            s.start = parse_timestamp(j.at("start").get<std::string>());
            const auto& tgt = j.at("target");
            s.target.reserve(tgt.size());
            for (const auto& v : tgt) {
                // "NaN" strings and nulls are both rejected below.
                s.target.push_back(v.is_number() ? v.get<double>() : std::nan(""));
            }
            s.item_id = j.contains("item_id") ? (j["item_id"].is_string() ? j["item_id"].get<std::string>()
                                                                           : j["item_id"].dump())
                                              : std::to_string(ds.series.size());
            if (j.contains("feat_static_cat") && !j["feat_static_cat"].empty()) {
                s.static_cat = j["feat_static_cat"][0].get<std::int64_t>();
            } else {
                s.static_cat = static_cast<std::int64_t>(ds.series.size());
            }
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        if (s.static_cat < 0) throw DataError(where + ": negative feat_static_cat");
        for (std::size_t t = 0; t < s.target.size(); ++t) {
            if (!std::isfinite(s.target[t])) {
                throw DataError("series '" + s.item_id + "' has a non-finite target at position " + std::to_string(t));
            }
        }
        if (s.target.empty()) throw DataError("series '" + s.item_id + "' is empty");
        ds.series.push_back(std::move(s));
    }
    if (ds.series.empty()) throw DataError("dataset " + path.string() + " contains no series");
    return ds;
}

TimeSeriesDataset load_dataset(const fs::path& data, const std::optional<fs::path>& metadata) {
    if (!fs::exists(data)) throw DataError("data path " + data.string() + " does not exist");
    const fs::path dir = fs::is_directory(data) ? data : data.parent_path();
    const fs::path meta_path = metadata.value_or(dir / "metadata.json");
    if (!fs::exists(meta_path)) throw ConfigError("metadata file " + meta_path.string() + " not found");
    const Metadata meta = load_metadata(meta_path);
    if (!fs::is_directory(data)) return load_jsonl(data, meta);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(data)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .jsonl files in " + data.string());
    TimeSeriesDataset ds = load_jsonl(files[0], meta);
    for (std::size_t i = 1; i < files.size(); ++i) {
        auto more = load_jsonl(files[i], meta);
        for (auto& s : more.series) ds.series.push_back(std::move(s));
    }
    return ds;
}

void write_jsonl(const fs::path& path, const TimeSeriesDataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& s : ds.series) {
        json j;
        j["start"] = format_timestamp(s.start);
        j["target"] = s.target;
        j["item_id"] = s.item_id;
        j["feat_static_cat"] = {s.static_cat};
        out << j.dump(-1, ' ', false, json::error_handler_t::strict) << '\n';
    }
}

void write_metadata(const fs::path& path, const TimeSeriesDataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    json j{{"freq", to_string(ds.freq)},
           {"prediction_length", ds.prediction_length},
           {"context_length", ds.context_length}};
    out << j.dump(2) << '\n';
}

TimeSeriesDataset drop_last(const TimeSeriesDataset& ds, std::size_t steps) {
    TimeSeriesDataset out = ds;
    for (auto& s : out.series) {
        if (s.target.size() <= steps) {
            throw DataError("series '" + s.item_id + "' has " + std::to_string(s.target.size()) +
                            " points, not enough to hold out " + std::to_string(steps));
        }
        s.target.resize(s.target.size() - steps);
    }
    return out;
}

TimeSeriesDataset scaled_copy(const TimeSeriesDataset& ds, double c) {
    TimeSeriesDataset out = ds;
    for (auto& s : out.series) {
        for (auto& v : s.target) v *= c;
    }
    return out;
}

std::size_t FeatureConfig::num_time_features() const {
    switch (freq) {
        case Frequency::Daily:
            return 3;
        case Frequency::Hourly:
            return 4;
        case Frequency::HalfHourly:
            return 5;
    }
    return 0;
}

std::string FeatureConfig::describe() const {
    std::ostringstream os;
    os << "freq=" << to_string(freq) << " time_features=" << num_time_features() << " lags=(";
    for (std::size_t i = 0; i < lags.size(); ++i) os << (i ? "," : "") << lags[i];
    os << ") age=" << (use_age ? "on" : "off") << " identity=";
    if (use_identity) {
        os << embedding_dim << "x" << num_categories;
    } else {
        os << "off";
    }
    os << " F=" << dim();
    return os.str();
}

std::vector<std::size_t> default_lags(Frequency freq) {
    switch (freq) {
        case Frequency::Daily:
            return {1, 7, 14, 21, 28};
        case Frequency::Hourly:
            return {1, 24, 48, 168};
        case Frequency::HalfHourly:
            return {1, 48, 96, 336};
    }
    return {1};
}

FeatureConfig default_feature_config(const TimeSeriesDataset& ds, bool use_identity) {
    FeatureConfig cfg;
    cfg.freq = ds.freq;
    cfg.lags = default_lags(ds.freq);
    cfg.use_age = true;
    cfg.use_identity = use_identity;
    cfg.num_categories = use_identity ? ds.num_categories() : 0;
    cfg.embedding_dim = use_identity ? std::min<std::size_t>(16, (cfg.num_categories + 1) / 2) : 0;
    return cfg;
}

std::vector<double> time_features(Timestamp ts, Frequency freq) {
    using namespace std::chrono;
    const auto days = floor<std::chrono::days>(ts);
    const year_month_day ymd{days};
    const weekday wd{days};
    const hh_mm_ss hms{ts - days};
    const auto jan1 = sys_days{ymd.year() / January / 1};
    const double dow = static_cast<double>(wd.iso_encoding() - 1);  // Monday = 0
    const double dom = static_cast<double>(static_cast<unsigned>(ymd.day()) - 1);
    const double doy = static_cast<double>((days - jan1).count());
    std::vector<double> f{dow / 6.0 - 0.5, dom / 30.0 - 0.5, doy / 365.0 - 0.5};
    if (freq == Frequency::Hourly || freq == Frequency::HalfHourly) {
        f.push_back(static_cast<double>(hms.hours().count()) / 23.0 - 0.5);
    }
    if (freq == Frequency::HalfHourly) f.push_back(static_cast<double>(hms.minutes().count()) / 59.0 - 0.5);
    return f;
}

std::vector<double> lag_values(std::span<const double> target, std::int64_t t, std::span<const std::size_t> lags,
                               double nu) {
    std::vector<double> out;
    out.reserve(lags.size());
    for (std::size_t lag : lags) {
        const std::int64_t pos = t - static_cast<std::int64_t>(lag);
        const bool inside = pos >= 0 && pos < static_cast<std::int64_t>(target.size());
        out.push_back(inside ? target[static_cast<std::size_t>(pos)] / nu : 0.0);
    }
    return out;
}

double compute_scale(std::span<const double> context) {
    if (context.empty()) throw ContractError("compute_scale: empty context");
    double total = 0.0;
    for (double v : context) total += v;
    const double nu = total / static_cast<double>(context.size());
    return nu == 0.0 ? 1.0 : nu;
}

double age_feature(std::int64_t position, std::size_t series_length) {
    const double pos = static_cast<double>(std::max<std::int64_t>(position, 0));
    return std::log(2.0 + pos) / std::log(2.0 + static_cast<double>(series_length));
}

std::vector<double> covariates_at(const FeatureConfig& cfg, const Series& s, std::span<const double> values,
                                  std::int64_t t, double nu) {
    std::vector<double> row = time_features(s.time_at(t, cfg.freq), cfg.freq);
    auto lags = lag_values(values, t, cfg.lags, nu);
    row.insert(row.end(), lags.begin(), lags.end());
    if (cfg.use_age) row.push_back(age_feature(t, s.target.size()));
    return row;
}

TrainingWindow make_window(const TimeSeriesDataset& ds, const FeatureConfig& cfg, std::size_t item,
                           std::int64_t start) {
    if (item >= ds.size()) throw ContractError("make_window: series index out of range");
    const Series& s = ds.series[item];
    const std::size_t len = ds.context_length + ds.prediction_length;
    std::vector<double> raw(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
        const std::int64_t pos = start + static_cast<std::int64_t>(i);
        if (pos >= 0 && pos < static_cast<std::int64_t>(s.target.size())) raw[i] = s.target[static_cast<std::size_t>(pos)];
    }
    TrainingWindow w;
    w.item_index = item;
    w.category = static_cast<std::size_t>(s.static_cat);
    w.start = start;
    w.nu = compute_scale(std::span<const double>(raw).first(ds.context_length));
    w.scaled_target.resize(len);
    for (std::size_t i = 0; i < len; ++i) w.scaled_target[i] = raw[i] / w.nu;
    w.raw_target = std::move(raw);
    w.cov_dim = cfg.numeric_dim();
    w.covariates.reserve(len * w.cov_dim);
    for (std::size_t i = 0; i < len; ++i) {
        auto row = covariates_at(cfg, s, s.target, start + static_cast<std::int64_t>(i), w.nu);
        w.covariates.insert(w.covariates.end(), row.begin(), row.end());
    }
    return w;
}

TrainingWindow sample_window(const TimeSeriesDataset& ds, const FeatureConfig& cfg, Rng& rng) {
    if (ds.size() == 0) throw DataError("cannot sample a window from an empty dataset");
    std::uniform_int_distribution<std::size_t> pick_series(0, ds.size() - 1);
    const std::size_t item = pick_series(rng);
    const auto n = static_cast<std::int64_t>(ds.series[item].target.size());
    const auto len = static_cast<std::int64_t>(ds.context_length + ds.prediction_length);
    std::int64_t start = n - len;
    if (n >= len) {
        std::uniform_int_distribution<std::int64_t> pick_start(0, n - len);
        start = pick_start(rng);
    }
    return make_window(ds, cfg, item, start);
}

}  // namespace vqar
