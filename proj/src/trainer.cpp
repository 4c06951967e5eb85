#include "vqar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vqar/errors.hpp"

namespace vqar {

using json = nlohmann::json;

std::size_t default_batches_per_epoch(const TimeSeriesDataset& ds, std::size_t batch_size) {
    const std::size_t window = ds.context_length + ds.prediction_length;
    std::size_t usable = 0;
    for (const auto& s : ds.series) usable += s.target.size() >= window ? s.target.size() - window + 1 : 1;
    const std::size_t denom = std::max<std::size_t>(1, batch_size * window);
    return std::clamp<std::size_t>((usable + denom - 1) / denom, 1, 100);
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ContractError("adam_step: parameter list changed between steps");
    ++state.step;
    const double b1 = AdamState::kBeta1, b2 = AdamState::kBeta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != params[k].size()) throw ContractError("adam_step: parameter size changed between steps");
        auto data = params[k].mutable_data();
        const bool has = params[k].has_grad();
        std::span<const double> g = has ? params[k].grad() : std::span<const double>();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double gi = has ? g[i] : 0.0;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            data[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
        }
    }
}

namespace {

void validate(const TimeSeriesDataset& ds, const ModelConfig& mc, const TrainConfig& cfg) {
    if (ds.size() == 0) throw DataError("training needs at least one series");
    if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (mc.codebook_size == 0) throw ConfigError("codebook size J must be >= 1");
    if (mc.head == HeadFamily::NegativeBinomial && !ds.integer_valued()) {
        throw DataError("the negative binomial head needs non-negative integer targets");
    }
}

std::string describe_batch(const std::vector<TrainingWindow>& batch) {
    std::ostringstream os;
    for (std::size_t i = 0; i < batch.size() && i < 8; ++i) {
        os << (i ? ", " : "") << "series " << batch[i].item_index << " @" << batch[i].start;
    }
    if (batch.size() > 8) os << ", ...";
    return os.str();
}

}  // namespace

void train_epochs(TrainState& state, const TimeSeriesDataset& ds, std::size_t epochs, const EpochCallback& on_epoch) {
    VqArModel& model = *state.model;
    const TrainConfig& cfg = state.train_config;
    validate(ds, state.model_config, cfg);
    const std::size_t per_epoch =
        cfg.batches_per_epoch > 0 ? cfg.batches_per_epoch : default_batches_per_epoch(ds, cfg.batch_size);
    std::vector<Tensor> params = model.parameters();
    const bool ema = state.model_config.use_ema;

    for (std::size_t e = 0; e < epochs; ++e) {
        EpochLog entry;
        entry.epoch = state.epoch + 1;
        std::vector<bool> used(model.codebook.size(), false);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            std::vector<TrainingWindow> batch;
            batch.reserve(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(sample_window(ds, model.features(), state.rng));

            if (!model.codebook.initialized()) {
                // Warm-up: the encodings of the first batch seed the codebook.
                auto enc = encode_windows(model, batch);
                auto report = kmeans_init(model.codebook, enc, cfg.kmeans_iters, state.rng);
                if (report.warning) state.warnings.push_back(*report.warning);
                batch.clear();
                for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                    batch.push_back(sample_window(ds, model.features(), state.rng));
                }
            }

            for (auto& p : params) p.zero_grad();
            BatchForward fwd;
            try {
                fwd = forward_batch(model, batch);
                fwd.loss.backward();
            } catch (const NumericalError& err) {
                throw NumericalError("training diverged at epoch " + std::to_string(entry.epoch) + ", batch " +
                                     std::to_string(b + 1) + " (" + describe_batch(batch) + "): " + err.what());
            }
            const double loss = fwd.loss.item();
            adam_step(params, state.adam, cfg.learning_rate);
            for (auto& p : params) {
                for (double v : p.data()) {
                    if (!std::isfinite(v)) {
                        throw NumericalError("non-finite parameter after the update at epoch " +
                                             std::to_string(entry.epoch) + ", batch " + std::to_string(b + 1) + " (" +
                                             describe_batch(batch) + ")");
                    }
                }
            }
            if (ema) {
                ema_update(model.codebook, fwd.encodings, fwd.assignments);
                entry.replacements += replace_dead(model.codebook, fwd.encodings, state.rng);
            }
            for (auto a : fwd.assignments) used[a] = true;
            loss_sum += loss;
        }
        entry.mean_loss = loss_sum / static_cast<double>(per_epoch);
        entry.codebook_utilization = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
        ++state.epoch;
        state.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    for (auto& p : params) p.zero_grad();
}

TrainState train(const TimeSeriesDataset& ds, const ModelConfig& model_config, const FeatureConfig& features,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
    validate(ds, model_config, cfg);
    TrainState state;
    state.model_config = model_config;
    state.train_config = cfg;
    state.context_length = ds.context_length;
    state.prediction_length = ds.prediction_length;
    state.rng = Rng(substream_seed(cfg.seed, 0, 0));
    Rng init = make_substream(cfg.seed, 1, 0);
    state.model = std::make_unique<VqArModel>(model_config, features, init);
    train_epochs(state, ds, cfg.epochs, on_epoch);
    return state;
}

// Checkpoint layout: "VQAR", u32 version, u64 header length, JSON header,
// then raw little-endian doubles for every parameter block, the codebook EMA
// statistics and the Adam moments, each prefixed by its u64 length.

namespace {

constexpr char kMagic[4] = {'V', 'Q', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint is truncated");
    return v;
}

void put_block(std::ostream& out, std::span<const double> values) {
    put<std::uint64_t>(out, values.size());
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void get_block(std::istream& in, std::span<double> dest, const std::string& what) {
    const auto n = get<std::uint64_t>(in);
    if (n != dest.size()) {
        throw DataError("checkpoint block '" + what + "' has " + std::to_string(n) + " values, expected " +
                        std::to_string(dest.size()));
    }
    in.read(reinterpret_cast<char*>(dest.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("checkpoint is truncated in block '" + what + "'");
}

json model_config_json(const ModelConfig& c) {
    return {{"encoder_size", c.encoder_size},       {"decoder_size", c.decoder_size},
            {"codebook_size", c.codebook_size},     {"commitment_cost", c.commitment_cost},
            {"replace_threshold", c.replace_threshold}, {"ema_decay", c.ema_decay},
            {"use_ema", c.use_ema},                 {"head", to_string(c.head)}};
}

ModelConfig model_config_from(const json& j) {
    ModelConfig c;
    c.encoder_size = j.at("encoder_size");
    c.decoder_size = j.at("decoder_size");
    c.codebook_size = j.at("codebook_size");
    c.commitment_cost = j.at("commitment_cost");
    c.replace_threshold = j.at("replace_threshold");
    c.ema_decay = j.at("ema_decay");
    c.use_ema = j.at("use_ema");
    c.head = parse_head_family(j.at("head").get<std::string>());
    return c;
}

json feature_config_json(const FeatureConfig& f) {
    return {{"freq", to_string(f.freq)},        {"lags", f.lags},
            {"use_age", f.use_age},             {"use_identity", f.use_identity},
            {"embedding_dim", f.embedding_dim}, {"num_categories", f.num_categories}};
}

FeatureConfig feature_config_from(const json& j) {
    FeatureConfig f;
    f.freq = parse_frequency(j.at("freq").get<std::string>());
    f.lags = j.at("lags").get<std::vector<std::size_t>>();
    f.use_age = j.at("use_age");
    f.use_identity = j.at("use_identity");
    f.embedding_dim = j.at("embedding_dim");
    f.num_categories = j.at("num_categories");
    return f;
}

json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"batches_per_epoch", c.batches_per_epoch},
            {"kmeans_iters", c.kmeans_iters},
            {"seed", c.seed}};
}

TrainConfig train_config_from(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.learning_rate = j.at("learning_rate");
    c.batches_per_epoch = j.at("batches_per_epoch");
    c.kmeans_iters = j.at("kmeans_iters");
    c.seed = j.at("seed");
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    const VqArModel& model = *state.model;
    std::ostringstream rng_text;
    rng_text << state.rng;
    json log = json::array();
    for (const auto& e : state.log) {
        log.push_back({{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"codebook_utilization", e.codebook_utilization},
                       {"replacements", e.replacements}});
    }
    json header{{"model", model_config_json(state.model_config)},
                {"features", feature_config_json(model.features())},
                {"train", train_config_json(state.train_config)},
                {"epoch", state.epoch},
                {"context_length", state.context_length},
                {"prediction_length", state.prediction_length},
                {"rng", rng_text.str()},
                {"adam_step", state.adam.step},
                {"codebook_initialized", model.codebook.initialized()},
                {"log", log}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<Tensor> params = model.parameters();
    if (state.model_config.use_ema) params.push_back(model.codebook.vectors());
    for (const auto& p : params) put_block(out, p.data());
    put_block(out, model.codebook.ema_cluster_size());
    put_block(out, model.codebook.ema_sum());
    put<std::uint64_t>(out, state.adam.m.size());
    for (std::size_t k = 0; k < state.adam.m.size(); ++k) {
        put_block(out, state.adam.m[k]);
        put_block(out, state.adam.v[k]);
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + " is not a checkpoint");
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto len = get<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint header is truncated");

    TrainState state;
    json header;
    try {
        header = json::parse(text);
        state.model_config = model_config_from(header.at("model"));
        state.train_config = train_config_from(header.at("train"));
        state.epoch = header.at("epoch");
        state.context_length = header.at("context_length");
        state.prediction_length = header.at("prediction_length");
        std::istringstream rng_text(header.at("rng").get<std::string>());
        rng_text >> state.rng;
        state.adam.step = header.at("adam_step");
        for (const auto& e : header.at("log")) {
            state.log.push_back({e.at("epoch"), e.at("mean_loss"), e.at("codebook_utilization"), e.at("replacements")});
        }
    } catch (const json::exception& e) {
        throw DataError("checkpoint header: " + std::string(e.what()));
    }
    Rng unused(0);
    state.model = std::make_unique<VqArModel>(state.model_config, feature_config_from(header.at("features")), unused);
    VqArModel& model = *state.model;
    std::vector<Tensor> params = model.parameters();
    if (state.model_config.use_ema) params.push_back(model.codebook.vectors());
    for (std::size_t k = 0; k < params.size(); ++k) get_block(in, params[k].mutable_data(), "param " + std::to_string(k));
    get_block(in, model.codebook.ema_cluster_size(), "ema_cluster_size");
    get_block(in, model.codebook.ema_sum(), "ema_sum");
    if (header.at("codebook_initialized").get<bool>()) model.codebook.mark_initialized();
    const auto moments = get<std::uint64_t>(in);
    for (std::size_t k = 0; k < moments; ++k) {
        std::vector<double> m(model.parameters()[k].size()), v(m.size());
        get_block(in, m, "adam m");
        get_block(in, v, "adam v");
        state.adam.m.push_back(std::move(m));
        state.adam.v.push_back(std::move(v));
    }
    return state;
}

}  // namespace vqar
