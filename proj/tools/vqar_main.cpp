// vqar: command-line front end for training, evaluating and forecasting with
// VQ-AR models, plus the noise-robustness, zero-shot and codebook-size
// experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqar/backtest.hpp"
#include "vqar/errors.hpp"
#include "vqar/synthetic.hpp"
#include "vqar/trainer.hpp"

namespace fs = std::filesystem;
using namespace vqar;

namespace {

struct Options {
    std::string data;
    std::string metadata;
    std::string out = "run";
    std::string checkpoint;
    std::string head = "gaussian";
    std::size_t codebook_size = 128;
    std::size_t encoder_size = 64;
    std::size_t decoder_size = 40;
    double commitment = 0.25;
    double replace_threshold = 2.0;
    double ema_decay = 0.99;
    bool use_ema = true;
    std::size_t epochs = 50;
    std::size_t batch_size = 256;
    std::size_t batches_per_epoch = 0;
    double lr = 1e-3;
    std::size_t context_multiple = 6;
    std::size_t samples = 100;
    std::uint64_t seed = 0;
    bool no_identity = false;
    bool no_holdout = false;
    std::vector<double> noise_levels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<std::size_t> j_grid{2, 4, 8, 16, 32, 64, 128, 256, 512};
    std::size_t repeats = 1;
    bool write_samples = false;
    // synth
    std::size_t num_series = 10;
    std::size_t length = 400;
    std::size_t prediction_length = 30;
    std::size_t context_length = 180;
};

void add_common(CLI::App& app, Options& o) {
    app.add_option("--data", o.data, "Dataset directory (metadata.json + *.jsonl) or a .jsonl file");
    app.add_option("--metadata", o.metadata, "metadata.json (default: next to the data)");
    app.add_option("--out", o.out, "Output directory")->capture_default_str();
    app.add_option("--seed", o.seed, "Root random seed")->capture_default_str();
    app.add_option("--samples", o.samples, "Sample paths per series (S)")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--context-multiple", o.context_multiple, "Context length as a multiple of P")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

void add_model(CLI::App& app, Options& o) {
    app.add_option("--head", o.head, "Distribution head")
        ->capture_default_str()
        ->check(CLI::IsMember({"gaussian", "student_t", "neg_binomial"}));
    app.add_option("--codebook-size", o.codebook_size, "Codebook size J")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--encoder-size", o.encoder_size, "Encoder state size E")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--decoder-size", o.decoder_size, "Decoder state size H")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--commitment", o.commitment, "Commitment cost beta")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--replace-threshold", o.replace_threshold, "Dead-entry threshold Q")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app.add_option("--ema-decay", o.ema_decay, "EMA decay gamma")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    app.add_option("--use-ema", o.use_ema, "Maintain the codebook by EMA (true) or by gradient (false)")
        ->capture_default_str();
    app.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--batch-size", o.batch_size, "Windows per batch")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--batches-per-epoch", o.batches_per_epoch, "Batches per epoch (0: derived from the data)")
        ->capture_default_str();
    app.add_option("--lr", o.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--no-identity", o.no_identity, "Disable the series identity embedding");
    app.add_flag("--no-holdout", o.no_holdout, "Train on the full series instead of holding out the last P points");
}

void add_checkpoint(CLI::App& app, Options& o) {
    app.add_option("--checkpoint", o.checkpoint, "Trained checkpoint.bin")->required();
}

TimeSeriesDataset load(const Options& o, const CLI::App& app) {
    if (o.data.empty()) throw ConfigError("--data is required");
    std::optional<fs::path> meta;
    if (!o.metadata.empty()) meta = o.metadata;
    TimeSeriesDataset ds = load_dataset(o.data, meta);
    if (app.count("--context-multiple") > 0 || ds.context_length == 0) {
        ds.context_length = o.context_multiple * ds.prediction_length;
    }
    return ds;
}

ModelConfig model_config(const Options& o) {
    ModelConfig m;
    m.encoder_size = o.encoder_size;
    m.decoder_size = o.decoder_size;
    m.codebook_size = o.codebook_size;
    m.commitment_cost = o.commitment;
    m.replace_threshold = o.replace_threshold;
    m.ema_decay = o.ema_decay;
    m.use_ema = o.use_ema;
    m.head = parse_head_family(o.head);
    return m;
}

TrainConfig train_config(const Options& o) {
    TrainConfig t;
    t.epochs = o.epochs;
    t.batch_size = o.batch_size;
    t.learning_rate = o.lr;
    t.batches_per_epoch = o.batches_per_epoch;
    t.seed = o.seed;
    return t;
}

fs::path prepare_out(const Options& o, const CLI::App& root) {
    fs::path dir(o.out);
    fs::create_directories(dir);
    // Only the options of the subcommand that actually ran.
    std::string prefix;
    if (!root.get_subcommands().empty()) prefix = root.get_subcommands().front()->get_name() + ".";
    std::istringstream all(root.config_to_str(true, false));
    std::ofstream echo(dir / "config.toml");
    for (std::string line; std::getline(all, line);) {
        if (line.rfind(prefix, 0) == 0) echo << line << '\n';
    }
    return dir;
}

void write_json(const fs::path& path, const nlohmann::json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

std::string metrics_header() { return "crps,ql50,ql90,msis,nrmse,smape,mase"; }

std::string metrics_row(const EvalReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << r.crps << ',' << r.ql50 << ',' << r.ql90 << ',' << r.msis << ',' << r.nrmse << ',' << r.smape << ','
       << r.mase;
    return os.str();
}

TrainState run_training(const TimeSeriesDataset& ds, const Options& o, const fs::path& log_path) {
    const TimeSeriesDataset train_ds = o.no_holdout ? ds : drop_last(ds, ds.prediction_length);
    const FeatureConfig feats = default_feature_config(train_ds, !o.no_identity);
    std::cerr << "training on " << train_ds.size() << " series, C=" << train_ds.context_length
              << " P=" << train_ds.prediction_length << ", features: " << feats.describe() << '\n';
    std::ofstream log(log_path);
    log << "epoch,mean_loss,codebook_utilization,replacements\n";
    log.precision(10);
    auto state = train(train_ds, model_config(o), feats, train_config(o), [&](const EpochLog& e) {
        log << e.epoch << ',' << e.mean_loss << ',' << e.codebook_utilization << ',' << e.replacements << '\n';
        log.flush();
        std::cerr << "epoch " << e.epoch << "  loss " << e.mean_loss << "  codebook in use " << e.codebook_utilization
                  << "  replaced " << e.replacements << '\n';
    });
    for (const auto& w : state.warnings) std::cerr << "warning: " << w << '\n';
    return state;
}

BacktestOptions backtest_options(const Options& o, const TrainState& state, const TimeSeriesDataset& ds) {
    BacktestOptions b;
    b.num_samples = o.samples;
    b.seed = o.seed;
    b.context_length = ds.context_length;
    (void)state;
    return b;
}

int cmd_synth(const Options& o, const CLI::App& root) {
    SinusoidSuite spec;
    spec.num_series = o.num_series;
    spec.length = o.length;
    spec.prediction_length = o.prediction_length;
    spec.context_length = o.context_length;
    auto dir = prepare_out(o, root);
    auto ds = make_sinusoid_suite(spec);
    write_jsonl(dir / "data.jsonl", ds);
    write_metadata(dir / "metadata.json", ds);
    std::cout << "wrote " << ds.size() << " series to " << (dir / "data.jsonl").string() << '\n';
    return 0;
}

int cmd_train(const Options& o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto dir = prepare_out(o, root);
    auto state = run_training(ds, o, dir / "train_log.csv");
    save_checkpoint(dir / "checkpoint.bin", state);
    std::cout << "checkpoint written to " << (dir / "checkpoint.bin").string() << '\n';
    return 0;
}

TrainState load_for(const Options& o, const TimeSeriesDataset& ds) {
    auto state = load_checkpoint(o.checkpoint);
    check_feature_compatibility(state.model->features(), default_feature_config(ds, state.model->features().use_identity));
    if (state.model->features().use_identity && ds.num_categories() > state.model->features().num_categories) {
        throw DataError("dataset has series categories the checkpoint has no embedding for");
    }
    return state;
}

int cmd_evaluate(const Options& o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto state = load_for(o, ds);
    auto dir = prepare_out(o, root);
    auto bt = backtest(*state.model, ds, backtest_options(o, state, ds));
    write_json(dir / "eval_report.json", bt.report.to_json());
    std::cout << bt.report.to_table();
    for (const auto& f : bt.report.flags) std::cerr << "note: " << f << '\n';
    return 0;
}

int cmd_forecast(const Options& o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto state = load_for(o, ds);
    auto dir = prepare_out(o, root);
    const auto levels = default_quantile_levels();
    std::ofstream jl(dir / "forecast.jsonl");
    std::ofstream csv(dir / "forecast_quantiles.csv");
    csv << "item_id,step,timestamp";
    for (double q : levels) csv << ",q" << q;
    csv << ",mean\n";
    csv.precision(10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ForecastOptions fo;
        fo.num_samples = o.samples;
        fo.seed = o.seed;
        fo.series_key = i;
        auto r = forecast(*state.model, ds.series[i], ds.context_length, ds.prediction_length, fo);
        auto q = quantiles(r, levels);
        auto mean = mean_path(r);
        nlohmann::json line{{"item_id", r.item_id},
                            {"start", format_timestamp(r.start)},
                            {"nu", r.nu},
                            {"mean", mean}};
        for (std::size_t k = 0; k < levels.size(); ++k) {
            std::ostringstream key;
            key << levels[k];
            line["quantiles"][key.str()] = std::vector<double>(q.begin() + k * r.horizon, q.begin() + (k + 1) * r.horizon);
        }
        if (o.write_samples) {
            for (std::size_t s = 0; s < r.num_samples; ++s) {
                line["samples"].push_back(std::vector<double>(r.samples.begin() + s * r.horizon,
                                                              r.samples.begin() + (s + 1) * r.horizon));
            }
        }
        jl << line.dump() << '\n';
        for (std::size_t h = 0; h < r.horizon; ++h) {
            csv << r.item_id << ',' << h + 1 << ',' << format_timestamp(ds.series[i].time_at(
                                                             static_cast<std::int64_t>(ds.series[i].target.size() + h), ds.freq));
            for (std::size_t k = 0; k < levels.size(); ++k) csv << ',' << q[k * r.horizon + h];
            csv << ',' << mean[h] << '\n';
        }
    }
    std::cout << "forecasts for " << ds.size() << " series written to " << (dir / "forecast.jsonl").string() << '\n';
    return 0;
}

int cmd_robustness(const Options& o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto state = load_for(o, ds);
    auto dir = prepare_out(o, root);
    std::ofstream csv(dir / "robustness.csv");
    csv << "noise_level," << metrics_header() << '\n';
    for (double level : o.noise_levels) {
        if (level < 0.0) throw ConfigError("noise levels must be non-negative");
        EvalReport mean;
        for (std::size_t r = 0; r < o.repeats; ++r) {
            auto bo = backtest_options(o, state, ds);
            bo.seed = o.seed + r;
            bo.noise_level = level;
            auto rep = backtest(*state.model, ds, bo).report;
            mean.crps += rep.crps / o.repeats;
            mean.ql50 += rep.ql50 / o.repeats;
            mean.ql90 += rep.ql90 / o.repeats;
            mean.msis += rep.msis / o.repeats;
            mean.nrmse += rep.nrmse / o.repeats;
            mean.smape += rep.smape / o.repeats;
            mean.mase += rep.mase / o.repeats;
        }
        csv << level << ',' << metrics_row(mean) << '\n';
        std::cout << "noise " << level << "  crps " << mean.crps << '\n';
    }
    return 0;
}

int cmd_zeroshot(const Options& o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto state = load_checkpoint(o.checkpoint);
    if (state.model->features().use_identity) {
        throw ConfigError("zero-shot evaluation needs a checkpoint trained with --no-identity");
    }
    check_feature_compatibility(state.model->features(), default_feature_config(ds, false));
    auto dir = prepare_out(o, root);
    auto bt = backtest(*state.model, ds, backtest_options(o, state, ds));
    write_json(dir / "eval_report.json", bt.report.to_json());
    std::cout << bt.report.to_table();
    return 0;
}

int cmd_ablate(Options o, const CLI::App& root, const CLI::App& sub) {
    auto ds = load(o, sub);
    auto dir = prepare_out(o, root);
    std::ofstream csv(dir / "ablation.csv");
    csv << "codebook_size," << metrics_header() << '\n';
    for (std::size_t j : o.j_grid) {
        if (j == 0) throw ConfigError("codebook sizes must be positive");
        o.codebook_size = j;
        auto state = run_training(ds, o, dir / ("train_log_J" + std::to_string(j) + ".csv"));
        auto bt = backtest(*state.model, ds, backtest_options(o, state, ds));
        csv << j << ',' << metrics_row(bt.report) << '\n';
        csv.flush();
        std::cout << "J=" << j << "  crps " << bt.report.crps << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VQ-AR probabilistic forecaster"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a TOML file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    Options o;

    auto* synth = app.add_subcommand("synth", "Write the deterministic sinusoid suite");
    synth->add_option("--out", o.out, "Output directory")->capture_default_str();
    synth->add_option("--num-series", o.num_series)->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--length", o.length)->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--prediction-length", o.prediction_length)->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--context-length", o.context_length)->capture_default_str()->check(CLI::PositiveNumber);

    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint.bin and train_log.csv");
    add_common(*train_cmd, o);
    add_model(*train_cmd, o);

    auto* eval_cmd = app.add_subcommand("evaluate", "Back-test a checkpoint on the last P points of each series");
    add_common(*eval_cmd, o);
    add_checkpoint(*eval_cmd, o);

    auto* fc_cmd = app.add_subcommand("forecast", "Forecast P steps past the end of each series");
    add_common(*fc_cmd, o);
    add_checkpoint(*fc_cmd, o);
    fc_cmd->add_flag("--write-samples", o.write_samples, "Include all sample paths in forecast.jsonl");

    auto* rob_cmd = app.add_subcommand("robustness", "Back-test with Gaussian noise added to the context");
    add_common(*rob_cmd, o);
    add_checkpoint(*rob_cmd, o);
    rob_cmd->add_option("--noise-levels", o.noise_levels, "Noise levels l")->delimiter(',')->capture_default_str();
    rob_cmd->add_option("--repeats", o.repeats, "Forecast seeds averaged per level")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    auto* zs_cmd = app.add_subcommand("zeroshot", "Evaluate a checkpoint on a dataset it was not trained on");
    add_common(*zs_cmd, o);
    add_checkpoint(*zs_cmd, o);

    auto* ab_cmd = app.add_subcommand("ablate", "Train and back-test one model per codebook size");
    add_common(*ab_cmd, o);
    add_model(*ab_cmd, o);
    ab_cmd->add_option("--j-grid", o.j_grid, "Codebook sizes")->delimiter(',')->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(o, app);
        if (*train_cmd) return cmd_train(o, app, *train_cmd);
        if (*eval_cmd) return cmd_evaluate(o, app, *eval_cmd);
        if (*fc_cmd) return cmd_forecast(o, app, *fc_cmd);
        if (*rob_cmd) return cmd_robustness(o, app, *rob_cmd);
        if (*zs_cmd) return cmd_zeroshot(o, app, *zs_cmd);
        if (*ab_cmd) return cmd_ablate(o, app, *ab_cmd);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
