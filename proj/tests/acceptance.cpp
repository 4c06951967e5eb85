// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   acceptance                 run every criterion
//   acceptance --criterion 5   run one
//
// Tolerances and budgets are pinned below; the Exchange check reads the
// converted dataset from $VQAR_EXCHANGE_DIR (see tools/exchange_to_jsonl.py).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "vqar/backtest.hpp"
#include "vqar/errors.hpp"
#include "vqar/forecaster.hpp"
#include "vqar/metrics.hpp"
#include "vqar/quantizer.hpp"
#include "vqar/recurrent.hpp"
#include "vqar/synthetic.hpp"
#include "vqar/trainer.hpp"

using namespace vqar;
namespace fs = std::filesystem;
using vqar::testing::grad_check;
using vqar::testing::random_tensor;
using vqar::testing::rel_error;

namespace {

// --- pinned tolerances -----------------------------------------------------
constexpr double kFdStep = 1e-5;
constexpr double kFdTolerance = 1e-4;
constexpr std::size_t kMinFdConfigurations = 100;
constexpr double kGradientBudgetSeconds = 60.0;
constexpr double kQuantizerBudgetSeconds = 60.0;
constexpr double kKlTolerance = 1e-12;
constexpr double kEmaTolerance = 1e-3;
constexpr double kScaleTolerance = 1e-9;
constexpr double kSynthSmape = 0.05;
constexpr double kSynthCrps = 0.03;
constexpr double kSynthBudgetSeconds = 600.0;
constexpr double kExchangeCrpsLow = 0.008;
constexpr double kExchangeCrpsHigh = 0.020;
constexpr double kExchangeMase = 4.0;
constexpr double kExchangeBudgetSeconds = 1800.0;
constexpr double kCrpsIntegralTolerance = 0.10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

// Runs `check` over the parameters and returns the worst relative error.
double worst_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& params, std::string& where) {
    auto r = grad_check(loss, params, kFdStep);
    where = r.worst;
    return r.max_rel_error;
}

void randomize(Tensor& t, std::mt19937_64& rng, double spread) {
    std::uniform_real_distribution<double> u(-spread, spread);
    for (auto& v : t.mutable_data()) v = u(rng);
}

// --- 1. gradient correctness -------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> small(1, 4);
    std::size_t configurations = 0;
    double worst = 0.0;
    std::string worst_where;
    auto record = [&](double err, const std::string& what, const std::string& where) {
        ++configurations;
        if (err > worst) {
            worst = err;
            worst_where = what + " " + where;
        }
    };

    // GRU cells
    for (int c = 0; c < 30; ++c) {
        const std::size_t in = small(rng), hid = small(rng), batch = small(rng);
        Rng init(static_cast<std::uint64_t>(c));
        GruCell cell = GruCell::create(in, hid, init);
        for (Tensor* b : {&cell.b_u, &cell.b_r, &cell.b_c}) randomize(*b, rng, 0.5);
        Tensor x = random_tensor({batch, in}, rng);
        Tensor h = random_tensor({batch, hid}, rng);
        Tensor w = random_tensor({batch, hid}, rng, -1, 1, false);
        auto params = cell.parameters();
        params.push_back(x);
        params.push_back(h);
        std::string where;
        const double err = worst_error([&] { return sum(mul(gru_step(cell, x, h), w)); }, params, where);
        record(err, "gru", where);
    }

    // Distribution heads, optionally through the mean-scale transform.
    for (auto family : {HeadFamily::Gaussian, HeadFamily::StudentT, HeadFamily::NegativeBinomial}) {
        for (int c = 0; c < 15; ++c) {
            const std::size_t hid = small(rng) + 1, batch = small(rng);
            Rng init(static_cast<std::uint64_t>(100 + c));
            auto head = HeadProjection::create(family, hid, init);
            randomize(head.bias, rng, 0.5);
            Tensor h = random_tensor({batch, hid}, rng);
            std::vector<double> xv(batch);
            std::uniform_real_distribution<double> cont(-2.0, 2.0);
            std::uniform_int_distribution<int> counts(0, 8);
            for (auto& v : xv) v = family == HeadFamily::NegativeBinomial ? counts(rng) : cont(rng);
            Tensor x = Tensor::from({batch, 1}, xv, false);
            const bool scaled = c % 2 == 1;
            const double nu = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
            auto params = head.parameters();
            params.push_back(h);
            std::string where;
            const double err = worst_error(
                [&] {
                    auto p = project(head, h);
                    return sum(nll(scaled ? rescale(p, nu) : p, x));
                },
                params, where);
            record(err, "nll/" + to_string(family), where);
        }
    }

    // Commitment term with respect to the encoder output, and the codebook
    // term with respect to the prototypes.
    for (int c = 0; c < 20; ++c) {
        CodebookConfig cfg;
        cfg.size = small(rng) + 1;
        cfg.dim = small(rng);
        cfg.commitment_cost = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        Codebook cb(cfg, true);
        std::vector<double> rows(cfg.size * cfg.dim);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& v : rows) v = u(rng);
        cb.set_vectors(rows);
        Tensor h = random_tensor({small(rng), cfg.dim}, rng);
        std::string where;
        if (c % 2 == 0) {
            const double err =
                worst_error([&] { return sum(vq_loss(quantize_batch(h, cb), cb, true)); }, {h}, where);
            record(err, "commitment", where);
        } else {
            const double err =
                worst_error([&] { return sum(quantize_batch(h, cb).vq_loss_codebook); }, {cb.vectors()}, where);
            record(err, "codebook-term", where);
        }
    }

    // Full composed step loss at frozen assignments: the straight-through
    // gradient is compared with finite differences of the surrogate whose
    // exact gradient it is.
    SinusoidSuite spec;
    spec.num_series = 4;
    spec.length = 60;
    spec.prediction_length = 4;
    spec.context_length = 8;
    const auto ds = make_sinusoid_suite(spec);
    for (bool use_ema : {true, false}) {
        for (auto head : {HeadFamily::Gaussian, HeadFamily::StudentT}) {
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                FeatureConfig feats = default_feature_config(ds, seed % 2 == 0);
                feats.lags = {1};
                feats.use_age = seed == 3;
                ModelConfig mc;
                mc.encoder_size = 4;
                mc.decoder_size = 3;
                mc.codebook_size = 3;
                mc.use_ema = use_ema;
                mc.head = head;
                Rng mrng(500 + seed);
                VqArModel model(mc, feats, mrng);
                std::vector<double> rows(mc.codebook_size * mc.encoder_size);
                std::uniform_real_distribution<double> u(-0.5, 0.5);
                for (auto& v : rows) v = u(mrng);
                model.codebook.set_vectors(rows);
                for (Tensor* b : {&model.encoder.b_u, &model.decoder.b_c, &model.head.bias}) randomize(*b, rng, 0.3);
                std::vector<TrainingWindow> batch{sample_window(ds, feats, mrng), sample_window(ds, feats, mrng)};

                auto base = forward_batch(model, batch);
                std::vector<double> quantized;
                for (auto j : base.assignments) {
                    auto zrow = model.codebook.row(j);
                    quantized.insert(quantized.end(), zrow.begin(), zrow.end());
                }
                auto params = model.parameters();
                for (auto& p : params) p.zero_grad();
                ForwardOptions st;
                st.forced_indices = base.assignments;
                Tensor loss = forward_batch(model, batch, st).loss;
                loss.backward();
                std::vector<std::vector<double>> analytic;
                for (auto& p : params) {
                    analytic.emplace_back(p.size(), 0.0);
                    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.back().begin());
                }
                ForwardOptions surrogate = st;
                surrogate.base_encodings = base.encodings;
                surrogate.base_quantized = quantized;
                NoGradGuard no_grad;
                double cfg_worst = 0.0;
                std::string where;
                for (std::size_t k = 0; k < params.size(); ++k) {
                    auto data = params[k].mutable_data();
                    for (std::size_t i = 0; i < data.size(); ++i) {
                        const double saved = data[i];
                        data[i] = saved + kFdStep;
                        const double up = forward_batch(model, batch, surrogate).loss.item();
                        data[i] = saved - kFdStep;
                        const double down = forward_batch(model, batch, surrogate).loss.item();
                        data[i] = saved;
                        const double err = rel_error(analytic[k][i], (up - down) / (2.0 * kFdStep));
                        if (err > cfg_worst) {
                            cfg_worst = err;
                            where = "param " + std::to_string(k) + "[" + std::to_string(i) + "]";
                        }
                    }
                }
                record(cfg_worst, "composed/" + to_string(head) + (use_ema ? "/ema" : "/grad"), where);
            }
        }
    }

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = configurations >= kMinFdConfigurations && worst < kFdTolerance && elapsed < kGradientBudgetSeconds;
    o.detail = std::to_string(configurations) + " configurations, max rel error " + fmt(worst, 3) + " (" +
               worst_where + "), " + fmt(elapsed, 3) + " s";
    return o;
}

// --- 2. quantizer properties ---------------------------------------------------

std::size_t brute_force_nearest(std::span<const double> h, std::span<const double> table, std::size_t dim) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t j = 0; j * dim < table.size(); ++j) {
        double ss = 0.0;
        for (std::size_t k = 0; k < dim; ++k) ss += std::pow(h[k] - table[j * dim + k], 2);
        if (std::sqrt(ss) < best_d) {
            best_d = std::sqrt(ss);
            best = j;
        }
    }
    return best;
}

Outcome quantizer_properties() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    std::vector<std::string> failures;
    std::uniform_int_distribution<std::size_t> jdist(1, 64), edist(1, 8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);

    std::size_t membership = 0, nn = 0, idem = 0, kl = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        CodebookConfig cfg;
        cfg.size = jdist(rng);
        cfg.dim = edist(rng);
        Codebook cb(cfg);
        std::vector<double> rows(cfg.size * cfg.dim);
        for (auto& v : rows) v = u(rng);
        cb.set_vectors(rows);
        std::vector<double> hv(cfg.dim);
        for (auto& v : hv) v = u(rng);
        Tensor h = Tensor::vector(hv);
        auto r = quantize(h, cb);
        auto row = cb.row(r.index);
        if (std::equal(row.begin(), row.end(), r.quantized.data().begin())) ++membership;
        if (r.index == brute_force_nearest(hv, rows, cfg.dim)) ++nn;
        // Quantizing the output again lands on the same entry with the same vector.
        auto again = quantize(r.quantized, cb);
        const auto q1 = r.quantized.data(), q2 = again.quantized.data();
        if (again.index == r.index && std::equal(q1.begin(), q1.end(), q2.begin())) ++idem;
        const double k = kl_to_uniform(posterior(h, cb));
        if (std::abs(k - std::log(static_cast<double>(cfg.size))) <= kKlTolerance) ++kl;
    }
    if (membership != 1000) failures.push_back("membership " + std::to_string(membership) + "/1000");
    if (nn != 1000) failures.push_back("nearest-neighbour " + std::to_string(nn) + "/1000");
    if (idem != 1000) failures.push_back("idempotence " + std::to_string(idem) + "/1000");
    if (kl != 1000) failures.push_back("KL=ln J " + std::to_string(kl) + "/1000");

    // Ties: duplicated rows and mirror-image rows both resolve to the lowest index.
    {
        CodebookConfig cfg;
        cfg.size = 4;
        cfg.dim = 2;
        Codebook cb(cfg);
        cb.set_vectors(std::vector<double>{5, 5, 1, 0, -1, 0, 1, 0});
        const bool ok = quantize(Tensor::vector({0.0, 0.0}), cb).index == 1 &&
                        quantize(Tensor::vector({1.0, 0.0}), cb).index == 1 &&
                        quantize(Tensor::vector({0.0, 0.0}), cb).index == quantize(Tensor::vector({0.0, 0.0}), cb).index;
        if (!ok) failures.push_back("tie-breaking");
    }

    // EMA on a fixed batch converges to the per-cluster means.
    {
        CodebookConfig cfg;
        cfg.size = 2;
        cfg.dim = 2;
        Codebook cb(cfg);
        cb.set_vectors(std::vector<double>{0, 0, 10, 10});
        std::vector<double> enc{1, 1, 2, 4, 9, 9, 11, 12, 10, 9};
        std::vector<std::size_t> assign{0, 0, 1, 1, 1};
        for (int i = 0; i < 1000; ++i) ema_update(cb, enc, assign);
        const double target[] = {1.5, 2.5, 10.0, 10.0};
        double err = 0.0;
        for (std::size_t i = 0; i < 4; ++i) err = std::max(err, std::abs(cb.vectors().data()[i] - target[i]));
        if (err > kEmaTolerance) failures.push_back("EMA fixed point off by " + fmt(err));
    }

    // Replacement fires exactly for entries with N_j < Q.
    {
        std::uniform_real_distribution<double> mass(0.0, 4.0);
        std::size_t wrong = 0;
        for (int trial = 0; trial < 500; ++trial) {
            CodebookConfig cfg;
            cfg.size = 8;
            cfg.dim = 2;
            cfg.replace_threshold = 2.0;
            Codebook cb(cfg);
            std::vector<double> rows(16);
            for (auto& v : rows) v = u(rng);
            cb.set_vectors(rows);
            std::vector<bool> dead(8);
            for (std::size_t j = 0; j < 8; ++j) {
                cb.ema_cluster_size()[j] = mass(rng);
                dead[j] = cb.ema_cluster_size()[j] < cfg.replace_threshold;
            }
            std::vector<double> batch(10 * 2);
            for (auto& v : batch) v = u(rng) + 100.0;  // far from every prototype
            Rng r(static_cast<std::uint64_t>(trial));
            const std::size_t n = replace_dead(cb, batch, r);
            std::size_t expected = 0;
            for (std::size_t j = 0; j < 8; ++j) {
                const bool moved = cb.row(j)[0] > 50.0;
                if (moved != dead[j]) ++wrong;
                if (dead[j]) ++expected;
            }
            if (n != expected) ++wrong;
        }
        if (wrong != 0) failures.push_back("replacement mismatches " + std::to_string(wrong));
    }

    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = failures.empty() && elapsed < kQuantizerBudgetSeconds;
    o.detail = failures.empty() ? "membership, idempotence, ties, brute-force NN (1000 trials), KL = ln J, EMA "
                                  "fixed point, replacement iff N_j < Q; " + fmt(elapsed, 3) + " s"
                                : "failed: ";
    for (auto& f : failures) o.detail += f + "; ";
    return o;
}

// --- 3. straight-through contract ----------------------------------------------

Outcome straight_through_contract() {
    std::mt19937_64 rng(5);
    std::size_t forward_bad = 0, grad_bad = 0, leak = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        CodebookConfig cfg;
        cfg.size = 1 + trial % 16;
        cfg.dim = 1 + trial % 5;
        Codebook cb(cfg, true);
        std::vector<double> rows(cfg.size * cfg.dim);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (auto& v : rows) v = u(rng);
        cb.set_vectors(rows);
        const std::size_t batch = 1 + trial % 3;
        Tensor h = random_tensor({batch, cfg.dim}, rng, -2, 2);
        Tensor g = random_tensor({batch, cfg.dim}, rng, -2, 2, false);
        auto r = quantize_batch(h, cb);
        for (std::size_t i = 0; i < batch; ++i) {
            auto row = cb.row(r.indices[i]);
            for (std::size_t k = 0; k < cfg.dim; ++k) {
                if (r.st_output.at(i, k) != row[k]) ++forward_bad;
            }
        }
        h.zero_grad();
        cb.vectors().zero_grad();
        sum(mul(r.st_output, g)).backward();
        const auto hg = h.grad();
        const auto gv = g.data();
        for (std::size_t i = 0; i < hg.size(); ++i) {
            if (hg[i] != gv[i]) ++grad_bad;
        }
        if (cb.vectors().has_grad()) {
            for (double v : cb.vectors().grad()) {
                if (v != 0.0) ++leak;
            }
        }
    }
    Outcome o;
    o.pass = forward_bad == 0 && grad_bad == 0 && leak == 0;
    o.detail = std::to_string(trials) + " trials: forward mismatches " + std::to_string(forward_bad) +
               ", encoder gradient mismatches " + std::to_string(grad_bad) + ", gradient leaked to codebook " +
               std::to_string(leak);
    return o;
}

// --- 4. scale invariance -------------------------------------------------------

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-300); }

Outcome scale_invariance() {
    const auto ds = make_sinusoid_suite();
    const auto feats = default_feature_config(ds, true);
    ModelConfig mc;
    mc.encoder_size = 16;
    mc.decoder_size = 12;
    mc.codebook_size = 16;
    Rng mrng(3);
    VqArModel model(mc, feats, mrng);
    {
        Rng krng(4);
        std::vector<TrainingWindow> warm;
        for (int i = 0; i < 8; ++i) warm.push_back(sample_window(ds, feats, krng));
        kmeans_init(model.codebook, encode_windows(model, warm), 10, krng);
    }

    double window_err = 0.0, loss_err = 0.0, sample_err = 0.0;
    Rng base_rng(11);
    std::vector<TrainingWindow> base_batch;
    for (int i = 0; i < 16; ++i) base_batch.push_back(sample_window(ds, feats, base_rng));
    const double base_loss = forward_batch(model, base_batch).loss.item();
    ForecastOptions fo;
    fo.num_samples = 50;
    fo.seed = 21;
    fo.series_key = 4;
    auto base_fc = forecast(model, ds.series[4], ds.context_length, ds.prediction_length, fo);

    for (double c : {0.01, 1.0, 100.0}) {
        auto scaled = scaled_copy(ds, c);
        Rng r(11);
        std::vector<TrainingWindow> batch;
        for (int i = 0; i < 16; ++i) batch.push_back(sample_window(scaled, feats, r));
        for (std::size_t w = 0; w < batch.size(); ++w) {
            const auto& a = base_batch[w];
            const auto& b = batch[w];
            for (std::size_t k = 0; k < a.length(); ++k) {
                window_err = std::max(window_err, rel_diff(a.scaled_target[k], b.scaled_target[k]));
            }
            for (std::size_t k = 0; k < a.covariates.size(); ++k) {
                window_err = std::max(window_err, rel_diff(a.covariates[k], b.covariates[k]));
            }
        }
        loss_err = std::max(loss_err, rel_diff(base_loss, forward_batch(model, batch).loss.item()));
        auto fc = forecast(model, scaled.series[4], ds.context_length, ds.prediction_length, fo);
        sample_err = std::max(sample_err, rel_diff(c * base_fc.nu, fc.nu));
        for (std::size_t i = 0; i < fc.samples.size(); ++i) {
            sample_err = std::max(sample_err, rel_diff(c * base_fc.samples[i], fc.samples[i]));
        }
    }
    Outcome o;
    o.pass = window_err <= kScaleTolerance && loss_err <= kScaleTolerance && sample_err <= kScaleTolerance;
    o.detail = "c in {0.01, 1, 100}: max rel diff windows " + fmt(window_err, 3) + ", step-0 loss " +
               fmt(loss_err, 3) + ", forecast samples " + fmt(sample_err, 3);
    return o;
}

// --- training helpers ------------------------------------------------------------

struct SuiteRun {
    EvalReport report;
    double train_seconds = 0.0;
    double first_loss = 0.0;
    double last_loss = 0.0;
};

SuiteRun train_and_backtest(const TimeSeriesDataset& ds, const ModelConfig& mc, const TrainConfig& tc,
                            std::size_t samples, const std::vector<double>& noise_levels,
                            std::vector<EvalReport>* per_noise = nullptr) {
    SuiteRun run;
    const auto t0 = Clock::now();
    const auto train_ds = drop_last(ds, ds.prediction_length);
    auto state = train(train_ds, mc, default_feature_config(train_ds, true), tc);
    run.train_seconds = seconds_since(t0);
    run.first_loss = state.log.front().mean_loss;
    run.last_loss = state.log.back().mean_loss;
    BacktestOptions bo;
    bo.num_samples = samples;
    bo.seed = tc.seed;
    for (double l : noise_levels) {
        bo.noise_level = l;
        auto bt = backtest(*state.model, ds, bo);
        if (per_noise) per_noise->push_back(bt.report);
        if (l == noise_levels.front()) run.report = bt.report;
    }
    return run;
}

// Smaller network and budget for the multi-seed sweeps.
ModelConfig sweep_model(std::size_t j) {
    ModelConfig mc;
    mc.encoder_size = 32;
    mc.decoder_size = 24;
    mc.codebook_size = j;
    return mc;
}

TrainConfig sweep_training(std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 32;
    tc.batches_per_epoch = 10;
    tc.seed = seed;
    return tc;
}

// --- 5. synthetic convergence ---------------------------------------------------

Outcome synthetic_convergence() {
    const auto t0 = Clock::now();
    const auto ds = make_sinusoid_suite();
    ModelConfig mc;  // J = 128, Gaussian head, default sizes
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 32;
    tc.batches_per_epoch = 20;
    tc.seed = 0;
    auto run = train_and_backtest(ds, mc, tc, 100, {0.0});
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = run.report.smape <= kSynthSmape && run.report.crps <= kSynthCrps && elapsed <= kSynthBudgetSeconds;
    o.detail = "sMAPE " + fmt(run.report.smape) + " (<= " + fmt(kSynthSmape) + "), CRPS " + fmt(run.report.crps) +
               " (<= " + fmt(kSynthCrps) + "), train loss " + fmt(run.first_loss) + " -> " + fmt(run.last_loss) +
               ", " + fmt(elapsed, 4) + " s total";
    return o;
}

// --- 6. Exchange reproduction ----------------------------------------------------

Outcome exchange_reproduction() {
    const char* dir = std::getenv("VQAR_EXCHANGE_DIR");
    Outcome o;
    if (dir == nullptr || !fs::exists(fs::path(dir) / "metadata.json")) {
        o.detail = "Exchange dataset not available (set VQAR_EXCHANGE_DIR to the output of "
                   "tools/exchange_to_jsonl.py)";
        return o;
    }
    const auto t0 = Clock::now();
    const auto ds = load_dataset(dir, std::nullopt);
    ModelConfig mc;
    mc.head = HeadFamily::StudentT;
    double crps = 0.0, mase = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig tc;
        tc.seed = seed;
        auto run = train_and_backtest(ds, mc, tc, 100, {0.0});
        crps += run.report.crps / 3.0;
        mase += run.report.mase / 3.0;
        per_seed += " " + fmt(run.report.crps);
    }
    const double elapsed = seconds_since(t0);
    o.pass = crps >= kExchangeCrpsLow && crps <= kExchangeCrpsHigh && mase <= kExchangeMase &&
             elapsed <= kExchangeBudgetSeconds;
    o.detail = "CRPS " + fmt(crps) + " (seeds:" + per_seed + "), MASE " + fmt(mase) + ", " + fmt(elapsed, 4) + " s";
    return o;
}

// --- 7. codebook-size ablation ----------------------------------------------------

Outcome ablation_direction() {
    const auto ds = make_sinusoid_suite();
    std::map<std::size_t, double> crps;
    bool finite = true;
    for (std::size_t j : {2, 8, 32, 128}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            auto run = train_and_backtest(ds, sweep_model(j), sweep_training(seed), 100, {0.0});
            crps[j] += run.report.crps / 3.0;
            finite = finite && std::isfinite(run.report.crps) && std::isfinite(run.report.smape);
        }
    }
    Outcome o;
    o.pass = finite && crps[2] >= crps[128];
    o.detail = "mean CRPS over 3 seeds:";
    for (auto& [j, v] : crps) o.detail += " J=" + std::to_string(j) + " " + fmt(v);
    o.detail += finite ? ", all forecasts finite" : ", non-finite forecasts";
    return o;
}

// --- 8. robustness trend ------------------------------------------------------------

Outcome robustness_trend() {
    const auto ds = make_sinusoid_suite();
    const std::vector<double> levels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> crps(levels.size(), 0.0);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::vector<EvalReport> reports;
        train_and_backtest(ds, sweep_model(128), sweep_training(seed), 100, levels, &reports);
        for (std::size_t i = 0; i < levels.size(); ++i) crps[i] += reports[i].crps / 3.0;
    }
    std::size_t inversions = 0;
    for (std::size_t i = 1; i < crps.size(); ++i) {
        if (crps[i] < crps[i - 1]) ++inversions;
    }
    Outcome o;
    o.pass = inversions <= 1;
    o.detail = "mean CRPS by noise level:";
    for (std::size_t i = 0; i < levels.size(); ++i) o.detail += " " + fmt(levels[i], 2) + ":" + fmt(crps[i]);
    o.detail += ", inversions " + std::to_string(inversions);
    return o;
}

// --- 9. metric oracles ----------------------------------------------------------------

ForecastResult from_paths(const std::vector<std::vector<double>>& paths) {
    ForecastResult r;
    r.num_samples = paths.size();
    r.horizon = paths[0].size();
    for (auto& p : paths) r.samples.insert(r.samples.end(), p.begin(), p.end());
    return r;
}

// Trapezoid rule on (F(y) - 1{x <= y})^2 for the empirical CDF.
double integrated_crps(std::vector<double> samples, double x) {
    std::sort(samples.begin(), samples.end());
    const double lo = std::min(samples.front(), x) - 1.0;
    const double hi = std::max(samples.back(), x) + 1.0;
    const int n = 100000;
    const double dy = (hi - lo) / n;
    auto f = [&](double y) {
        const double cdf = static_cast<double>(std::upper_bound(samples.begin(), samples.end(), y) - samples.begin()) /
                           static_cast<double>(samples.size());
        const double step = x <= y ? 1.0 : 0.0;
        return (cdf - step) * (cdf - step);
    };
    double s = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < n; ++i) s += f(lo + i * dy);
    return s * dy;
}

Outcome metric_oracles() {
    std::vector<std::string> failures;
    const auto levels = default_quantile_levels();

    // Gaussian fixtures against the integral.
    Rng rng(17);
    double worst = 0.0;
    for (int fixture = 0; fixture < 20; ++fixture) {
        std::uniform_real_distribution<double> loc(5.0, 50.0), spread(0.5, 5.0);
        const std::size_t horizon = 30, paths = 500;
        const double sigma = spread(rng);
        std::vector<double> mu(horizon), actual(horizon);
        for (std::size_t h = 0; h < horizon; ++h) {
            mu[h] = loc(rng);
            actual[h] = mu[h] + std::normal_distribution<double>(0.0, sigma)(rng);
        }
        std::vector<std::vector<double>> p(paths, std::vector<double>(horizon));
        for (auto& path : p) {
            for (std::size_t h = 0; h < horizon; ++h) path[h] = std::normal_distribution<double>(mu[h], sigma)(rng);
        }
        auto f = from_paths(p);
        double integral = 0.0, norm = 0.0;
        for (std::size_t h = 0; h < horizon; ++h) {
            integral += integrated_crps(f.step_samples(h), actual[h]);
            norm += std::abs(actual[h]);
        }
        std::vector<std::vector<double>> a{actual};
        const double approx = crps_empirical(std::span(&f, 1), a, levels);
        worst = std::max(worst, std::abs(approx - integral / norm) / (integral / norm));
    }
    if (worst > kCrpsIntegralTolerance) failures.push_back("CRPS vs integral off by " + fmt(worst));

    // Hand-computed micro-cases, compared exactly.
    {
        std::vector<double> x{10.0}, xhat{12.0};
        if (quantile_loss(x, xhat, 0.5) != 0.2) failures.push_back("QL50 micro-case");
        if (quantile_loss(x, std::vector<double>{8.0}, 0.9) != 2.0 * 0.9 * 2.0 / 10.0) failures.push_back("QL90 micro-case");
        std::vector<double> insample{0.0, 1.0, 2.0, 3.0, 4.0};
        std::vector<double> y{5.0, 6.0, 7.0}, lower{4.0, 5.0, 6.0}, upper{6.0, 7.0, 8.0};
        if (msis(upper, lower, y, insample, 1) != 2.0) failures.push_back("MSIS micro-case");
        if (smape(std::vector<double>{1.0}, std::vector<double>{3.0}) != 1.0) failures.push_back("sMAPE micro-case");
        std::vector<double> series{1.0, 4.0, 2.0, 2.0, 5.0, 3.0, 3.0, 6.0, 4.0, 4.0, 7.0, 5.0};
        std::vector<double> in9(series.begin(), series.begin() + 9), act(series.begin() + 9, series.end());
        std::vector<double> naive(series.begin() + 6, series.begin() + 9);
        if (mase(act, naive, in9, 3) != 1.0) failures.push_back("MASE micro-case");
    }

    // A forecaster that knows the future scores zero everywhere.
    {
        std::vector<std::vector<double>> actual{{3.0, 5.0, 4.0}, {10.0, 12.0, 11.0}};
        std::vector<std::vector<double>> insample{{1, 2, 4, 3, 5, 2, 1, 3, 4}, {8, 9, 11, 10, 9, 12, 13, 11, 10}};
        std::vector<ForecastResult> f{from_paths(std::vector<std::vector<double>>(10, actual[0])),
                                      from_paths(std::vector<std::vector<double>>(10, actual[1]))};
        auto r = evaluate_forecasts(f, actual, insample, 7, levels);
        for (double v : {r.crps, r.ql50, r.ql90, r.msis, r.nrmse, r.smape, r.mase}) {
            if (v != 0.0) {
                failures.push_back("perfect oracle scored " + fmt(v));
                break;
            }
        }
    }
    Outcome o;
    o.pass = failures.empty();
    o.detail = "20 Gaussian fixtures, worst CRPS deviation from the integral " + fmt(worst, 3) + " (<= " +
               fmt(kCrpsIntegralTolerance) + "); micro-cases and perfect oracle " +
               (failures.empty() ? std::string("exact") : "failed:");
    for (auto& f : failures) o.detail += " " + f + ";";
    return o;
}

// --- 10. determinism --------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    SinusoidSuite spec;
    spec.num_series = 4;
    spec.length = 120;
    spec.prediction_length = 10;
    spec.context_length = 30;
    const auto ds = make_sinusoid_suite(spec);
    const fs::path dir = fs::temp_directory_path() / "vqar_acceptance_determinism";
    fs::create_directories(dir);
    ModelConfig mc;
    mc.encoder_size = 12;
    mc.decoder_size = 8;
    mc.codebook_size = 16;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.batches_per_epoch = 4;
    tc.seed = 42;

    std::vector<std::string> checkpoints, forecasts, reports;
    for (int run = 0; run < 2; ++run) {
        const auto path = dir / ("run" + std::to_string(run) + ".bin");
        auto state = train(drop_last(ds, spec.prediction_length), mc, default_feature_config(ds, true), tc);
        save_checkpoint(path, state);
        checkpoints.push_back(file_bytes(path));
        auto loaded = load_checkpoint(path);
        BacktestOptions bo;
        bo.num_samples = 40;
        bo.seed = 7;
        auto bt = backtest(*loaded.model, ds, bo);
        std::ostringstream samples;
        samples.precision(17);
        for (auto& f : bt.forecasts) {
            for (double v : f.samples) samples << v << ' ';
        }
        forecasts.push_back(samples.str());
        reports.push_back(bt.report.to_json().dump());
    }
    fs::remove_all(dir);
    Outcome o;
    o.pass = checkpoints[0] == checkpoints[1] && forecasts[0] == forecasts[1] && reports[0] == reports[1];
    o.detail = std::string("checkpoints ") + (checkpoints[0] == checkpoints[1] ? "identical" : "differ") + " (" +
               std::to_string(checkpoints[0].size()) + " bytes), forecasts " +
               (forecasts[0] == forecasts[1] ? "identical" : "differ") + ", reports " +
               (reports[0] == reports[1] ? "identical" : "differ");
    return o;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient correctness", gradient_correctness},
    {2, "quantizer properties", quantizer_properties},
    {3, "straight-through contract", straight_through_contract},
    {4, "scale invariance", scale_invariance},
    {5, "synthetic convergence", synthetic_convergence},
    {6, "Exchange reproduction", exchange_reproduction},
    {7, "codebook-size ablation", ablation_direction},
    {8, "robustness trend", robustness_trend},
    {9, "metric oracles", metric_oracles},
    {10, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::cerr << "usage: acceptance [--criterion N]\n";
            return 2;
        }
    }
    bool all_pass = true;
    bool ran = false;
    for (const auto& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        ran = true;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
        all_pass = all_pass && o.pass;
    }
    if (!ran) {
        std::cerr << "no criterion " << only << '\n';
        return 2;
    }
    return all_pass ? 0 : 1;
}
