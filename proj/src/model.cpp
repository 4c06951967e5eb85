#include "vqar/model.hpp"

#include <cmath>

#include "vqar/errors.hpp"

namespace vqar {

VqArModel::VqArModel(const ModelConfig& config, const FeatureConfig& features, Rng& rng)
    : codebook(CodebookConfig{config.codebook_size, config.encoder_size, config.ema_decay, config.commitment_cost,
                              config.replace_threshold},
               !config.use_ema),
      config_(config),
      features_(features) {
    if (config.encoder_size == 0 || config.decoder_size == 0) throw ConfigError("E and H must be positive");
    encoder = GruCell::create(1 + features.dim(), config.encoder_size, rng);
    decoder = GruCell::create(config.encoder_size, config.decoder_size, rng);
    head = HeadProjection::create(config.head, config.decoder_size, rng);
    if (features.use_identity && features.embedding_dim > 0) {
        if (features.num_categories == 0) throw ConfigError("identity embedding needs at least one category");
        const double bound = 1.0 / std::sqrt(static_cast<double>(features.embedding_dim));
        std::uniform_real_distribution<double> u(-bound, bound);
        std::vector<double> v(features.num_categories * features.embedding_dim);
        for (auto& x : v) x = u(rng);
        embedding = Tensor::matrix(features.num_categories, features.embedding_dim, std::move(v), true);
    }
}

std::vector<Tensor> VqArModel::parameters() const {
    std::vector<Tensor> out = encoder.parameters();
    for (auto& p : decoder.parameters()) out.push_back(p);
    for (auto& p : head.parameters()) out.push_back(p);
    if (embedding.defined()) out.push_back(embedding);
    if (!config_.use_ema) out.push_back(codebook.vectors());
    return out;
}

Tensor VqArModel::identity_rows(std::span<const std::size_t> categories) const {
    if (!embedding.defined()) return Tensor();
    for (std::size_t c : categories) {
        if (c >= features_.num_categories) {
            throw DataError("series category " + std::to_string(c) + " is outside the embedding table of " +
                            std::to_string(features_.num_categories));
        }
    }
    return gather_rows(embedding, categories);
}

namespace {

struct BatchInputs {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::size_t cov_dim = 0;
    Tensor identity;
};

BatchInputs check_batch(const VqArModel& model, std::span<const TrainingWindow> windows) {
    if (windows.empty()) throw ContractError("forward pass over an empty batch");
    BatchInputs in;
    in.batch = windows.size();
    in.length = windows[0].length();
    in.cov_dim = model.features().numeric_dim();
    if (in.length < 2) throw ContractError("windows need at least two positions");
    std::vector<std::size_t> cats;
    for (const auto& w : windows) {
        if (w.length() != in.length) throw ContractError("windows in a batch must share their length");
        if (w.cov_dim != in.cov_dim) {
            throw ContractError("window covariates have width " + std::to_string(w.cov_dim) + ", model expects " +
                                std::to_string(in.cov_dim));
        }
        cats.push_back(w.category);
    }
    in.identity = model.identity_rows(cats);
    return in;
}

Tensor column_at(std::span<const TrainingWindow> windows, std::size_t t, bool raw) {
    std::vector<double> v(windows.size());
    for (std::size_t b = 0; b < windows.size(); ++b) {
        v[b] = raw ? windows[b].raw_target[t] : windows[b].scaled_target[t];
    }
    return Tensor::matrix(windows.size(), 1, std::move(v));
}

Tensor covariates_at_step(const BatchInputs& in, std::span<const TrainingWindow> windows, std::size_t t) {
    std::vector<double> v;
    v.reserve(in.batch * in.cov_dim);
    for (const auto& w : windows) {
        auto row = w.covariates_row(t);
        v.insert(v.end(), row.begin(), row.end());
    }
    Tensor numeric = Tensor::matrix(in.batch, in.cov_dim, std::move(v));
    if (!in.identity.defined()) return numeric;
    return concat_cols({numeric, in.identity});
}

}  // namespace

BatchForward forward_batch(const VqArModel& model, std::span<const TrainingWindow> windows,
                           const ForwardOptions& options) {
    const BatchInputs in = check_batch(model, windows);
    const std::size_t steps = in.length - 1;
    const std::size_t e = model.config().encoder_size;
    if (!options.forced_indices.empty() && options.forced_indices.size() != steps * in.batch) {
        throw ContractError("forced indices: expected " + std::to_string(steps * in.batch) + ", got " +
                            std::to_string(options.forced_indices.size()));
    }
    const bool surrogate = !options.base_encodings.empty();
    if (surrogate && (options.forced_indices.empty() || options.base_encodings.size() != steps * in.batch * e ||
                      options.base_quantized.size() != steps * in.batch * e)) {
        throw ContractError("surrogate evaluation needs forced indices and two blocks of " +
                            std::to_string(steps * in.batch * e) + " values");
    }
    const bool count_head = model.config().head == HeadFamily::NegativeBinomial;
    Tensor nu;
    if (count_head) {
        std::vector<double> v;
        for (const auto& w : windows) v.push_back(w.nu);
        nu = Tensor::matrix(in.batch, 1, std::move(v));
    }

    BatchForward out;
    out.encodings.reserve(steps * in.batch * e);
    out.assignments.reserve(steps * in.batch);
    Tensor h_enc = Tensor::zeros({in.batch, e});
    Tensor h_dec = Tensor::zeros({in.batch, model.config().decoder_size});
    Tensor total;
    for (std::size_t t = 1; t <= steps; ++t) {
        Tensor x_prev = column_at(windows, t - 1, false);
        h_enc = encode_step(model.encoder, h_enc, x_prev, covariates_at_step(in, windows, t));
        out.encodings.insert(out.encodings.end(), h_enc.data().begin(), h_enc.data().end());

        Tensor z_st;
        Tensor vq;
        if (options.forced_indices.empty()) {
            auto q = quantize_batch(h_enc, model.codebook);
            out.assignments.insert(out.assignments.end(), q.indices.begin(), q.indices.end());
            z_st = q.st_output;
            vq = vq_loss(q, model.codebook, model.config().use_ema);
        } else {
            auto forced = options.forced_indices.subspan((t - 1) * in.batch, in.batch);
            out.assignments.insert(out.assignments.end(), forced.begin(), forced.end());
            Tensor z = gather_rows(model.codebook.vectors(), forced);
            if (!surrogate) {
                z_st = straight_through(h_enc, z);
                Tensor commit = row_sum(square(sub(h_enc, stop_gradient(z))));
                vq = scale(commit, model.config().commitment_cost);
                if (!model.config().use_ema) vq = add(row_sum(square(sub(stop_gradient(h_enc), z))), vq);
            } else {
                const std::size_t off = (t - 1) * in.batch * e;
                auto block = [&](std::span<const double> src) {
                    auto part = src.subspan(off, in.batch * e);
                    return Tensor::matrix(in.batch, e, std::vector<double>(part.begin(), part.end()));
                };
                Tensor h0 = block(options.base_encodings);
                Tensor z0 = block(options.base_quantized);
                z_st = add(h_enc, sub(z0, h0));
                vq = scale(row_sum(square(sub(h_enc, z0))), model.config().commitment_cost);
                if (!model.config().use_ema) vq = add(row_sum(square(sub(h0, z))), vq);
            }
        }
        h_dec = decode_step(model.decoder, h_dec, z_st);
        DistributionParams params = project(model.head, h_dec);
        Tensor nll_t = count_head ? nll(rescale(params, nu), column_at(windows, t, true))
                                  : nll(params, column_at(windows, t, false));
        for (double v : nll_t.data()) out.nll_sum += v;
        Tensor step = add(nll_t, vq);
        if (options.keep_step_losses) out.step_losses.push_back(step);
        total = total.defined() ? add(total, step) : step;
    }
    out.loss = scale(sum(total), 1.0 / static_cast<double>(in.batch * steps));
    return out;
}

std::vector<double> encode_windows(const VqArModel& model, std::span<const TrainingWindow> windows) {
    NoGradGuard no_grad;
    const BatchInputs in = check_batch(model, windows);
    const std::size_t e = model.config().encoder_size;
    std::vector<double> out;
    out.reserve((in.length - 1) * in.batch * e);
    Tensor h_enc = Tensor::zeros({in.batch, e});
    for (std::size_t t = 1; t < in.length; ++t) {
        h_enc = encode_step(model.encoder, h_enc, column_at(windows, t - 1, false), covariates_at_step(in, windows, t));
        out.insert(out.end(), h_enc.data().begin(), h_enc.data().end());
    }
    return out;
}

Tensor step_loss(const VqArModel& model, const TrainingWindow& window, std::size_t t) {
    if (t < 1 || t >= window.length()) {
        throw ContractError("step_loss: position " + std::to_string(t) + " outside [1, " +
                            std::to_string(window.length() - 1) + "]");
    }
    ForwardOptions opts;
    opts.keep_step_losses = true;
    auto fwd = forward_batch(model, std::span<const TrainingWindow>(&window, 1), opts);
    return reshape(fwd.step_losses[t - 1], {});
}

}  // namespace vqar
