#include "vqar/heads.hpp"

#include <cmath>
#include <numbers>

#include "vqar/errors.hpp"

namespace vqar {

std::string to_string(HeadFamily family) {
    switch (family) {
        case HeadFamily::Gaussian:
            return "gaussian";
        case HeadFamily::StudentT:
            return "student_t";
        case HeadFamily::NegativeBinomial:
            return "neg_binomial";
    }
    return "unknown";
}

HeadFamily parse_head_family(std::string_view name) {
    if (name == "gaussian") return HeadFamily::Gaussian;
    if (name == "student_t") return HeadFamily::StudentT;
    if (name == "neg_binomial") return HeadFamily::NegativeBinomial;
    throw ConfigError("unknown head family '" + std::string(name) + "' (gaussian | student_t | neg_binomial)");
}

std::size_t parameter_count(HeadFamily family) {
    return family == HeadFamily::StudentT ? 3 : 2;
}

HeadProjection HeadProjection::create(HeadFamily family, std::size_t hidden, Rng& rng) {
    const std::size_t k = parameter_count(family);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(hidden * k);
    for (auto& v : w) v = u(rng);
    return {family, Tensor::matrix(hidden, k, std::move(w), true), Tensor::zeros({k}, true)};
}

HeadProjection HeadProjection::zeros(HeadFamily family, std::size_t hidden) {
    const std::size_t k = parameter_count(family);
    return {family, Tensor::zeros({hidden, k}, true), Tensor::zeros({k}, true)};
}

DistributionParams project(const HeadProjection& head, const Tensor& h_dec) {
    Tensor raw = affine(h_dec, head.weight, head.bias);
    auto col = [&](std::size_t j) { return slice_cols(raw, j, j + 1); };
    DistributionParams p{head.family, {}};
    switch (head.family) {
        case HeadFamily::Gaussian:
            p.params = {col(0), softplus(col(1))};
            break;
        case HeadFamily::StudentT:
            p.params = {add_scalar(softplus(col(0)), 2.0), col(1), softplus(col(2))};
            break;
        case HeadFamily::NegativeBinomial:
            p.params = {softplus(col(0)), softplus(col(1))};
            break;
    }
    return p;
}

Tensor nll(const DistributionParams& p, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != 1 || x.rows() != p.rows()) {
        throw ContractError("nll: observations " + shape_str(x.shape()) + " for " + std::to_string(p.rows()) +
                            " parameter rows");
    }
    switch (p.family) {
        case HeadFamily::Gaussian: {
            const Tensor& mu = p.params[0];
            const Tensor& sigma = p.params[1];
            Tensor z = div(sub(x, mu), sigma);
            return add_scalar(add(log(sigma), scale(square(z), 0.5)), 0.5 * std::log(2.0 * std::numbers::pi));
        }
        case HeadFamily::StudentT: {
            const Tensor& df = p.params[0];
            const Tensor& loc = p.params[1];
            const Tensor& s = p.params[2];
            Tensor z = div(sub(x, loc), s);
            Tensor half_df = scale(df, 0.5);
            Tensor half_df1 = add_scalar(half_df, 0.5);
            Tensor log_norm = sub(lgamma(half_df), lgamma(half_df1));
            log_norm = add(log_norm, scale(log(scale(df, std::numbers::pi)), 0.5));
            log_norm = add(log_norm, log(s));
            Tensor tail = mul(half_df1, log(add_scalar(div(square(z), df), 1.0)));
            return add(log_norm, tail);
        }
        case HeadFamily::NegativeBinomial: {
            for (double v : x.data()) {
                if (v < 0.0 || v != std::floor(v)) {
                    throw ContractError("negative binomial likelihood needs non-negative integer targets, got " +
                                        std::to_string(v));
                }
            }
            const Tensor& mu = p.params[0];
            const Tensor& alpha = p.params[1];
            Tensor r = reciprocal(alpha);
            Tensor alpha_mu = mul(alpha, mu);
            Tensor log1p_am = log(add_scalar(alpha_mu, 1.0));
            Tensor log_fact = lgamma(add_scalar(x, 1.0));  // constant
            Tensor log_p = sub(lgamma(add(x, r)), lgamma(r));
            log_p = sub(log_p, log_fact);
            log_p = sub(log_p, mul(r, log1p_am));
            log_p = add(log_p, mul(x, sub(log(alpha_mu), log1p_am)));
            return neg(log_p);
        }
    }
    throw ContractError("nll: unknown family");
}

double sample(const DistributionParams& p, std::size_t row, Rng& rng) {
    switch (p.family) {
        case HeadFamily::Gaussian: {
            std::normal_distribution<double> d(p.value(0, row), p.value(1, row));
            return d(rng);
        }
        case HeadFamily::StudentT: {
            std::student_t_distribution<double> d(p.value(0, row));
            return p.value(1, row) + p.value(2, row) * d(rng);
        }
        case HeadFamily::NegativeBinomial: {
            // Poisson-Gamma mixture: lambda ~ Gamma(r, mu / r), x ~ Poisson(lambda).
            const double mu = p.value(0, row);
            const double r = 1.0 / p.value(1, row);
            std::gamma_distribution<double> g(r, mu / r);
            const double lambda = g(rng);
            if (!(lambda > 0.0)) return 0.0;
            std::poisson_distribution<long long> pois(lambda);
            return static_cast<double>(pois(rng));
        }
    }
    throw ContractError("sample: unknown family");
}

DistributionParams rescale(const DistributionParams& p, const Tensor& nu) {
    for (double v : nu.data()) {
        if (!(v > 0.0)) throw ContractError("rescale: scale must be positive, got " + std::to_string(v));
    }
    DistributionParams out{p.family, p.params};
    switch (p.family) {
        case HeadFamily::Gaussian:
            out.params[0] = mul(p.params[0], nu);
            out.params[1] = mul(p.params[1], nu);
            break;
        case HeadFamily::StudentT:
            out.params[1] = mul(p.params[1], nu);
            out.params[2] = mul(p.params[2], nu);
            break;
        case HeadFamily::NegativeBinomial:
            out.params[0] = mul(p.params[0], nu);
            break;
    }
    return out;
}

DistributionParams rescale(const DistributionParams& p, double nu) {
    return rescale(p, Tensor::full({p.rows(), 1}, nu));
}

double distribution_mean(const DistributionParams& p, std::size_t row) {
    switch (p.family) {
        case HeadFamily::Gaussian:
        case HeadFamily::NegativeBinomial:
            return p.value(0, row);
        case HeadFamily::StudentT:
            return p.value(1, row);
    }
    return 0.0;
}

}  // namespace vqar
