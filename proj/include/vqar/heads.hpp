#pragma once

// Parametric distribution heads: projection from the decoder state to
// distribution parameters, negative log-likelihood, sampling and the
// mean-scale transformation.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vqar/random.hpp"
#include "vqar/tensor.hpp"

namespace vqar {

enum class HeadFamily { Gaussian, StudentT, NegativeBinomial };

std::string to_string(HeadFamily family);
// Accepts "gaussian", "student_t", "neg_binomial".
HeadFamily parse_head_family(std::string_view name);
std::size_t parameter_count(HeadFamily family);

// Per-row distribution parameters, each a [B, 1] tensor.
//   Gaussian:          (mu, sigma)
//   StudentT:          (df, loc, scale)
//   NegativeBinomial:  (mean, shape alpha); count r = 1 / alpha
struct DistributionParams {
    HeadFamily family = HeadFamily::Gaussian;
    std::vector<Tensor> params;

    std::size_t rows() const { return params.empty() ? 0 : params[0].rows(); }
    double value(std::size_t which, std::size_t row) const { return params[which].at(row, 0); }
};

struct HeadProjection {
    HeadFamily family = HeadFamily::Gaussian;
    Tensor weight;  // [H, k]
    Tensor bias;    // [k]

    static HeadProjection create(HeadFamily family, std::size_t hidden, Rng& rng);
    static HeadProjection zeros(HeadFamily family, std::size_t hidden);
    std::vector<Tensor> parameters() const { return {weight, bias}; }
};

DistributionParams project(const HeadProjection& head, const Tensor& h_dec);

// Per-row negative log-likelihood of observations x [B, 1]; returns [B, 1].
Tensor nll(const DistributionParams& p, const Tensor& x);

// One draw from row `row` of the parameter batch.
double sample(const DistributionParams& p, std::size_t row, Rng& rng);

// Maps a distribution of x/nu onto the distribution of x. `nu` is [B, 1].
DistributionParams rescale(const DistributionParams& p, const Tensor& nu);
DistributionParams rescale(const DistributionParams& p, double nu);

// Distribution mean of row `row` (used for diagnostics and tests).
double distribution_mean(const DistributionParams& p, std::size_t row);

}  // namespace vqar
