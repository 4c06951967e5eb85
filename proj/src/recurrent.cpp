#include "vqar/recurrent.hpp"

#include <cmath>

#include "vqar/errors.hpp"

namespace vqar {

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

GruCell GruCell::create(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
    if (input_size == 0 || hidden_size == 0) throw ConfigError("GRU sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    GruCell c;
    c.input_size = input_size;
    c.hidden_size = hidden_size;
    c.w_u = uniform_param({input_size, hidden_size}, bound, rng);
    c.w_r = uniform_param({input_size, hidden_size}, bound, rng);
    c.w_c = uniform_param({input_size, hidden_size}, bound, rng);
    c.u_u = uniform_param({hidden_size, hidden_size}, bound, rng);
    c.u_r = uniform_param({hidden_size, hidden_size}, bound, rng);
    c.u_c = uniform_param({hidden_size, hidden_size}, bound, rng);
    c.b_u = Tensor::zeros({hidden_size}, true);
    c.b_r = Tensor::zeros({hidden_size}, true);
    c.b_c = Tensor::zeros({hidden_size}, true);
    return c;
}

GruCell GruCell::zeros(std::size_t input_size, std::size_t hidden_size) {
    if (input_size == 0 || hidden_size == 0) throw ConfigError("GRU sizes must be positive");
    GruCell c;
    c.input_size = input_size;
    c.hidden_size = hidden_size;
    c.w_u = Tensor::zeros({input_size, hidden_size}, true);
    c.w_r = Tensor::zeros({input_size, hidden_size}, true);
    c.w_c = Tensor::zeros({input_size, hidden_size}, true);
    c.u_u = Tensor::zeros({hidden_size, hidden_size}, true);
    c.u_r = Tensor::zeros({hidden_size, hidden_size}, true);
    c.u_c = Tensor::zeros({hidden_size, hidden_size}, true);
    c.b_u = Tensor::zeros({hidden_size}, true);
    c.b_r = Tensor::zeros({hidden_size}, true);
    c.b_c = Tensor::zeros({hidden_size}, true);
    return c;
}

std::vector<Tensor> GruCell::parameters() const { return {w_u, w_r, w_c, u_u, u_r, u_c, b_u, b_r, b_c}; }

Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h_prev) {
    if (x.rank() != 2 || x.cols() != cell.input_size || h_prev.rank() != 2 ||
        h_prev.cols() != cell.hidden_size || x.rows() != h_prev.rows()) {
        throw ContractError("gru_step: input " + shape_str(x.shape()) + " / state " + shape_str(h_prev.shape()) +
                            " do not fit a cell of input " + std::to_string(cell.input_size) + ", hidden " +
                            std::to_string(cell.hidden_size));
    }
    Tensor u = sigmoid(add(affine(x, cell.w_u, cell.b_u), matmul(h_prev, cell.u_u)));
    Tensor r = sigmoid(add(affine(x, cell.w_r, cell.b_r), matmul(h_prev, cell.u_r)));
    Tensor c = tanh(add(affine(x, cell.w_c, cell.b_c), mul(r, matmul(h_prev, cell.u_c))));
    return add(h_prev, mul(u, sub(c, h_prev)));
}

EncoderDecoderState EncoderDecoderState::zeros(std::size_t batch, std::size_t enc_size, std::size_t dec_size) {
    return {Tensor::zeros({batch, enc_size}), Tensor::zeros({batch, dec_size})};
}

Tensor encode_step(const GruCell& encoder, const Tensor& h_enc, const Tensor& x_prev, const Tensor& covariates) {
    if (x_prev.rank() != 2 || x_prev.cols() != 1) {
        throw ContractError("encode_step: previous target must be [B, 1], got " + shape_str(x_prev.shape()));
    }
    if (!covariates.defined() || covariates.cols() == 0) return gru_step(encoder, x_prev, h_enc);
    return gru_step(encoder, concat_cols({x_prev, covariates}), h_enc);
}

Tensor decode_step(const GruCell& decoder, const Tensor& h_dec, const Tensor& z_st) {
    return gru_step(decoder, z_st, h_dec);
}

}  // namespace vqar
