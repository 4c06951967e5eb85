#pragma once

#include <cstddef>
#include <vector>

#include "vqar/random.hpp"
#include "vqar/tensor.hpp"

namespace vqar {

// Single-layer GRU cell. Input-side weights are stored [input, hidden] and
// recurrent weights [hidden, hidden] so that a batch row vector multiplies
// from the left.
//
//   u  = sigmoid(x W_u + h U_u + b_u)
//   r  = sigmoid(x W_r + h U_r + b_r)
//   c  = tanh(x W_c + r * (h U_c) + b_c)
//   h' = (1 - u) * h + u * c
struct GruCell {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    Tensor w_u, w_r, w_c;
    Tensor u_u, u_r, u_c;
    Tensor b_u, b_r, b_c;

    // Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases.
    static GruCell create(std::size_t input_size, std::size_t hidden_size, Rng& rng);
    static GruCell zeros(std::size_t input_size, std::size_t hidden_size);

    std::vector<Tensor> parameters() const;
};

// x [B, input], h_prev [B, hidden] -> [B, hidden]
Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h_prev);

struct EncoderDecoderState {
    Tensor h_enc;  // [B, E]
    Tensor h_dec;  // [B, H]

    static EncoderDecoderState zeros(std::size_t batch, std::size_t enc_size, std::size_t dec_size);
};

// Encoder input is concat(x_prev, covariates), in that order. `covariates`
// may be undefined when there are no covariates.
Tensor encode_step(const GruCell& encoder, const Tensor& h_enc, const Tensor& x_prev, const Tensor& covariates);

// The decoder sees only the (straight-through) quantized latent.
Tensor decode_step(const GruCell& decoder, const Tensor& h_dec, const Tensor& z_st);

}  // namespace vqar
