#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "deltalag/params.hpp"
#include "deltalag/tensor.hpp"

namespace deltalag {

// Gated recurrent (LSTM) temporal encoder. Gate columns are laid out as
// [input | forget | output | candidate], each `hidden` wide.
struct EncoderNames {
  static constexpr const char* kInput = "encoder.w_input";    // F x 4N
  static constexpr const char* kHidden = "encoder.w_hidden";  // N x 4N
  static constexpr const char* kBias = "encoder.bias";        // 1 x 4N
};

// Adds encoder parameters; the forget-gate bias starts at 1.
void init_encoder(ParamSet& params, std::size_t features, std::size_t hidden, std::mt19937_64& rng);

std::size_t encoder_hidden_size(const ParamSet& params);

// Runs the cell over `steps` (one B x F array per time step, oldest first) for a
// batch of B sequences. Returns one B x N hidden-state array per step; initial
// hidden and cell states are zero.
std::vector<Var> encode_batch(Tape& tape, ParamSet& params, std::span<const Array> steps);

// Single sequence X (L x F) -> X' (L x N); row i is the hidden state after
// consuming rows 0..i.
Var encoder_forward(Tape& tape, const Array& x, ParamSet& params);

}  // namespace deltalag
