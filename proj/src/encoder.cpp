#include "deltalag/encoder.hpp"

#include "deltalag/errors.hpp"

namespace deltalag {

void init_encoder(ParamSet& params, std::size_t features, std::size_t hidden, std::mt19937_64& rng) {
  params.add(EncoderNames::kInput, xavier_uniform(features, 4 * hidden, rng));
  params.add(EncoderNames::kHidden, scaled_uniform(hidden, 4 * hidden, hidden, rng));
  Array bias(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  params.add(EncoderNames::kBias, std::move(bias));
}

std::size_t encoder_hidden_size(const ParamSet& params) {
  return params.value(EncoderNames::kHidden).rows();
}

std::vector<Var> encode_batch(Tape& tape, ParamSet& params, std::span<const Array> steps) {
  const std::size_t n = encoder_hidden_size(params);
  const std::size_t f = params.value(EncoderNames::kInput).rows();
  Var w_in = params.bind(tape, EncoderNames::kInput);
  Var w_h = params.bind(tape, EncoderNames::kHidden);
  Var bias = params.bind(tape, EncoderNames::kBias);

  std::vector<Var> hidden;
  hidden.reserve(steps.size());
  Var h{}, c{};
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Array& x = steps[t];
    if (x.cols() != f) {
      throw DimensionError("encoder expects " + std::to_string(f) + " features, got " +
                           std::to_string(x.cols()));
    }
    if (!x.all_finite()) throw DomainError("encoder input contains non-finite values");
    Var pre = ops::matmul(tape.constant(x), w_in);
    if (t > 0) pre = ops::add(pre, ops::matmul(h, w_h));
    pre = ops::add_row(pre, bias);
    Var in_gate = ops::sigmoid(ops::slice_cols(pre, 0, n));
    Var forget_gate = ops::sigmoid(ops::slice_cols(pre, n, n));
    Var out_gate = ops::sigmoid(ops::slice_cols(pre, 2 * n, n));
    Var candidate = ops::tanh(ops::slice_cols(pre, 3 * n, n));
    c = t > 0 ? ops::add(ops::mul(forget_gate, c), ops::mul(in_gate, candidate))
              : ops::mul(in_gate, candidate);
    h = ops::mul(out_gate, ops::tanh(c));
    hidden.push_back(h);
  }
  return hidden;
}

Var encoder_forward(Tape& tape, const Array& x, ParamSet& params) {
  if (x.rows() == 0) throw DimensionError("encoder_forward: empty sequence");
  std::vector<Array> steps;
  steps.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    steps.emplace_back(1, x.cols(), std::vector<double>(x.row(r).begin(), x.row(r).end()));
  }
  std::vector<Var> hidden = encode_batch(tape, params, steps);
  return ops::concat_rows(hidden);
}

}  // namespace deltalag
