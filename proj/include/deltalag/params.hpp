#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deltalag/tensor.hpp"

namespace deltalag {

// Named learnable arrays with matching gradient accumulators. Iteration order
// is insertion order, which fixes checkpoint layout and optimizer order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Array value;
    Array grad;
  };

  void add(const std::string& name, Array value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Array& value(const std::string& name) const;
  Array& value(const std::string& name);
  const Array& grad(const std::string& name) const;
  Array& grad(const std::string& name);

  // Records the parameter as a tape leaf whose adjoint lands in grad(name).
  Var bind(Tape& tape, const std::string& name);

  void zero_grad();
  std::size_t count() const;  // total scalar parameters
  std::vector<std::string> names() const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Uniform Xavier/Glorot: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Array xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
// U(-1/sqrt(n), 1/sqrt(n)) for recurrent weights with hidden size n.
Array scaled_uniform(std::size_t rows, std::size_t cols, std::size_t hidden, std::mt19937_64& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Array> first;
  std::map<std::string, Array> second;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// One bias-corrected Adam update from the accumulated gradients, which are
// cleared afterwards.
void adam_step(ParamSet& params, AdamState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

using LossFn = std::function<Var(Tape&, ParamSet&)>;

// Compares reverse-mode gradients with central differences
// (f(p+eps) - f(p-eps)) / (2 eps) element by element. The relative error uses
// max(1, |analytic|, |numeric|) as denominator. Parameters are restored
// exactly and gradients are zeroed on return.
GradCheckResult grad_check(const LossFn& f, ParamSet& params, double eps = 1e-5);

// Checkpoint container; see docs/checkpoint_format.md.
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);
// Loads into an existing layout; every name must be present with the same shape.
void load_checkpoint_into(ParamSet& params, const std::filesystem::path& path);

}  // namespace deltalag
