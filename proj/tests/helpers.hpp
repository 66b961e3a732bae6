#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deltalag/marketdata.hpp"
#include "deltalag/synthetic.hpp"
#include "deltalag/tensor.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("deltalag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline deltalag::Array random_array(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  deltalag::Array a(r, c);
  for (double& x : a.values()) x = d(rng);
  return a;
}

inline deltalag::Bar flat_bar(deltalag::Date d, double price, double volume = 1000.0) {
  deltalag::Bar b;
  b.date = d;
  b.open = b.high = b.low = b.close = price;
  b.volume = volume;
  return b;
}

// Normalized panel from a synthetic spec.
inline deltalag::FeaturePanel synthetic_panel(const deltalag::SyntheticSpec& spec,
                                              deltalag::FeatureMode mode = deltalag::FeatureMode::kFull) {
  auto m = deltalag::generate_synthetic(spec);
  return deltalag::normalize(deltalag::compute_features(m.bars, mode)).panel;
}

inline deltalag::SyntheticSpec tiny_spec(std::uint64_t seed = 3) {
  deltalag::SyntheticSpec s;
  s.n_stocks = 8;
  s.n_days = 90;
  s.n_leaders = 4;
  s.lag_min = 1;
  s.lag_max = 4;
  s.noise_sd = 0.02;
  s.seed = seed;
  return s;
}

}  // namespace testing
