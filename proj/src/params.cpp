#include "deltalag/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "deltalag/errors.hpp"

namespace deltalag {

void ParamSet::add(const std::string& name, Array value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Array grad(value.rows(), value.cols());
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, std::move(value), std::move(grad)});
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const Array& ParamSet::value(const std::string& name) const { return at(name).value; }
Array& ParamSet::value(const std::string& name) { return at(name).value; }
const Array& ParamSet::grad(const std::string& name) const { return at(name).grad; }
Array& ParamSet::grad(const std::string& name) { return at(name).grad; }

Var ParamSet::bind(Tape& tape, const std::string& name) {
  Entry& e = at(name);
  return tape.parameter(e.value, &e.grad);
}

void ParamSet::zero_grad() {
  for (Entry& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) out.push_back(e.name);
  return out;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name) return false;
    if (!(a.entries_[i].value == b.entries_[i].value)) return false;
  }
  return true;
}

Array xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Array a(fan_in, fan_out);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

Array scaled_uniform(std::size_t rows, std::size_t cols, std::size_t hidden, std::mt19937_64& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Array a(rows, cols);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

void adam_step(ParamSet& params, AdamState& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& e : params.entries()) {
    auto [mit, m_new] = state.first.try_emplace(e.name, e.value.rows(), e.value.cols());
    auto [vit, v_new] = state.second.try_emplace(e.name, e.value.rows(), e.value.cols());
    Array& m = mit->second;
    Array& v = vit->second;
    if (!m.same_shape(e.value)) throw DimensionError("adam state shape mismatch for '" + e.name + "'");
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
  params.zero_grad();
}

GradCheckResult grad_check(const LossFn& f, ParamSet& params, double eps) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, params);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape(false);
    return f(tape, params).value().item();
  };

  GradCheckResult result;
  for (auto& e : params.entries()) {
    const Array analytic = e.grad;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double original = e.value[i];
      e.value[i] = original + eps;
      const double fp = evaluate();
      e.value[i] = original - eps;
      const double fm = evaluate();
      e.value[i] = original;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_param = e.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

namespace {

constexpr char kMagic[8] = {'D', 'L', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
void put(std::string& buf, T v) {
  v = to_little(v);
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  double f64_at(std::size_t at) const {
    double v;
    std::memcpy(&v, data_.data() + at, sizeof v);
    return to_little(v);
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError("checkpoint truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  std::string header(kMagic, sizeof kMagic);
  put<std::uint32_t>(header, static_cast<std::uint32_t>(params.entries().size()));
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(header, static_cast<std::uint32_t>(e.name.size()));
    header += e.name;
    put<std::uint32_t>(header, 2);
    put<std::uint64_t>(header, e.value.rows());
    put<std::uint64_t>(header, e.value.cols());
    put<std::uint64_t>(header, offset);
    offset += e.value.size() * sizeof(double);
  }
  put<std::uint64_t>(header, offset);
  std::string payload;
  payload.reserve(offset);
  for (const auto& e : params.entries()) {
    for (double v : e.value.values()) put<double>(payload, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw FormatError("not a checkpoint file: bad magic");
  }
  struct Item {
    std::string name;
    std::uint64_t rows, cols, offset;
  };
  const auto count = r.get<std::uint32_t>();
  std::vector<Item> items;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    Item it;
    it.name = r.bytes(len);
    const auto rank = r.get<std::uint32_t>();
    if (rank != 2) throw FormatError("unsupported rank " + std::to_string(rank) + " for '" + it.name + "'");
    it.rows = r.get<std::uint64_t>();
    it.cols = r.get<std::uint64_t>();
    it.offset = r.get<std::uint64_t>();
    items.push_back(std::move(it));
  }
  const auto payload_len = r.get<std::uint64_t>();
  const std::size_t payload_start = r.pos();
  if (payload_start + payload_len != r.size()) {
    throw FormatError("checkpoint payload length mismatch (truncated or trailing data)");
  }
  ParamSet params;
  for (const Item& it : items) {
    const std::uint64_t capacity = payload_len / sizeof(double);
    if (it.cols != 0 && it.rows > capacity / it.cols) {
      throw FormatError("manifest entry '" + it.name + "' exceeds payload");
    }
    const std::uint64_t n = it.rows * it.cols;
    if (it.offset % sizeof(double) != 0 || it.offset > payload_len ||
        n * sizeof(double) > payload_len - it.offset) {
      throw FormatError("manifest entry '" + it.name + "' exceeds payload");
    }
    if (params.contains(it.name)) throw FormatError("duplicate manifest entry '" + it.name + "'");
    std::vector<double> values(n);
    const std::size_t base = payload_start + static_cast<std::size_t>(it.offset);
    for (std::uint64_t k = 0; k < n; ++k) values[k] = r.f64_at(base + k * sizeof(double));
    params.add(it.name, Array(it.rows, it.cols, std::move(values)));
  }
  return params;
}

void load_checkpoint_into(ParamSet& params, const std::filesystem::path& path) {
  ParamSet loaded = load_checkpoint(path);
  for (const auto& e : loaded.entries()) {
    if (!params.contains(e.name)) throw DimensionError("checkpoint parameter '" + e.name + "' is not in the model");
  }
  for (auto& e : params.entries()) {
    if (!loaded.contains(e.name)) throw DimensionError("checkpoint lacks parameter '" + e.name + "'");
    const Array& src = loaded.value(e.name);
    if (!src.same_shape(e.value)) {
      throw DimensionError("parameter '" + e.name + "' has shape " + shape_string(src) +
                           " in checkpoint, model expects " + shape_string(e.value));
    }
    e.value = src;
  }
  params.zero_grad();
}

}  // namespace deltalag
