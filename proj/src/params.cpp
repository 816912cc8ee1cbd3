#include "alttrack/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace alttrack {

void ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.contains(name)) throw ContractError("param store: duplicate parameter " + name);
  std::vector<double> g(init.size(), 0.0);
  entries_.emplace(name, Entry{std::move(init), std::move(g)});
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("param store: unknown parameter " + name);
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("param store: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

void ParamStore::set(const std::string& name, Tensor value) {
  auto& e = entry(name);
  if (e.value.shape() != value.shape()) throw ContractError("param store: shape change for " + name);
  e.value = std::move(value);
}

std::span<const double> ParamStore::grad(const std::string& name) const { return entry(name).grad; }

void ParamStore::accumulate_grad(const std::string& name, std::span<const double> g) {
  auto& e = entry(name);
  if (g.size() != e.grad.size()) throw ContractError("param store: gradient size mismatch for " + name);
  for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [name, e] : entries_)
    for (double g : e.grad) s += g * g;
  return std::sqrt(s);
}

void ParamStore::scale_grad(double factor) {
  for (auto& [name, e] : entries_)
    for (double& g : e.grad) g *= factor;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

bool ParamStore::values_equal(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [k, e] : entries_) {
    auto it = other.entries_.find(k);
    if (it == other.entries_.end() || !(it->second.value == e.value)) return false;
  }
  return true;
}

Tensor init_weight(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(w));
}

void AdamW::step(ParamStore& store) {
  const auto names = store.names();
  for (const auto& n : names) {
    for (double g : store.grad(n)) {
      if (!std::isfinite(g)) throw DivergenceError("adamw: non-finite gradient in " + n);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& n : names) {
    const auto& value = store.value(n);
    const auto grad = store.grad(n);
    auto& [m, v] = moments_[n];
    if (m.empty()) {
      m.assign(value.size(), 0.0);
      v.assign(value.size(), 0.0);
    }
    std::vector<double> next(value.data().begin(), value.data().end());
    for (std::size_t i = 0; i < next.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      next[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * next[i]);
    }
    store.set(n, Tensor(value.shape(), std::move(next)));
  }
  store.advance_step();
}

namespace {

constexpr char kMagic[8] = {'A', 'L', 'T', 'T', 'R', 'K', 'C', 'K'};

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const std::string& config_text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(os, kCheckpointVersion);
  write_le<std::uint64_t>(os, config_text.size());
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  const auto names = store.names();
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(names.size()));
  for (const auto& n : names) {
    const auto& t = store.value(n);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(n.size()));
    os.write(n.data(), static_cast<std::streamsize>(n.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) write_le<std::uint64_t>(os, d);
    for (double v : t.data()) write_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path, std::string* config_text) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const auto cfg_len = read_le<std::uint64_t>(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw std::runtime_error("checkpoint: truncated config block");
  if (config_text) *config_text = cfg;
  ParamStore store;
  const auto count = read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_le<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(is));
    std::vector<double> data(shape_product(shape));
    for (auto& v : data) v = read_le<double>(is);
    store.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

}  // namespace alttrack
