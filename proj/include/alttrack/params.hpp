#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "alttrack/tensor.hpp"

namespace alttrack {

/// Optimization diverged (non-finite loss or gradient).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named trainable tensors with gradient buffers of identical shape.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& value(const std::string& name) const;
  void set(const std::string& name, Tensor value);

  std::span<const double> grad(const std::string& name) const;
  void accumulate_grad(const std::string& name, std::span<const double> g);
  void zero_grad();
  /// Euclidean norm over every gradient entry.
  double grad_norm() const;
  void scale_grad(double factor);

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  std::uint64_t step() const noexcept { return step_; }
  void advance_step() noexcept { ++step_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.values_equal(b); }

 private:
  struct Entry {
    Tensor value;
    std::vector<double> grad;
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);
  bool values_equal(const ParamStore& other) const;

  std::map<std::string, Entry> entries_;
  std::uint64_t step_ = 0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight matrix [fan_in, fan_out].
Tensor init_weight(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// First/second moment estimates for decoupled weight decay Adam.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Applies one update from the store's gradients. Throws DivergenceError and leaves the store
  /// untouched if any gradient is non-finite.
  void step(ParamStore& store);

  const AdamWConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
  std::uint64_t t_ = 0;
};

// Checkpoint layout (all integers little-endian):
//   magic "ALTTRKCK" (8 bytes), u32 version = 1,
//   u64 config length, config text bytes,
//   u32 parameter count, then per parameter in name order:
//     u32 name length, name bytes, u32 rank, rank x u64 dims, product(dims) x f64 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const std::string& config_text);
ParamStore load_checkpoint(const std::filesystem::path& path, std::string* config_text = nullptr);

}  // namespace alttrack
