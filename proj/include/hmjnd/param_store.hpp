#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmjnd/tensor.hpp"

namespace hmjnd {

class Rng;

/// Named map from parameter path to tensor, plus Adam moment buffers and a
/// shared step counter. Paths are unique; iteration order is lexicographic,
/// which keeps every consumer (optimizer, serialization) deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& path, Tensor t);
  Tensor& get(const std::string& path);
  const Tensor& get(const std::string& path) const;
  bool has(const std::string& path) const;
  std::vector<std::string> paths() const;
  std::size_t count() const { return slots_.size(); }
  std::int64_t step() const { return step_; }

  void zero_grads();

  /// Standard Adam with bias correction. Throws if any gradient is missing
  /// (i.e. backward was never run).
  void adam_step(double lr, double beta1, double beta2, double eps);

 private:
  struct Slot {
    Tensor tensor;
    std::vector<double> m, v;
  };
  std::map<std::string, Slot> slots_;
  std::int64_t step_ = 0;
};

/// Convenience initializers used across the model.
Tensor make_weight(const Shape& shape, Rng& rng, double stddev = 0.02);
Tensor make_zeros_param(const Shape& shape);
Tensor make_ones_param(const Shape& shape);

void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps);

}  // namespace hmjnd
