#include "hmjnd/param_store.hpp"

#include <cmath>
#include <stdexcept>

#include "hmjnd/rng.hpp"

namespace hmjnd {

Tensor& ParamStore::add(const std::string& path, Tensor t) {
  if (slots_.count(path)) throw std::logic_error("ParamStore: duplicate path " + path);
  if (!t.defined()) throw std::logic_error("ParamStore: undefined tensor for " + path);
  t.node()->requires_grad = true;
  auto [it, ok] = slots_.emplace(path, Slot{std::move(t), {}, {}});
  (void)ok;
  return it->second.tensor;
}

Tensor& ParamStore::get(const std::string& path) {
  auto it = slots_.find(path);
  if (it == slots_.end()) throw std::logic_error("ParamStore: no parameter " + path);
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& path) const {
  auto it = slots_.find(path);
  if (it == slots_.end()) throw std::logic_error("ParamStore: no parameter " + path);
  return it->second.tensor;
}

bool ParamStore::has(const std::string& path) const { return slots_.count(path) != 0; }

std::vector<std::string> ParamStore::paths() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [k, v] : slots_) out.push_back(k);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [k, slot] : slots_) {
    auto n = slot.tensor.node();
    n->grad.assign(n->values.size(), 0.0);
  }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [path, slot] : slots_) {
    auto n = slot.tensor.node();
    if (n->grad.size() != n->values.size())
      throw std::logic_error("adam_step: missing gradient for " + path);
    if (slot.m.empty()) {
      slot.m.assign(n->values.size(), 0.0);
      slot.v.assign(n->values.size(), 0.0);
    }
    for (std::size_t i = 0; i < n->values.size(); ++i) {
      const double g = n->grad[i];
      slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
      slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      n->values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

Tensor make_weight(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(stddev);
  return Tensor::from_values(shape, std::move(v), /*requires_grad=*/true);
}

Tensor make_zeros_param(const Shape& shape) { return Tensor::zeros(shape, true); }
Tensor make_ones_param(const Shape& shape) { return Tensor::full(shape, 1.0, true); }

void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps) {
  params.adam_step(lr, beta1, beta2, eps);
}

}  // namespace hmjnd
