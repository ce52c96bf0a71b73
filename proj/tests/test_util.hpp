#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hmjnd/rng.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd::test {

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

struct FdReport {
  int checked = 0;
  int failed = 0;
  double max_rel = 0.0;
  bool ok(double frac = 1.0) const {
    return checked > 0 && failed <= static_cast<int>((1.0 - frac) * checked);
  }
};

/// Central-difference check of d loss / d leaf against leaf.grad(). loss_fn
/// must rebuild the graph from the (mutated) leaf values and return the loss
/// value. Call after running the analytic backward once.
inline FdReport fd_check_leaf(Tensor leaf, const std::function<double()>& loss_fn,
                              double tol, double h = 1e-4, int max_coords = 0,
                              std::uint64_t sample_seed = 1) {
  FdReport rep;
  auto vals = leaf.mutable_values();
  const auto analytic = leaf.grad();
  if (analytic.empty()) return rep;  // no gradient reached this leaf

  std::vector<std::int64_t> coords;
  if (max_coords > 0 && static_cast<std::int64_t>(vals.size()) > max_coords) {
    Rng rng(derive_seed(sample_seed, leaf.node_id()));
    for (int i = 0; i < max_coords; ++i)
      coords.push_back(rng.uniform_int(0, static_cast<int>(vals.size()) - 1));
  } else {
    coords.resize(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
  }

  for (auto i : coords) {
    const double keep = vals[i];
    vals[i] = keep + h;
    const double up = loss_fn();
    vals[i] = keep - h;
    const double dn = loss_fn();
    vals[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double err = rel_err(analytic[i], fd);
    ++rep.checked;
    rep.max_rel = std::max(rep.max_rel, err);
    if (err > tol) ++rep.failed;
  }
  return rep;
}

/// Weighted-sum scalarizer so gradient checks see every output coordinate
/// with a distinct weight.
inline Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<double> w(t.size());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return reduce_sum(t * Tensor::from_values(t.shape(), std::move(w)));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    dir_ = std::filesystem::temp_directory_path() /
           ("hmjnd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? dir_.string() : (dir_ / sub).string();
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace hmjnd::test
