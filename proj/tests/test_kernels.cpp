#include <cmath>
#include <vector>

#include "doctest.h"
#include "hmjnd/kernels.hpp"
#include "hmjnd/rng.hpp"
#include "test_util.hpp"

using namespace hmjnd;
namespace k = hmjnd::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

void expect_bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

}  // namespace

TEST_CASE("conv2d kernels: OpenMP output is bit-identical to the serial reference") {
  Rng rng(101);
  const auto d = k::conv_dims(2, 3, 13, 11, 4, 3, 1, 1);
  const auto x = rand_vec(static_cast<std::size_t>(d.n) * d.cin * d.h * d.w, rng);
  const auto w = rand_vec(static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k, rng);
  const auto b = rand_vec(d.cout, rng);
  std::vector<double> y1(static_cast<std::size_t>(d.n) * d.cout * d.oh * d.ow), y2 = y1;
  k::serial::conv2d_forward(x.data(), w.data(), b.data(), y1.data(), d);
  k::par::conv2d_forward(x.data(), w.data(), b.data(), y2.data(), d);
  expect_bitwise_equal(y1, y2);

  const auto dy = rand_vec(y1.size(), rng);
  std::vector<double> dx1(x.size()), dx2(x.size());
  k::serial::conv2d_backward_input(dy.data(), w.data(), dx1.data(), d);
  k::par::conv2d_backward_input(dy.data(), w.data(), dx2.data(), d);
  expect_bitwise_equal(dx1, dx2);

  std::vector<double> dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
  k::serial::conv2d_backward_weight(dy.data(), x.data(), dw1.data(), db1.data(), d);
  k::par::conv2d_backward_weight(dy.data(), x.data(), dw2.data(), db2.data(), d);
  expect_bitwise_equal(dw1, dw2);
  expect_bitwise_equal(db1, db2);
}

TEST_CASE("bmm and softmax kernels: serial and parallel agree bitwise") {
  Rng rng(103);
  const int batches = 6, m = 9, kd = 7, n = 8;
  const auto a = rand_vec(static_cast<std::size_t>(batches) * m * kd, rng);
  const auto bt = rand_vec(static_cast<std::size_t>(batches) * kd * n, rng);
  for (bool tr : {false, true}) {
    std::vector<double> c1(static_cast<std::size_t>(batches) * m * n), c2 = c1;
    k::serial::bmm(a.data(), bt.data(), c1.data(), batches, m, kd, n, tr);
    k::par::bmm(a.data(), bt.data(), c2.data(), batches, m, kd, n, tr);
    expect_bitwise_equal(c1, c2);
  }

  const auto x = rand_vec(40 * 16, rng, -5, 5);
  std::vector<double> s1(x.size()), s2(x.size());
  k::serial::softmax_rows(x.data(), s1.data(), 40, 16);
  k::par::softmax_rows(x.data(), s2.data(), 40, 16);
  expect_bitwise_equal(s1, s2);

  const auto dy = rand_vec(x.size(), rng);
  std::vector<double> d1(x.size()), d2(x.size());
  k::serial::softmax_rows_backward(s1.data(), dy.data(), d1.data(), 40, 16);
  k::par::softmax_rows_backward(s1.data(), dy.data(), d2.data(), 40, 16);
  expect_bitwise_equal(d1, d2);
}

TEST_CASE("dct8 kernels: parallel matches serial; orthonormal round trip") {
  Rng rng(107);
  const std::int64_t nblocks = 37;
  const auto x = rand_vec(nblocks * 64, rng, 0, 255);
  std::vector<double> c1(x.size()), c2(x.size()), back(x.size());
  k::serial::dct8_blocks(x.data(), c1.data(), nblocks, false);
  k::par::dct8_blocks(x.data(), c2.data(), nblocks, false);
  expect_bitwise_equal(c1, c2);
  k::serial::dct8_blocks(c1.data(), back.data(), nblocks, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(back[i] - x[i]) < 1e-9);
}

TEST_CASE("ssim kernel: separable parallel path tracks the windowed reference") {
  Rng rng(109);
  const int h = 40, w = 52;
  auto a = rand_vec(static_cast<std::size_t>(h) * w, rng, 0, 255);
  auto b = a;
  for (double& v : b) v = std::clamp(v + rng.uniform(-12.0, 12.0), 0.0, 255.0);
  const double c1 = 6.5025, c2 = 58.5225;
  double s1 = 0, cs1 = 0, s2 = 0, cs2 = 0;
  k::serial::ssim_stats(a.data(), b.data(), h, w, c1, c2, &s1, &cs1);
  k::par::ssim_stats(a.data(), b.data(), h, w, c1, c2, &s2, &cs2);
  CHECK(test::rel_err(s1, s2) < 1e-10);
  CHECK(test::rel_err(cs1, cs2) < 1e-10);
}

TEST_CASE("jnd preprocess kernel: parallel matches serial including counters") {
  Rng rng(113);
  const int h = 29, w = 37;  // partial blocks on both axes
  const auto luma = rand_vec(static_cast<std::size_t>(h) * w, rng, 0, 255);
  const auto vt = rand_vec(static_cast<std::size_t>(h) * w, rng, 0, 12);
  std::vector<double> o1(luma.size()), o2(luma.size());
  long c1[3] = {0, 0, 0}, c2[3] = {0, 0, 0};
  k::serial::jnd_preprocess(luma.data(), vt.data(), o1.data(), h, w, c1);
  k::par::jnd_preprocess(luma.data(), vt.data(), o2.data(), h, w, c2);
  expect_bitwise_equal(o1, o2);
  for (int i = 0; i < 3; ++i) CHECK(c1[i] == c2[i]);
  CHECK(c1[0] + c1[1] + c1[2] == static_cast<long>(h) * w);
}

TEST_CASE("dispatch respects the parallel toggle") {
  CHECK(k::parallel_enabled());
  k::set_parallel_enabled(false);
  CHECK_FALSE(k::parallel_enabled());
  k::set_parallel_enabled(true);
}
