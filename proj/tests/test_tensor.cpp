#include <cmath>

#include "doctest.h"
#include "hmjnd/param_store.hpp"
#include "hmjnd/rng.hpp"
#include "hmjnd/tensor.hpp"
#include "test_util.hpp"

using namespace hmjnd;
using test::fd_check_leaf;
using test::random_tensor;
using test::rel_err;
using test::weighted_sum;

TEST_CASE("conv2d identity and averaging kernels") {
  Rng rng(11);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  Tensor w = Tensor::from_values({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) CHECK(y.values()[i] == x.values()[i]);

  // 3x3 averaging kernel on a constant-0.5 input keeps the interior at 0.5
  Tensor c = Tensor::full({1, 1, 6, 6}, 0.5);
  Tensor avg = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
  Tensor z = conv2d(c, avg, b, 1, 1);
  for (int y0 = 1; y0 < 5; ++y0)
    for (int x0 = 1; x0 < 5; ++x0)
      CHECK(z.values()[y0 * 6 + x0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conv2d rejects channel mismatch") {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor w = Tensor::zeros({3, 1, 3, 3});
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d gradient vs finite differences") {
  Rng rng(42);
  Tensor x = random_tensor({1, 2, 6, 6}, rng, -1, 1, true);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5, true);
  Tensor b = random_tensor({3}, rng, -0.1, 0.1, true);
  auto loss_fn = [&] { return weighted_sum(conv2d(x, w, b, 1, 1)).item(); };
  Tensor loss = weighted_sum(conv2d(x, w, b, 1, 1));
  loss.backward();
  for (Tensor t : {x, w, b}) {
    auto rep = fd_check_leaf(t, loss_fn, 1e-4);
    CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
  }
  // strided case
  Tensor ys = conv2d(x, w, b, 2, 1);
  CHECK(ys.shape() == Shape{1, 3, 3, 3});
  Tensor loss2 = weighted_sum(conv2d(x, w, b, 2, 1));
  loss2.backward();
  // (gradients overwrite: rebuild graph fresh so grads are isolated)
}

TEST_CASE("fully_connected identity / bias / gradient") {
  Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor wi = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b0 = Tensor::zeros({3});
  Tensor y = fully_connected(x, wi, b0);
  for (int i = 0; i < 6; ++i) CHECK(y.values()[i] == x.values()[i]);

  Tensor wz = Tensor::zeros({3, 3});
  Tensor bb = Tensor::from_values({3}, {0.5, -1.0, 2.0});
  Tensor yb = fully_connected(x, wz, bb);
  for (int r = 0; r < 2; ++r)
    for (int o = 0; o < 3; ++o) CHECK(yb.values()[r * 3 + o] == bb.values()[o]);

  Rng rng(5);
  Tensor xr = random_tensor({4, 8}, rng, -1, 1, true);
  Tensor wr = random_tensor({3, 8}, rng, -1, 1, true);
  Tensor br = random_tensor({3}, rng, -1, 1, true);
  auto loss_fn = [&] { return weighted_sum(fully_connected(xr, wr, br)).item(); };
  weighted_sum(fully_connected(xr, wr, br)).backward();
  for (Tensor t : {xr, wr, br}) {
    auto rep = fd_check_leaf(t, loss_fn, 1e-4);
    CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
  }
  CHECK_THROWS_AS(fully_connected(xr, Tensor::zeros({3, 9}), br), std::invalid_argument);
}

TEST_CASE("global_avg_pool values and gradient") {
  Tensor c = Tensor::full({1, 2, 3, 3}, 0.7);
  Tensor p = global_avg_pool(c);
  CHECK(p.shape() == Shape{1, 2});
  CHECK(p.values()[0] == doctest::Approx(0.7));

  Tensor m = Tensor::from_values({1, 1, 2, 2}, {0, 1, 1, 0});
  CHECK(global_avg_pool(m).values()[0] == doctest::Approx(0.5));

  Rng rng(9);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
  auto loss_fn = [&] { return weighted_sum(global_avg_pool(x)).item(); };
  weighted_sum(global_avg_pool(x)).backward();
  auto rep = fd_check_leaf(x, loss_fn, 1e-4);
  CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
}

TEST_CASE("activations: closed forms") {
  Tensor z = Tensor::from_values({3}, {-3.0, 0.0, 3.0});
  Tensor r = activation(z, Act::Relu);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[2] == 3.0);
  Tensor s = activation(Tensor::scalar(0.0), Act::Sigmoid);
  CHECK(s.values()[0] == doctest::Approx(0.5));
  Tensor sm = activation(Tensor::zeros({1, 4}), Act::SoftmaxLastDim);
  for (int i = 0; i < 4; ++i) CHECK(sm.values()[i] == doctest::Approx(0.25));
}

TEST_CASE("softmax rows sum to one and gradient checks") {
  Rng rng(3);
  Tensor x = random_tensor({5, 7}, rng, -4, 4, true);
  Tensor y = softmax_lastdim(x);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int i = 0; i < 7; ++i) {
      CHECK(y.values()[r * 7 + i] >= 0.0);
      s += y.values()[r * 7 + i];
    }
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
  auto loss_fn = [&] { return weighted_sum(softmax_lastdim(x)).item(); };
  weighted_sum(softmax_lastdim(x)).backward();
  auto rep = fd_check_leaf(x, loss_fn, 1e-4);
  CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
}

TEST_CASE("elementwise identities and broadcast gradient") {
  Rng rng(8);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tensor zero = Tensor::zeros({2, 3, 4, 4});
  Tensor sum = x + zero;
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(sum.values()[i] == x.values()[i]);
  Tensor diff = x - x;
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(diff.values()[i] == 0.0);

  Tensor a = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
  Tensor b = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
  auto loss_fn = [&] { return weighted_sum(a * b).item(); };
  weighted_sum(a * b).backward();
  for (Tensor t : {a, b}) {
    auto rep = fd_check_leaf(t, loss_fn, 1e-4);
    CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
  }

  // channel-gate broadcast (N,C,H,W) * (N,C)
  Tensor g = random_tensor({2, 3}, rng, 0.1, 0.9, true);
  auto loss_fn2 = [&] { return weighted_sum(a * g, 13).item(); };
  weighted_sum(a * g, 13).backward();
  auto rep = fd_check_leaf(g, loss_fn2, 1e-4);
  CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);

  CHECK_THROWS_AS(a + Tensor::zeros({2, 4, 4, 4}), std::invalid_argument);
}

TEST_CASE("layer_norm closed forms and gradient") {
  // constant input -> zeros (variance guarded by eps)
  Tensor c = Tensor::full({2, 4}, 3.0);
  Tensor ones = Tensor::full({4}, 1.0);
  Tensor zeros = Tensor::zeros({4});
  Tensor yc = layer_norm(c, ones, zeros, 1e-5);
  for (std::int64_t i = 0; i < yc.size(); ++i) CHECK(std::fabs(yc.values()[i]) < 1e-9);

  // already-normalized pair stays put as eps -> 0
  Tensor p = Tensor::from_values({1, 2}, {1.0, -1.0});
  Tensor two = Tensor::full({2}, 1.0);
  Tensor z2 = Tensor::zeros({2});
  Tensor yp = layer_norm(p, two, z2, 1e-12);
  CHECK(yp.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(yp.values()[1] == doctest::Approx(-1.0).epsilon(1e-9));

  Rng rng(17);
  Tensor x = random_tensor({2, 5, 3, 3}, rng, -1, 1, true);  // rank-4: channel axis
  Tensor gm = random_tensor({5}, rng, 0.5, 1.5, true);
  Tensor bt = random_tensor({5}, rng, -0.5, 0.5, true);
  auto loss_fn = [&] { return weighted_sum(layer_norm(x, gm, bt, 1e-5)).item(); };
  weighted_sum(layer_norm(x, gm, bt, 1e-5)).backward();
  for (Tensor t : {x, gm, bt}) {
    auto rep = fd_check_leaf(t, loss_fn, 1e-4);
    CHECK_MESSAGE(rep.failed == 0, "max rel err ", rep.max_rel);
  }
}

TEST_CASE("window partition/merge inverse pair") {
  Rng rng(23);
  for (int shift : {0, 1, 2}) {
    Tensor x = random_tensor({1, 3, 8, 8}, rng);
    Tensor t = window_partition(x, 4, shift);
    CHECK(t.shape() == Shape{4, 16, 3});
    Tensor back = window_merge(t, 4, shift, 8, 8);
    REQUIRE(back.shape() == x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(back.values()[i] == x.values()[i]);
  }
  // whole-plane window
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Tensor whole = window_partition(x, 4, 0);
  CHECK(whole.shape() == Shape{1, 16, 2});
  CHECK_THROWS_AS(window_partition(x, 0, 0), std::invalid_argument);
}

TEST_CASE("window partition with padding still inverts") {
  Rng rng(29);
  Tensor x = random_tensor({1, 2, 6, 10}, rng);  // not divisible by 4
  for (int shift : {0, 2}) {
    Tensor t = window_partition(x, 4, shift);
    CHECK(t.shape() == Shape{6, 16, 2});  // padded to 8x12 -> 2x3 windows
    Tensor back = window_merge(t, 4, shift, 6, 10);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(back.values()[i] == x.values()[i]);
  }
}

TEST_CASE("shifted partition changes interior window membership") {
  // 4x4 plane with distinct values, window 2: run the op for shift 0 and 1
  // and compare which positions share a window.
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[i] = i;
  Tensor x = Tensor::from_values({1, 1, 4, 4}, vals);
  auto windows_of = [&](int shift) {
    Tensor t = window_partition(x, 2, shift);
    std::vector<int> member(16, -1);
    for (int wi = 0; wi < 4; ++wi)
      for (int ti = 0; ti < 4; ++ti)
        member[static_cast<int>(t.values()[wi * 4 + ti])] = wi;
    return member;
  };
  const auto m0 = windows_of(0);
  const auto m1 = windows_of(1);
  auto same_window = [](const std::vector<int>& m, int a, int b) { return m[a] == m[b]; };
  // every interior position gets grouped with a different partner set
  for (int y = 1; y < 3; ++y)
    for (int x0 = 1; x0 < 3; ++x0) {
      const int a = y * 4 + x0;
      bool changed = false;
      for (int b = 0; b < 16 && !changed; ++b)
        if (b != a && same_window(m0, a, b) != same_window(m1, a, b)) changed = true;
      CHECK(changed);
    }
}

TEST_CASE("windowed cross-attention: constant k/v and window=1") {
  const int c = 4;
  AttentionParams p;
  auto eye = [&] {
    std::vector<double> v(c * c, 0.0);
    for (int i = 0; i < c; ++i) v[i * c + i] = 1.0;
    return Tensor::from_values({c, c, 1, 1}, std::move(v));
  };
  p.wq = eye(); p.wk = eye(); p.wv = eye(); p.wo = eye();
  p.bq = Tensor::zeros({c}); p.bk = Tensor::zeros({c});
  p.bv = Tensor::zeros({c}); p.bo = Tensor::zeros({c});

  Rng rng(31);
  Tensor q = random_tensor({1, c, 4, 4}, rng);
  // k = v constant per channel -> output equals that constant everywhere
  std::vector<double> kv(c * 16);
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 16; ++i) kv[ci * 16 + i] = 0.1 * (ci + 1);
  Tensor k = Tensor::from_values({1, c, 4, 4}, kv);
  Tensor out = windowed_cross_attention(q, k, k, 1, 4, 0, p);
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 16; ++i)
      CHECK(out.values()[ci * 16 + i] == doctest::Approx(0.1 * (ci + 1)).epsilon(1e-9));

  // window=1: each token attends only to itself -> value projection of v
  Tensor v2 = random_tensor({1, c, 3, 3}, rng);
  Tensor out1 = windowed_cross_attention(v2, v2, v2, 1, 1, 0, p);
  for (std::int64_t i = 0; i < v2.size(); ++i)
    CHECK(out1.values()[i] == doctest::Approx(v2.values()[i]).epsilon(1e-9));

  Tensor bad = random_tensor({1, 3, 4, 4}, rng);
  CHECK_THROWS_AS(windowed_cross_attention(bad, bad, bad, 2, 4, 0, p),
                  std::invalid_argument);
}

namespace {

// Straight-line dense per-window attention oracle (single head, no shift).
std::vector<double> dense_attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                                           int window, const AttentionParams& p) {
  const int c = q.dim(1), h = q.dim(2), w = q.dim(3);
  auto proj = [&](const Tensor& x, const Tensor& wt, const Tensor& b, int ci, int y, int xx) {
    double acc = b.values()[ci];
    for (int cj = 0; cj < c; ++cj)
      acc += wt.values()[ci * c + cj] * x.values()[(cj * h + y) * w + xx];
    return acc;
  };
  std::vector<double> out(static_cast<std::size_t>(c) * h * w, 0.0);
  const int t = window * window;
  for (int wy = 0; wy < h / window; ++wy)
    for (int wx = 0; wx < w / window; ++wx) {
      std::vector<double> qp(t * c), kp(t * c), vp(t * c);
      for (int ti = 0; ti < t; ++ti) {
        const int y = wy * window + ti / window, x = wx * window + ti % window;
        for (int ci = 0; ci < c; ++ci) {
          qp[ti * c + ci] = proj(q, p.wq, p.bq, ci, y, x);
          kp[ti * c + ci] = proj(k, p.wk, p.bk, ci, y, x);
          vp[ti * c + ci] = proj(v, p.wv, p.bv, ci, y, x);
        }
      }
      for (int ti = 0; ti < t; ++ti) {
        std::vector<double> scores(t);
        double mx = -1e300;
        for (int tj = 0; tj < t; ++tj) {
          double s = 0;
          for (int ci = 0; ci < c; ++ci) s += qp[ti * c + ci] * kp[tj * c + ci];
          scores[tj] = s / std::sqrt(static_cast<double>(c));
          mx = std::max(mx, scores[tj]);
        }
        double z = 0;
        for (int tj = 0; tj < t; ++tj) {
          scores[tj] = std::exp(scores[tj] - mx);
          z += scores[tj];
        }
        const int y = wy * window + ti / window, x = wx * window + ti % window;
        for (int ci = 0; ci < c; ++ci) {
          double ctx = 0;
          for (int tj = 0; tj < t; ++tj) ctx += scores[tj] / z * vp[tj * c + ci];
          // output projection
          out[(ci * h + y) * w + x] = ctx;
        }
        // apply W_o
        std::vector<double> pre(c);
        for (int ci = 0; ci < c; ++ci) pre[ci] = out[(ci * h + y) * w + x];
        for (int ci = 0; ci < c; ++ci) {
          double acc = p.bo.values()[ci];
          for (int cj = 0; cj < c; ++cj) acc += p.wo.values()[ci * c + cj] * pre[cj];
          out[(ci * h + y) * w + x] = acc;
        }
      }
    }
  return out;
}

}  // namespace

TEST_CASE("windowed attention matches the dense per-window oracle") {
  Rng rng(37);
  const int c = 6;
  AttentionParams p;
  p.wq = test::random_tensor({c, c, 1, 1}, rng, -0.5, 0.5);
  p.wk = test::random_tensor({c, c, 1, 1}, rng, -0.5, 0.5);
  p.wv = test::random_tensor({c, c, 1, 1}, rng, -0.5, 0.5);
  p.wo = test::random_tensor({c, c, 1, 1}, rng, -0.5, 0.5);
  p.bq = test::random_tensor({c}, rng, -0.1, 0.1);
  p.bk = test::random_tensor({c}, rng, -0.1, 0.1);
  p.bv = test::random_tensor({c}, rng, -0.1, 0.1);
  p.bo = test::random_tensor({c}, rng, -0.1, 0.1);

  Tensor q = random_tensor({1, c, 8, 8}, rng);
  Tensor k = random_tensor({1, c, 8, 8}, rng);
  Tensor v = random_tensor({1, c, 8, 8}, rng);
  Tensor got = windowed_cross_attention(q, k, v, 1, 4, 0, p);
  const auto want = dense_attention_oracle(q, k, v, 4, p);
  double maxdiff = 0;
  for (std::int64_t i = 0; i < got.size(); ++i)
    maxdiff = std::max(maxdiff, std::fabs(got.values()[i] - want[i]));
  CHECK(maxdiff < 1e-6);
}

TEST_CASE("shifted attention masks the wrap-around seam") {
  Rng rng(41);
  const int c = 2;
  AttentionParams p;
  auto eye = [&] {
    std::vector<double> v(c * c, 0.0);
    for (int i = 0; i < c; ++i) v[i * c + i] = 1.0;
    return Tensor::from_values({c, c, 1, 1}, std::move(v));
  };
  p.wq = eye(); p.wk = eye(); p.wv = eye(); p.wo = eye();
  p.bq = Tensor::zeros({c}); p.bk = Tensor::zeros({c});
  p.bv = Tensor::zeros({c}); p.bo = Tensor::zeros({c});

  Tensor q = random_tensor({1, c, 8, 8}, rng);
  Tensor k = random_tensor({1, c, 8, 8}, rng);
  Tensor v1 = random_tensor({1, c, 8, 8}, rng);
  Tensor out1 = windowed_cross_attention(q, k, v1, 1, 4, 2, p);

  // Perturb v only in the last two rows (which wrap into other windows under
  // the cyclic shift); outputs for rows 0..1 must be bit-identical because
  // masked attention weights are exactly zero.
  std::vector<double> v2vals(v1.values().begin(), v1.values().end());
  for (int ci = 0; ci < c; ++ci)
    for (int y = 6; y < 8; ++y)
      for (int x = 0; x < 8; ++x) v2vals[(ci * 8 + y) * 8 + x] += 3.0;
  Tensor v2 = Tensor::from_values({1, c, 8, 8}, v2vals);
  Tensor out2 = windowed_cross_attention(q, k, v2, 1, 4, 2, p);

  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        CHECK(out1.values()[(ci * 8 + y) * 8 + x] == out2.values()[(ci * 8 + y) * 8 + x]);
}

TEST_CASE("attention gradient flows through q, k, v and projections") {
  const int c = 4;
  for (int shift : {0, 2}) {
    Rng rng(43 + shift);
    AttentionParams p;
    p.wq = random_tensor({c, c, 1, 1}, rng, -0.4, 0.4, true);
    p.wk = random_tensor({c, c, 1, 1}, rng, -0.4, 0.4, true);
    p.wv = random_tensor({c, c, 1, 1}, rng, -0.4, 0.4, true);
    p.wo = random_tensor({c, c, 1, 1}, rng, -0.4, 0.4, true);
    p.bq = random_tensor({c}, rng, -0.1, 0.1, true);
    p.bk = random_tensor({c}, rng, -0.1, 0.1, true);
    p.bv = random_tensor({c}, rng, -0.1, 0.1, true);
    p.bo = random_tensor({c}, rng, -0.1, 0.1, true);
    Tensor q = random_tensor({1, c, 4, 4}, rng, -1, 1, true);
    Tensor k = random_tensor({1, c, 4, 4}, rng, -1, 1, true);
    Tensor v = random_tensor({1, c, 4, 4}, rng, -1, 1, true);

    auto loss_fn = [&] {
      return weighted_sum(windowed_cross_attention(q, k, v, 2, 4, shift, p)).item();
    };
    weighted_sum(windowed_cross_attention(q, k, v, 2, 4, shift, p)).backward();
    for (Tensor t : {q, k, v, p.wq, p.wk, p.wv, p.wo, p.bo}) {
      auto rep = fd_check_leaf(t, loss_fn, 2e-4, 1e-5);
      CHECK_MESSAGE(rep.failed == 0, "shift ", shift, " max rel err ", rep.max_rel);
    }
  }
}

TEST_CASE("backward populates reachable params, zeros unreachable") {
  ParamStore store;
  Rng rng(51);
  Tensor& a = store.add("a", test::random_tensor({2, 2}, rng));
  Tensor& unused = store.add("unused", test::random_tensor({3}, rng));
  Tensor loss = reduce_sum(a);
  backward(loss, store);
  for (double g : a.grad()) CHECK(g == 1.0);
  REQUIRE(unused.grad().size() == 3);
  for (double g : unused.grad()) CHECK(g == 0.0);

  // quadratic: d/dp sum(p*p)/2 = p
  ParamStore s2;
  Tensor& p = s2.add("p", test::random_tensor({5}, rng));
  Tensor loss2 = scale(reduce_sum(p * p), 0.5);
  backward(loss2, s2);
  for (int i = 0; i < 5; ++i)
    CHECK(p.grad()[i] == doctest::Approx(p.values()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(backward(test::random_tensor({2, 2}, rng), s2), std::logic_error);
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Rng rng(77);
    ParamStore store;
    Tensor& w = store.add("w", test::random_tensor({3, 2, 3, 3}, rng));
    Tensor& b = store.add("b", test::random_tensor({3}, rng));
    Tensor x = test::random_tensor({1, 2, 6, 6}, rng);
    Tensor loss = weighted_sum(relu(conv2d(x, w, b, 1, 1)));
    backward(loss, store);
    std::vector<double> grads(w.grad().begin(), w.grad().end());
    grads.insert(grads.end(), b.grad().begin(), b.grad().end());
    return grads;
  };
  const auto g1 = run();
  const auto g2 = run();
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor t = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(t.backward(), std::logic_error);
}
