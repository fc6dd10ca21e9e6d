#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"
#include "momentnav/gradsuite.hpp"
#include "momentnav/mathcore.hpp"

using namespace momentnav;

namespace {

// Loop-based reference for a Linear/ReLU stack.
Vec naive_fc(const FcNet& net, const Vec& x) {
  Vec cur = x;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Linear& lin = net.layers()[l];
    Vec next(lin.out_dim(), 0.0);
    for (std::size_t r = 0; r < lin.out_dim(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < lin.in_dim(); ++c) acc += lin.weight.value(r, c) * cur[c];
      next[r] = acc + lin.bias.value[r];
    }
    if (l + 1 < net.depth())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur = next;
  }
  return cur;
}

Vec random_vec(Rng& rng, std::size_t n) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("momentnav_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Fc, IdentitySingleLayer) {
  FcNet net("fc", {2, 2});
  auto& lin = net.layers()[0];
  lin.weight.value.fill(0.0);
  lin.weight.value(0, 0) = 1.0;
  lin.weight.value(1, 1) = 1.0;
  lin.bias.value.fill(0.0);
  Vec y = net.forward(Vec{1.0, 2.0});
  EXPECT_EQ(y, (Vec{1.0, 2.0}));
}

TEST(Fc, ZeroWeightsGiveBias) {
  FcNet net("fc", {3, 2});
  auto& lin = net.layers()[0];
  lin.weight.value.fill(0.0);
  lin.bias.value[0] = 0.25;
  lin.bias.value[1] = -1.5;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(net.forward(random_vec(rng, 3)), (Vec{0.25, -1.5}));
}

TEST(Fc, MatchesNaiveMatmul) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    FcNet net("fc", {7, 9, 4});
    net.init(rng);
    for (auto& l : net.layers())
      for (double& b : l.bias.value.data()) b = rng.normal(0.0, 0.3);
    Vec x = random_vec(rng, 7);
    Vec got = net.forward(x);
    Vec want = naive_fc(net, x);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Fc, DimensionMismatch) {
  FcNet net("fc", {3, 2});
  EXPECT_THROW(net.forward(Vec{1.0, 2.0}), ConfigError);
}

TEST(Fc, BackwardBeforeForward) {
  FcNet net("fc", {3, 2});
  FcCache cache;
  EXPECT_THROW(net.backward(cache, Vec{1.0, 1.0}), StateError);
}

TEST(Fc, GradcheckRandom) {
  Rng rng(5);
  FcNet net("fc", {5, 6, 3});
  net.init(rng);
  for (auto& l : net.layers())
    for (double& b : l.bias.value.data()) b = rng.normal(0.0, 0.2);
  Vec x = random_vec(rng, 5);
  Vec c = random_vec(rng, 3);
  ParamRefs ps;
  net.collect(ps);
  auto loss = [&](bool grad) {
    FcCache cache;
    Vec y = net.forward(x, &cache);
    if (grad) net.backward(cache, c);
    return dot(c, y);
  };
  EXPECT_LT(gradcheck(loss, ps).max_rel_error, 1e-4);
}

TEST(Gru, ZeroWeightsHalveState) {
  GruCell cell("gru", 3, 4);
  ParamRefs ps;
  cell.collect(ps);
  for (Param* p : ps) p->value.fill(0.0);
  Vec h{1.0, -2.0, 0.5, 4.0};
  Vec out = cell.forward(Vec{0.3, 0.1, -0.7}, h);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
}

TEST(Gru, DimensionMismatch) {
  GruCell cell("gru", 3, 4);
  EXPECT_THROW(cell.forward(Vec{1.0, 2.0}, Vec(4, 0.0)), ConfigError);
  EXPECT_THROW(cell.forward(Vec(3, 0.0), Vec(2, 0.0)), ConfigError);
}

TEST(Gru, GradcheckParamsAndInputs) {
  Rng rng(9);
  GruCell cell("gru", 4, 5);
  cell.init(rng);
  Param x("x", Tensor({4}, random_vec(rng, 4)));
  Param h("h", Tensor({5}, random_vec(rng, 5)));
  Vec c = random_vec(rng, 5);
  ParamRefs ps;
  cell.collect(ps);
  ps.push_back(&x);
  ps.push_back(&h);
  auto loss = [&](bool grad) {
    GruCache cache;
    Vec xs(x.value.data().begin(), x.value.data().end());
    Vec hs(h.value.data().begin(), h.value.data().end());
    Vec y = cell.forward(xs, hs, &cache);
    if (grad) {
      GruGrads g = cell.backward(cache, c);
      for (std::size_t i = 0; i < g.dx.size(); ++i) x.grad[i] += g.dx[i];
      for (std::size_t i = 0; i < g.dh.size(); ++i) h.grad[i] += g.dh[i];
    }
    return dot(c, y);
  };
  EXPECT_LT(gradcheck(loss, ps).max_rel_error, 1e-4);
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine(Vec{3.0, -1.0, 2.0}, Vec{3.0, -1.0, 2.0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine(Vec{1.0, 0.0}, Vec{0.0, 1.0}), 0.0);
  EXPECT_NEAR(cosine(Vec{1.0, 0.0}, Vec{1.0, 1.0}), 0.70710678118654752, 1e-15);
}

TEST(Cosine, ZeroNormConvention) {
  EXPECT_EQ(cosine(Vec{0.0, 0.0}, Vec{1.0, 1.0}), 0.0);
  auto [ga, gb] = cosine_backward(Vec{0.0, 0.0}, Vec{1.0, 1.0}, 1.0);
  EXPECT_EQ(ga, (Vec{0.0, 0.0}));
  EXPECT_EQ(gb, (Vec{0.0, 0.0}));
}

TEST(Cosine, Mismatch) { EXPECT_THROW(cosine(Vec{1.0}, Vec{1.0, 2.0}), ConfigError); }

TEST(Softmax, Uniform) {
  Vec p = softmax(Vec{0.0, 0.0, 0.0});
  for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, Stable) {
  Vec p = softmax(Vec{1000.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_TRUE(std::isfinite(p[0]));
}

TEST(Softmax, SumAndShift) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    Vec s = random_vec(rng, 1 + rng.uniform_int(12));
    Vec p = softmax(s);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    Vec shifted = s;
    for (double& v : shifted) v += 17.25;
    Vec q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Softmax, Empty) { EXPECT_THROW(softmax(Vec{}), ArgumentError); }

TEST(Sgd, Examples) {
  Param p("w", Tensor({1}, {1.0}));
  p.grad[0] = 0.5;
  Param* ps[] = {&p};
  sgd_step(ps, 0.1);
  EXPECT_DOUBLE_EQ(p.value[0], 0.95);
  EXPECT_EQ(p.grad[0], 0.0);  // zeroed after the step

  sgd_step(ps, 0.1);
  EXPECT_DOUBLE_EQ(p.value[0], 0.95);
}

TEST(Sgd, ClipScalesByGlobalNorm) {
  Param a("a", Tensor({2}, {0.0, 0.0}));
  Param b("b", Tensor({1}, {0.0}));
  a.grad[0] = 6.0;
  a.grad[1] = 0.0;
  b.grad[0] = 8.0;  // global norm 10
  Param* ps[] = {&a, &b};
  double n = sgd_step(ps, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(n, 10.0);
  EXPECT_NEAR(a.value[0], -0.6, 1e-15);
  EXPECT_NEAR(b.value[0], -0.8, 1e-15);
}

TEST(Sgd, NonFiniteNamesParam) {
  Param p("encoder.weight", Tensor({2}, {1.0, 2.0}));
  p.grad[1] = std::nan("");
  Param* ps[] = {&p};
  try {
    sgd_step(ps, 0.1);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
  }
}

TEST(Gradcheck, Square) {
  Param x("x", Tensor({1}, {3.0}));
  Param* ps[] = {&x};
  auto loss = [&](bool grad) {
    if (grad) x.grad[0] += 2.0 * x.value[0];
    return x.value[0] * x.value[0];
  };
  GradcheckReport r = gradcheck(loss, ps);
  EXPECT_DOUBLE_EQ(r.worst_analytic, 6.0);
  EXPECT_NEAR(r.worst_numeric, 6.0, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(Gradcheck, Linear) {
  Param w("w", Tensor({4}, {0.5, -1.0, 2.0, 0.25}));
  const Vec c{1.5, -2.0, 0.75, 3.0};
  Param* ps[] = {&w};
  auto loss = [&](bool grad) {
    if (grad)
      for (std::size_t i = 0; i < 4; ++i) w.grad[i] += c[i];
    return dot(c, w.value.data());
  };
  GradcheckReport r = gradcheck(loss, ps);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_LT(r.max_rel_error_fixed_floor, 1e-9);
  EXPECT_EQ(r.entries_checked, 4u);
}

TEST(Gradcheck, DetectsWrongGradient) {
  Param x("x", Tensor({1}, {3.0}));
  Param* ps[] = {&x};
  auto loss = [&](bool grad) {
    if (grad) x.grad[0] += 3.0 * x.value[0];
    return x.value[0] * x.value[0];
  };
  EXPECT_GT(gradcheck(loss, ps).max_rel_error, 0.1);
}

TEST(Gradcheck, RelErrorFloor) {
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(1.0, 3.0), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(0.0, 1e-9, 1e-8), 0.1);
}

TEST(Gradcheck, SuiteSmall) {
  GradSuiteReport r = run_gradcheck_suite(20, 3);
  EXPECT_EQ(r.cases.size(), 20u);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(4);
  Param a("a", Tensor({3, 2}, random_vec(rng, 6)));
  Param b("b", Tensor({5}, random_vec(rng, 5)));
  b.value[0] = 0.1;  // not exactly representable
  b.value[1] = -0.0;
  b.value[2] = 1e-310;  // subnormal
  auto dir = temp_dir("ckpt");
  const Param* cps[] = {&a, &b};
  save_checkpoint(dir / "m.ckpt", cps, json{{"note", "x"}});

  Param a2("a", Tensor({3, 2}));
  Param b2("b", Tensor({5}));
  Param* ps[] = {&b2, &a2};
  json meta = load_checkpoint(dir / "m.ckpt", ps);
  EXPECT_EQ(meta["note"], "x");
  for (std::size_t i = 0; i < a.value.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.value[i]), std::bit_cast<std::uint64_t>(a2.value[i]));
  for (std::size_t i = 0; i < b.value.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(b.value[i]), std::bit_cast<std::uint64_t>(b2.value[i]));

  // the blob is raw little-endian float64, params in order
  std::ifstream in(dir / "m.ckpt.bin", std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(blob.size(), 11u * 8u);
}

TEST(Checkpoint, ShapeMismatch) {
  Param a("a", Tensor({2}, {1.0, 2.0}));
  auto dir = temp_dir("ckpt2");
  const Param* cps[] = {&a};
  save_checkpoint(dir / "m.ckpt", cps);
  Param wrong("a", Tensor({3}));
  Param* ps[] = {&wrong};
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", ps), ValidationError);
  Param missing("zz", Tensor({2}));
  Param* ps2[] = {&missing};
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", ps2), ValidationError);
}

TEST(Rng, Deterministic) {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
}

TEST(Rng, UniformIntRange) {
  Rng r(8);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.uniform_int(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}
