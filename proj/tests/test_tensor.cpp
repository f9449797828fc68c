#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "audron/checkpoint.hpp"
#include "audron/common.hpp"
#include "audron/gradcheck.hpp"
#include "audron/rng.hpp"
#include "audron/tensor.hpp"

using namespace audron;

namespace {

using DT = Tensor<double>;

DT rand_tensor(Shape shape, Rng& rng, bool rg = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return DT::from(std::move(shape), std::move(v), rg);
}

// Random values kept away from zero (relu/maxpool kinks).
DT rand_tensor_off_kink(Shape shape, Rng& rng, bool rg = true) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) {
    x = rng.uniform(0.15, 1.0);
    if (rng.next_double() < 0.5) x = -x;
  }
  return DT::from(std::move(shape), std::move(v), rg);
}

// Loss: sum(y * c) with a probe rebuilt deterministically from the seed, so
// repeated loss evaluations see the same surface but gradients stay
// element-wise distinguishable.
DT probe_loss(DT y, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(static_cast<size_t>(y.numel()));
  for (auto& x : c) x = rng.uniform(-1.0, 1.0);
  return sum_all(mul(y, DT::from(y.shape(), std::move(c))));
}

void expect_pass(const GradCheckReport& report, double tol = 1e-4) {
  INFO(report.summary());
  CHECK(report.pass(tol));
}

}  // namespace

// ---------------------------------------------------------------------------
// forward examples
// ---------------------------------------------------------------------------

TEST_CASE("linear with identity weight and zero bias is the identity") {
  DT x = DT::from({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 4.0});
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  DT w = DT::from({3, 3}, std::move(eye));
  DT b = DT::zeros({3});
  DT y = linear(x, w, b);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv1d with a single-tap unit kernel is the identity") {
  Rng rng(1);
  DT x = rand_tensor({2, 3, 5}, rng, false);
  DT w = DT::zeros({3, 3, 1});
  // diagonal single-tap kernel: out channel c reads in channel c
  for (int64_t c = 0; c < 3; ++c) w.data()[c * 3 + c] = 1.0;
  DT y = conv1d(x, w, DT::zeros({3}), 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("softmax of zeros is uniform; rows sum to 1 and stay positive") {
  DT z = DT::zeros({1, 4});
  DT y = softmax(z, 1);
  for (int64_t i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(2);
  DT x = rand_tensor({5, 7}, rng, false, -30.0, 30.0);
  DT s = softmax(x, 1);
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < 7; ++c) {
      const double v = s.data()[r * 7 + c];
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("backward of sum and of the half-quadratic") {
  DT x = DT::from({3}, {1.0, -2.0, 3.0}, true);
  {
    Graph<double> g;
    Graph<double>::Scope scope(g);
    g.backward(sum_all(x));
    const auto* grad = x.grad();
    REQUIRE(grad != nullptr);
    for (double v : *grad) CHECK(v == 1.0);
  }
  x.zero_grad();
  {
    Graph<double> g;
    Graph<double>::Scope scope(g);
    g.backward(scale(sum_all(mul(x, x)), 0.5));
    const auto* grad = x.grad();
    REQUIRE(grad != nullptr);
    CHECK((*grad)[0] == doctest::Approx(1.0));
    CHECK((*grad)[1] == doctest::Approx(-2.0));
    CHECK((*grad)[2] == doctest::Approx(3.0));
  }
}

TEST_CASE("two-layer tanh net matches finite differences") {
  Rng rng(3);
  DT x = rand_tensor({4, 3}, rng, false);
  DT w1 = rand_tensor({5, 3}, rng);
  DT b1 = rand_tensor({5}, rng);
  DT w2 = rand_tensor({2, 5}, rng);
  DT b2 = rand_tensor({2}, rng);
  Rng probe_rng(99);
  std::vector<double> c(8);
  for (auto& v : c) v = probe_rng.uniform(-1.0, 1.0);
  DT cw = DT::from({4, 2}, std::move(c));

  auto loss = [&]() {
    return sum_all(mul(tanh(linear(tanh(linear(x, w1, b1)), w2, b2)), cw));
  };
  const auto report = gradcheck<double>(
      loss, {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}}, 1e-5);
  expect_pass(report, 1e-4);
}

// ---------------------------------------------------------------------------
// per-op gradient checks, 5 seeds, small shapes
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck: elementwise, matmul, linear") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);

    DT a = rand_tensor({2, 3, 4}, rng);
    DT b = rand_tensor({2, 3, 4}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(add(a, b), seed * 1000 + 1); },
                                  {{"a", a}, {"b", b}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(mul(a, b), seed * 1000 + 2); },
                                  {{"a", a}, {"b", b}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(scale(a, 1.7), seed * 1000 + 3); },
                                  {{"a", a}}));

    DT k = rand_tensor_off_kink({3, 5}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(relu(k), seed * 1000 + 4); }, {{"k", k}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(tanh(k), seed * 1000 + 5); }, {{"k", k}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(sigmoid(k), seed * 1000 + 6); }, {{"k", k}}));

    DT m1 = rand_tensor({3, 4}, rng);
    DT m2 = rand_tensor({4, 5}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(matmul(m1, m2), seed * 1000 + 7); },
                                  {{"m1", m1}, {"m2", m2}}));

    DT x = rand_tensor({3, 5}, rng);
    DT w = rand_tensor({4, 5}, rng);
    DT bias = rand_tensor({4}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(linear(x, w, bias), seed * 1000 + 8); },
                                  {{"x", x}, {"w", w}, {"b", bias}}));
  }
}

TEST_CASE("gradcheck: convolutions") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 11);

    DT x1 = rand_tensor({2, 3, 6}, rng);
    DT w1 = rand_tensor({4, 3, 3}, rng);
    DT b1 = rand_tensor({4}, rng);
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(conv1d(x1, w1, b1, 1, 1), seed * 1000 + 9); },
        {{"x", x1}, {"w", w1}, {"b", b1}}));
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(conv1d(x1, w1, b1, 2, 2), seed * 1000 + 10); },
        {{"x", x1}, {"w", w1}, {"b", b1}}));
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(conv1d(x1, w1, b1, 1, 1, PadMode::Replicate), seed * 1000 + 11); },
        {{"x", x1}, {"w", w1}, {"b", b1}}));

    DT x2 = rand_tensor({2, 2, 5, 6}, rng);
    DT w2 = rand_tensor({3, 2, 3, 3}, rng);
    DT b2 = rand_tensor({3}, rng);
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(conv2d(x2, w2, b2, 1, 1), seed * 1000 + 12); },
        {{"x", x2}, {"w", w2}, {"b", b2}}));
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(conv2d(x2, w2, b2, 2, 1), seed * 1000 + 13); },
        {{"x", x2}, {"w", w2}, {"b", b2}}));
  }
}

TEST_CASE("gradcheck: pooling, upsampling, shape ops") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 17);

    DT xp = rand_tensor({2, 3, 5, 5}, rng);  // odd dims exercise pad-right
    expect_pass(gradcheck<double>([&]() { return probe_loss(maxpool2d(xp), seed * 1000 + 14); },
                                  {{"x", xp}}));

    DT xa = rand_tensor({2, 3, 6}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(avgpool1d(xa, 3), seed * 1000 + 15); },
                                  {{"x", xa}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(upsample1d_nearest(xa, 3), seed * 1000 + 16); },
                                  {{"x", xa}}));
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(reshape(xa, {6, 6}), seed * 1000 + 17); }, {{"x", xa}}));

    DT c1 = rand_tensor({2, 3, 4}, rng);
    DT c2 = rand_tensor({2, 2, 4}, rng);
    DT c3 = rand_tensor({2, 1, 4}, rng);
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(concat<double>({c1, c2, c3}, 1), seed * 1000 + 18); },
        {{"c1", c1}, {"c2", c2}, {"c3", c3}}));

    DT sp = rand_tensor({2, 6, 3}, rng);
    expect_pass(gradcheck<double>(
        [&]() {
          auto parts = split(sp, 1, {2, 3, 1});
          return add(probe_loss(parts[0], seed * 1000 + 19),
                     add(probe_loss(parts[1], seed * 1000 + 20), probe_loss(parts[2], seed * 1000 + 21)));
        },
        {{"x", sp}}));

    DT rm = rand_tensor({3, 4, 5}, rng);
    for (int axis = 0; axis < 3; ++axis)
      expect_pass(gradcheck<double>(
          [&]() { return probe_loss(reduce_mean(rm, axis), seed * 1000 + 22); }, {{"x", rm}}));
    expect_pass(gradcheck<double>([&]() { return sum_all(rm); }, {{"x", rm}}));
  }
}

TEST_CASE("gradcheck: softmax, batchnorm, dropout, losses") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 23);

    DT sm = rand_tensor({3, 5}, rng, true, -2.0, 2.0);
    expect_pass(gradcheck<double>([&]() { return probe_loss(softmax(sm, 1), seed * 1000 + 23); },
                                  {{"x", sm}}));
    expect_pass(gradcheck<double>([&]() { return probe_loss(softmax(sm, 0), seed * 1000 + 24); },
                                  {{"x", sm}}));

    DT bx = rand_tensor({4, 5}, rng);
    DT gamma = rand_tensor({5}, rng, true, 0.5, 1.5);
    DT beta = rand_tensor({5}, rng);
    expect_pass(gradcheck<double>(
        [&]() {
          DT rm = DT::zeros({5});
          DT rv = DT::full({5}, 1.0);
          return probe_loss(batchnorm(bx, gamma, beta, rm, rv, /*train=*/true), seed * 1000 + 25);
        },
        {{"x", bx}, {"gamma", gamma}, {"beta", beta}}));
    // eval path (running statistics)
    DT rm_fixed = rand_tensor({5}, rng, false, -0.2, 0.2);
    DT rv_fixed = rand_tensor({5}, rng, false, 0.5, 1.5);
    expect_pass(gradcheck<double>(
        [&]() {
          DT rm = DT::from(rm_fixed.shape(), rm_fixed.values());
          DT rv = DT::from(rv_fixed.shape(), rv_fixed.values());
          return probe_loss(batchnorm(bx, gamma, beta, rm, rv, /*train=*/false), seed * 1000 + 26);
        },
        {{"x", bx}, {"gamma", gamma}, {"beta", beta}}));

    DT dx = rand_tensor({4, 6}, rng);
    expect_pass(gradcheck<double>(
        [&]() { return probe_loss(dropout(dx, 0.3, true, 777), seed * 1000 + 27); }, {{"x", dx}}));

    DT logits = rand_tensor({4, 5}, rng, true, -2.0, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.uniform_int(5)));
    expect_pass(gradcheck<double>([&]() { return cross_entropy(logits, labels); },
                                  {{"logits", logits}}));

    DT pred = rand_tensor({3, 4}, rng);
    DT target = rand_tensor({3, 4}, rng);
    expect_pass(gradcheck<double>([&]() { return mse_loss(pred, target); },
                                  {{"pred", pred}, {"target", target}}));
  }
}

TEST_CASE("gradcheck: lstm_cell over three timesteps") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 31);
    const int64_t batch = 2, input = 3, hidden = 4;
    DT x0 = rand_tensor({batch, input}, rng);
    DT x1 = rand_tensor({batch, input}, rng);
    DT x2 = rand_tensor({batch, input}, rng);
    DT h0 = rand_tensor({batch, hidden}, rng);
    DT c0 = rand_tensor({batch, hidden}, rng);
    DT w_ih = rand_tensor({4 * hidden, input}, rng);
    DT w_hh = rand_tensor({4 * hidden, hidden}, rng);
    DT b = rand_tensor({4 * hidden}, rng);

    auto loss = [&]() {
      auto [h1, c1] = lstm_cell(x0, h0, c0, w_ih, w_hh, b);
      auto [h2, c2] = lstm_cell(x1, h1, c1, w_ih, w_hh, b);
      auto [h3, c3] = lstm_cell(x2, h2, c2, w_ih, w_hh, b);
      (void)c3;
      return add(probe_loss(h3, seed * 1000 + 28), probe_loss(add(h1, h2), seed * 1000 + 29));
    };
    expect_pass(gradcheck<double>(loss, {{"x0", x0},
                                         {"h0", h0},
                                         {"c0", c0},
                                         {"w_ih", w_ih},
                                         {"w_hh", w_hh},
                                         {"b", b}}));
  }
}

TEST_CASE("gradcheck: weighted_time_pool") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 37);
    DT h = rand_tensor({2, 4, 3}, rng);
    DT a = rand_tensor({2, 4}, rng);
    expect_pass(gradcheck<double>([&]() { return probe_loss(weighted_time_pool(h, a), seed * 1000 + 30); },
                                  {{"h", h}, {"a", a}}));
  }
}

// ---------------------------------------------------------------------------
// properties and error paths
// ---------------------------------------------------------------------------

TEST_CASE("batchnorm train output is standardized before affine") {
  Rng rng(8);
  DT x = rand_tensor({64, 5}, rng, false, -3.0, 5.0);
  DT gamma = DT::full({5}, 1.0);
  DT beta = DT::zeros({5});
  DT rm = DT::zeros({5});
  DT rv = DT::full({5}, 1.0);
  DT y = batchnorm(x, gamma, beta, rm, rv, true);
  for (int64_t j = 0; j < 5; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < 64; ++i) mean += y.data()[i * 5 + j];
    mean /= 64.0;
    double var = 0.0;
    for (int64_t i = 0; i < 64; ++i) {
      const double d = y.data()[i * 5 + j] - mean;
      var += d * d;
    }
    var /= 64.0;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("dropout: eval identity and train expectation within 2%") {
  Rng rng(9);
  DT x = rand_tensor({100}, rng, false);
  DT y = dropout(x, 0.4, /*train=*/false, 1);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  const double p = 0.3;
  DT ones = DT::full({100}, 1.0);
  double acc = 0.0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    DT m = dropout(ones, p, true, static_cast<uint64_t>(t) + 1);
    for (int64_t i = 0; i < m.numel(); ++i) acc += m.data()[i];
  }
  const double mean = acc / (trials * 100.0);
  CHECK(std::fabs(mean - 1.0) < 0.02);
}

TEST_CASE("concat then split recovers the inputs exactly") {
  Rng rng(10);
  DT a = rand_tensor({2, 3, 4}, rng, false);
  DT b = rand_tensor({2, 5, 4}, rng, false);
  DT cat = concat<double>({a, b}, 1);
  auto parts = split(cat, 1, {3, 5});
  REQUIRE(parts.size() == 2);
  REQUIRE(parts[0].shape() == a.shape());
  REQUIRE(parts[1].shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(parts[0].data()[i] == a.data()[i]);
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(parts[1].data()[i] == b.data()[i]);
}

TEST_CASE("gradient accumulation doubles at fan-out") {
  Rng rng(12);
  DT x = rand_tensor({4}, rng);
  DT single_grad;
  {
    Graph<double> g;
    Graph<double>::Scope scope(g);
    g.backward(sum_all(tanh(x)));
  }
  std::vector<double> first = *x.grad();
  x.zero_grad();
  {
    Graph<double> g;
    Graph<double>::Scope scope(g);
    DT f1 = sum_all(tanh(x));
    DT f2 = sum_all(tanh(x));
    g.backward(add(f1, f2));
  }
  const auto* doubled = x.grad();
  for (size_t i = 0; i < first.size(); ++i)
    CHECK((*doubled)[i] == doctest::Approx(2.0 * first[i]).epsilon(1e-12));
}

TEST_CASE("shape mismatches name both shapes") {
  DT a = DT::zeros({2, 3});
  DT b = DT::zeros({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), DimensionError);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[3,2]"), DimensionError);
  DT w = DT::zeros({4, 5, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(DT::zeros({1, 2, 8, 8}), w, DT::zeros({4}), 1, 1),
                       doctest::Contains("[4,5,3,3]"), DimensionError);
}

TEST_CASE("non-finite forward values raise a numeric error") {
  DT x = DT::from({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(scale(x, 2.0), NumericError);
  CHECK_THROWS_AS(tanh(x), NumericError);
  DT big = DT::from({2}, {1e308, 1e308});
  CHECK_THROWS_AS(mul(big, big), NumericError);  // overflows to inf
}

TEST_CASE("backward requires a scalar loss") {
  DT x = DT::zeros({3}, true);
  Graph<double> g;
  Graph<double>::Scope scope(g);
  DT y = scale(x, 2.0);
  CHECK_THROWS_AS(g.backward(y), DimensionError);
}

TEST_CASE("a sign-flipped conv2d backward would be caught at rel err 2") {
  Rng rng(13);
  DT x = rand_tensor({1, 2, 4, 4}, rng, false);
  DT w = rand_tensor({2, 2, 3, 3}, rng);
  DT b = rand_tensor({2}, rng);
  std::function<DT()> loss = [&]() { return probe_loss(conv2d(x, w, b, 1, 1), 1431); };

  // analytic gradient
  w.zero_grad();
  b.zero_grad();
  {
    Graph<double> g;
    Graph<double>::Scope scope(g);
    g.backward(loss());
  }
  const std::vector<double> analytic = *w.grad();

  // finite differences, then compare against the sabotaged (negated) grads
  double worst = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) {
    const double saved = w.data()[i];
    w.data()[i] = saved + 1e-5;
    const double fp = loss().item();
    w.data()[i] = saved - 1e-5;
    const double fm = loss().item();
    w.data()[i] = saved;
    const double numeric = (fp - fm) / 2e-5;
    worst = std::max(worst, grad_rel_err(-analytic[static_cast<size_t>(i)], numeric));
  }
  CHECK(worst == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("checkpoint round-trip, checksum, and magic validation") {
  std::vector<CheckpointEntry> entries;
  Rng rng(15);
  CheckpointEntry e1;
  e1.name = "layer.w";
  e1.shape = {3, 4};
  for (int i = 0; i < 12; ++i) e1.values.push_back(static_cast<float>(rng.uniform(-1, 1)));
  CheckpointEntry e2;
  e2.name = "layer.b";
  e2.shape = {4};
  for (int i = 0; i < 4; ++i) e2.values.push_back(static_cast<float>(rng.uniform(-1, 1)));
  entries.push_back(e1);
  entries.push_back(e2);

  const std::string path = "/tmp/audron_test_ckpt.bin";
  save_checkpoint(entries, path);
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "layer.w");
  CHECK(back[0].shape == Shape{3, 4});
  for (size_t i = 0; i < 12; ++i) CHECK(back[0].values[i] == e1.values[i]);
  CHECK(back[1].name == "layer.b");

  // flip one payload byte: checksum must catch it
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(30);
    char c;
    f.seekg(30);
    f.get(c);
    f.seekp(30);
    f.put(static_cast<char>(c ^ 0x40));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), FormatError);

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOTACKPT11..............";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), FormatError);
  std::filesystem::remove(path);
}
