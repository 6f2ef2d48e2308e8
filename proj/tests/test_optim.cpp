#include <doctest.h>

#include <cmath>
#include <limits>

#include "chardec/error.hpp"
#include "chardec/optim.hpp"

using namespace chardec;

TEST_SUITE("optim") {

TEST_CASE("zero grads and zero decay leave params unchanged") {
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  Tensor p({3}, 2.0);
  Tensor g({3}, 0.0);
  opt.step({&p}, {&g});
  for (std::int64_t i = 0; i < p.size(); ++i) CHECK(p[i] == 2.0);
}

TEST_CASE("zero grads apply pure decoupled decay") {
  AdamWConfig cfg;  // lr=1e-5, wd=0.01
  AdamW opt(cfg);
  Tensor p({2}, 1.0);
  Tensor g({2}, 0.0);
  opt.step({&p}, {&g});
  for (std::int64_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] == doctest::Approx(1.0 - 1e-7).epsilon(1e-14));
  }
}

TEST_CASE("first step matches the hand-evaluated update on a scalar") {
  AdamWConfig cfg;
  cfg.lr = 0.001;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg);
  Tensor p({1}, 1.0);
  Tensor g({1}, 0.5);
  opt.step({&p}, {&g});

  const double decayed = 1.0 * (1.0 - 0.001 * 0.01);
  const double m_hat = (0.1 * 0.5) / (1.0 - 0.9);
  const double v_hat = (0.001 * 0.25) / (1.0 - 0.999);
  const double expected = decayed - 0.001 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("non-finite gradient is a hard error") {
  AdamW opt(AdamWConfig{});
  Tensor p({1}, 1.0);
  Tensor g({1}, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(opt.step({&p}, {&g}), NumericError);
}

TEST_CASE("steps are deterministic") {
  auto run = [] {
    AdamW opt(AdamWConfig{});
    Tensor p = Tensor::from({2}, {0.3, -0.8});
    for (int i = 0; i < 50; ++i) {
      Tensor g = Tensor::from({2}, {0.1 * i, -0.05});
      opt.step({&p}, {&g});
    }
    return p;
  };
  Tensor a = run(), b = run();
  CHECK(a.values() == b.values());
}

TEST_CASE("gradient clipping clamps elementwise") {
  Tensor g = Tensor::from({3}, {0.5, 3.2, -7.0});
  clip_gradients(g);
  CHECK(g[0] == 0.5);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == -1.0);
}

TEST_CASE("clip bounds must be ordered") {
  Tensor g({1}, 0.0);
  CHECK_THROWS_AS(clip_gradients(g, 1.0, -1.0), ConfigError);
}

TEST_CASE("finite differences agree on a quadratic") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5});
  auto loss = [&]() {
    double s = 0.0;
    for (std::int64_t i = 0; i < p.size(); ++i) s += 0.5 * p[i] * p[i];
    return s;
  };
  Tensor grad = p;  // d/dp of ||p||^2/2 is p itself
  CHECK(finite_diff_check(loss, {&p}, {&grad}) < 1e-8);
}

TEST_CASE("finite differences flag a corrupted gradient") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5});
  auto loss = [&]() {
    double s = 0.0;
    for (std::int64_t i = 0; i < p.size(); ++i) s += 0.5 * p[i] * p[i];
    return s;
  };
  Tensor grad = p;
  grad[1] += 0.25;
  CHECK(finite_diff_check(loss, {&p}, {&grad}) > 1e-2);
}

}  // TEST_SUITE
