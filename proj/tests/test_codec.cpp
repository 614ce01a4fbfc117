#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "baton/autodiff.hpp"
#include "baton/codec.hpp"

#include <cmath>

using namespace baton;
using namespace baton::codec;

TEST_CASE("symlog and symexp are an exact odd inverse pair") {
  CHECK(symlog(0.0) == 0.0);
  CHECK(symexp(1.0) == doctest::Approx(std::exp(1.0) - 1).epsilon(1e-12));
  CHECK(std::abs(symexp(symlog(-37.5)) + 37.5) < 1e-9);
  Rng rng(1);
  std::uniform_real_distribution<double> uexp(-6, 6);
  real prev_x = -1e7, prev_y = -symlog(real(1e7)) - 1;
  for (int i = 0; i < 2000; ++i) {
    real x = static_cast<real>(std::copysign(std::pow(10.0, uexp(rng)), uexp(rng)));
    if (std::abs(x) > 1e6) continue;
    CHECK(std::abs(symexp(symlog(x)) - x) < 1e-9);
    CHECK(symlog(-x) == -symlog(x));  // odd
    CHECK(symexp(-x) == -symexp(x));
  }
  // monotone on a sorted sweep
  for (real x = -1e6; x < 1e6; x += 7919.77) {
    CHECK(symlog(x) > prev_y);
    prev_y = symlog(x);
    (void)prev_x;
  }
}

TEST_CASE("twohot on a tiny grid reproduces the worked examples") {
  BinGrid grid(3, -1, 1);
  SUBCASE("exact bin center") {
    Vec w = twohot_encode(symexp(real(0)), grid);
    CHECK(w(0) == 0.0);
    CHECK(w(1) == 1.0);
    CHECK(w(2) == 0.0);
  }
  SUBCASE("midpoint splits evenly") {
    Vec w = twohot_encode(symexp(real(0.5)), grid);
    CHECK(w(0) == doctest::Approx(0.0));
    CHECK(w(1) == doctest::Approx(0.5));
    CHECK(w(2) == doctest::Approx(0.5));
  }
  SUBCASE("beyond the top bin clamps to a one-hot") {
    Vec w = twohot_encode(symexp(real(25)), grid);  // symlog lands past b_B
    CHECK(w(2) == 1.0);
    CHECK(w.sum() == 1.0);
  }
}

TEST_CASE("twohot weights are a simplex with at most two adjacent nonzeros") {
  BinGrid grid(101, -20, 20);
  Rng rng(2);
  std::uniform_real_distribution<double> uexp(-9, 9);
  for (int i = 0; i < 5000; ++i) {
    real r = static_cast<real>(std::copysign(std::pow(10.0, uexp(rng)), uexp(rng) - 0.1));
    Vec w = twohot_encode(r, grid);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    int nonzeros = 0;
    int first = -1, last = -1;
    for (int k = 0; k < grid.num_bins; ++k) {
      if (w(k) != 0) {
        ++nonzeros;
        if (first < 0) first = k;
        last = k;
      }
    }
    CHECK(nonzeros <= 2);
    if (nonzeros == 2) CHECK(last - first == 1);
    // index rule: k = sum of 1(b_j <= symlog(r)) picks the lower support bin
    real x = std::clamp(symlog(r), grid.low, grid.high);
    int k_rule = 0;
    for (int j = 0; j < grid.num_bins; ++j) {
      if (grid.center(j) <= x) ++k_rule;
    }
    if (k_rule >= 1 && k_rule < grid.num_bins) CHECK(w(k_rule - 1) > 0.0);
  }
}

TEST_CASE("decode of encode is the identity over the representable range") {
  BinGrid grid(101, -20, 20);
  Rng rng(3);
  std::uniform_real_distribution<double> u(-19.9, 19.9);
  for (int i = 0; i < 4000; ++i) {
    real r = symexp(static_cast<real>(u(rng)));
    Vec probs = twohot_encode(r, grid);
    real dec = twohot_decode_probs(probs, grid);
    CHECK(std::abs(dec - r) <= 1e-6 * std::max(real(1), std::abs(r)));
  }
  // the worked roundtrip example
  real dec = twohot_decode_probs(twohot_encode(real(3.7), grid), grid);
  CHECK(std::abs(dec - 3.7) < 1e-6);
}

TEST_CASE("twohot decode of logits") {
  BinGrid grid(11, -2, 2);
  SUBCASE("one-hot at a center decodes to symexp of it") {
    Vec probs = Vec::Zero(11);
    probs(7) = 1;
    CHECK(twohot_decode_probs(probs, grid) == doctest::Approx(symexp(grid.center(7))));
    // via extreme logits
    Vec logits = Vec::Constant(11, -1000);
    logits(7) = 1000;
    CHECK(twohot_decode(logits, grid) == doctest::Approx(symexp(grid.center(7))));
  }
  SUBCASE("uniform weights over a symmetric grid decode to zero") {
    Vec logits = Vec::Zero(11);
    CHECK(twohot_decode(logits, grid) == doctest::Approx(0.0));
  }
}

TEST_CASE("soft cross-entropy examples and gradient") {
  BinGrid grid(11, -2, 2);
  SUBCASE("uniform logits give log B for any target") {
    CHECK(soft_cross_entropy(Vec::Zero(11), real(0.37), grid) ==
          doctest::Approx(std::log(11.0)).epsilon(1e-12));
    CHECK(soft_cross_entropy(Vec::Zero(11), real(-3.0), grid) ==
          doctest::Approx(std::log(11.0)).epsilon(1e-12));
  }
  SUBCASE("confident logits at an exact bin-center target drive the loss to zero") {
    real target = symexp(grid.center(4));
    Vec logits = Vec::Constant(11, real(0));
    logits(4) = 200;
    CHECK(soft_cross_entropy(logits, target, grid) < 1e-6);
  }
  SUBCASE("gradient wrt logits equals softmax minus twohot, confirmed by finite differences") {
    Rng rng(4);
    std::normal_distribution<double> n(0, 1);
    Vec logits(11);
    for (int i = 0; i < 11; ++i) logits(i) = static_cast<real>(n(rng));
    const real target = 0.8;
    Vec twohot = twohot_encode(target, grid);

    ParamTensor lp("logits", logits);
    Tape tape;
    Tape::VarId ce = tape.scale(
        tape.colwise_sum(tape.hadamard(tape.constant(twohot), tape.log_softmax(tape.leaf(lp)))),
        -1);
    tape.backward(tape.sum_all(ce));

    Mat softmax = kernels::grouped_softmax(logits, 11);
    Mat analytic_formula = softmax - twohot;
    CHECK((lp.grad - analytic_formula).cwiseAbs().maxCoeff() < 1e-12);

    for (int i = 0; i < 11; ++i) {
      const real eps = 1e-6;
      Vec up = logits, dn = logits;
      up(i) += eps;
      dn(i) -= eps;
      real fd = (soft_cross_entropy(up, target, grid) - soft_cross_entropy(dn, target, grid)) /
                (2 * eps);
      CHECK(std::abs(fd - lp.grad(i, 0)) < 1e-5);
    }
  }
  SUBCASE("minimized exactly when softmax equals the twohot target") {
    // at the optimum the gradient softmax - twohot vanishes; any other
    // distribution has strictly larger loss (cross entropy >= entropy)
    const real target = 0.8;
    Vec twohot = twohot_encode(target, grid);
    Vec opt_logits(11);
    for (int i = 0; i < 11; ++i) {
      opt_logits(i) = std::log(std::max(twohot(i), real(1e-300)));
    }
    real floor = soft_cross_entropy(opt_logits, target, grid);
    Rng rng(5);
    std::normal_distribution<double> n(0, 2);
    for (int trial = 0; trial < 200; ++trial) {
      Vec logits(11);
      for (int i = 0; i < 11; ++i) logits(i) = static_cast<real>(n(rng));
      CHECK(soft_cross_entropy(logits, target, grid) >= floor - 1e-12);
    }
  }
}

TEST_CASE("sem_norm projects onto fixed-length simplices") {
  SUBCASE("zeros give the uniform simplex") {
    Vec z = sem_norm(Vec::Zero(16), 8);
    for (int i = 0; i < 16; ++i) CHECK(z(i) == doctest::Approx(0.125));
  }
  SUBCASE("per-group constant shifts are invisible") {
    Rng rng(6);
    std::normal_distribution<double> n(0, 1);
    Vec z(16);
    for (int i = 0; i < 16; ++i) z(i) = static_cast<real>(n(rng));
    Vec shifted = z;
    for (int i = 0; i < 8; ++i) shifted(i) += 3.7;   // shift group 0 only
    for (int i = 8; i < 16; ++i) shifted(i) -= 1.2;  // shift group 1 only
    CHECK((sem_norm(z, 8) - sem_norm(shifted, 8)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("group sums are one") {
    Rng rng(7);
    std::normal_distribution<double> n(0, 3);
    for (int trial = 0; trial < 100; ++trial) {
      Vec z(24);
      for (int i = 0; i < 24; ++i) z(i) = static_cast<real>(n(rng));
      Vec s = sem_norm(z, 8);
      for (int g = 0; g < 3; ++g) {
        CHECK(std::abs(s.segment(g * 8, 8).sum() - 1.0) < 1e-6);
        for (int i = 0; i < 8; ++i) {
          CHECK(s(g * 8 + i) > 0.0);
          CHECK(s(g * 8 + i) < 1.0);
        }
      }
    }
  }
  SUBCASE("indivisible length is rejected") {
    CHECK_THROWS_AS(sem_norm(Vec::Zero(12), 8), DimensionError);
  }
}

TEST_CASE("percentile scaler follows the EMA recursion with a floor") {
  SUBCASE("linear-interpolated percentiles") {
    Vec v(5);
    v << 10, 0, 20, 30, 40;  // sorted: 0 10 20 30 40
    CHECK(percentile(v, real(0.5)) == doctest::Approx(20.0));
    CHECK(percentile(v, real(0.95)) == doctest::Approx(38.0));  // rank 3.8
    CHECK(percentile(v, real(0.05)) == doctest::Approx(2.0));
  }
  SUBCASE("fixed point when the spread matches the current scale") {
    Vec batch(5);
    batch << 10, 0, 20, 30, 40;
    const real spread = percentile(batch, real(0.95)) - percentile(batch, real(0.05));
    PercentileScaler s;
    s.scale = spread;
    s.ema = 0.99;
    percentile_update(s, batch);
    CHECK(s.scale == doctest::Approx(spread).epsilon(1e-12));
  }
  SUBCASE("constant batches decay the scale to the floor, never below") {
    PercentileScaler s;
    s.scale = 1.0;
    s.ema = 0.99;
    s.floor = 1e-2;
    Vec batch = Vec::Constant(32, real(5.0));
    real expected = 1.0;
    for (int i = 0; i < 2000; ++i) {
      percentile_update(s, batch);
      expected = std::max(real(0.99) * expected, real(1e-2));
      CHECK(s.scale == doctest::Approx(expected).epsilon(1e-12));
      CHECK(s.scale >= 1e-2);
    }
    CHECK(s.scale == doctest::Approx(1e-2));
  }
}
