#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "wdistill/debias.hpp"

using namespace wdistill;
using doctest::Approx;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

NoiseModel three_point_model(double p0, double p1, double p2) {
  std::vector<DiscretePoint> pts = {
      {vec({1.0, 0.0}), 0.5, 0, p0, LabelVec::one_hot(3, 1)},
      {vec({0.0, 1.0}), 0.3, 1, p1, LabelVec::from_probs(vec({0.2, 0.2, 0.6}))},
      {vec({-1.0, -1.0}), 0.2, 2, p2, LabelVec::one_hot(3, 0)},
  };
  return make_discrete_noise_model(std::move(pts), 3);
}

LinearParams some_model() {
  LinearParams m = LinearParams::zeros(3, 2);
  m.theta << 0.8, -0.3, -0.4, 1.1, 0.2, -0.9;
  return m;
}

}  // namespace

TEST_CASE("distortion") {
  CHECK(distortion(2.5, 2.5) == 1.0);
  CHECK(distortion(3.0, 1.0) == 3.0);
  CHECK_THROWS_WITH_AS(distortion(1.0, 0.0), "zero clean loss: distortion undefined", Error);
  bool flagged = false;
  CHECK(distortion_or_unit(1.0, 0.0, &flagged) == 1.0);
  CHECK(flagged);

  // Concrete triple against hand-computed cross entropies.
  const Vec z = vec({2.0, 0.5, -1.0});
  const double lse = std::log(std::exp(2.0) + std::exp(0.5) + std::exp(-1.0));
  const double adv = lse - 0.5;
  const double tru = lse - 2.0;
  const LossSpec spec;
  const double d = distortion(cross_entropy(LabelVec::one_hot(3, 1), z, spec), cross_entropy(LabelVec::one_hot(3, 0), z, spec));
  CHECK(std::abs(d - adv / tru) <= 1e-10);
}

TEST_CASE("debias weight examples") {
  for (double d : {0.0, 0.5, 1.0, 7.0}) {
    const WeightRecord r = debias_weight(0.0, d);
    CHECK(r.weight == 1.0);
  }
  const WeightRecord third = debias_weight(1.0, 3.0);
  CHECK(third.raw_weight == Approx(1.0 / 3.0));
  CHECK(third.weight == Approx(1.0 / 3.0));
  const WeightRecord two = debias_weight(1.0, 0.5);
  CHECK(two.raw_weight == Approx(2.0));
  CHECK(two.weight == 1.0);
  CHECK_THROWS_WITH_AS(raw_debias_weight(1.0, 0.0), "degenerate weight", Error);
  CHECK_THROWS_AS(raw_debias_weight(1.5, 1.0), Error);
}

TEST_CASE("clamp binds exactly when distortion < 1 and p > 0") {
  for (int i = 0; i <= 20; ++i) {
    const double p = i / 20.0;
    for (int j = 1; j <= 60; ++j) {
      const double d = j / 20.0;
      const WeightRecord r = debias_weight(p, d);
      CHECK((r.weight < r.raw_weight) == (d < 1.0 && p > 0.0));
      REQUIRE(r.weight >= 0.0);
      REQUIRE(r.weight <= 1.0);
    }
  }
}

TEST_CASE("weight is non-increasing in distortion") {
  for (double p : {0.05, 0.3, 0.7, 1.0}) {
    double prev = 2.0;
    for (int j = 1; j <= 300; ++j) {
      const double w = debias_weight(p, j / 100.0).weight;
      CHECK(w <= prev);
      prev = w;
    }
  }
}

TEST_CASE("bias functional") {
  const LossSpec spec;
  const LinearParams m = some_model();
  CHECK(bias_functional(three_point_model(0.0, 0.0, 0.0), m, spec).value == 0.0);

  // Adversary returns the clean label: distortion 1 everywhere.
  NoiseModel same = three_point_model(0.4, 0.6, 0.9);
  same.adversarial_label = [&](const Vec& x) { return same.clean_label(x); };
  CHECK(bias_functional(same, m, spec).value == 0.0);

  const NoiseModel nm = three_point_model(0.2, 0.5, 0.9);
  double manual = 0.0;
  for (const auto& sp : nm.support) {
    const Vec z = m.logits(sp.x);
    const double lt = cross_entropy(nm.clean_label(sp.x), z, spec);
    const double la = cross_entropy(nm.adversarial_label(sp.x), z, spec);
    manual += sp.mass * nm.corrupt_prob(sp.x) * (la / lt - 1.0) * lt;
  }
  const Estimate est = bias_functional(nm, m, spec);
  CHECK(est.exact);
  CHECK(std::abs(est.value - manual) <= 1e-12);
}

TEST_CASE("bias functional without a support needs a budget") {
  NoiseModel nm = three_point_model(0.2, 0.5, 0.9);
  const auto support = nm.support;
  nm.support.clear();
  nm.x_sampler = [support](CounterRng& rng) { return support[rng.below(1) + (rng.uniform() < 0.5 ? 0 : 1)].x; };
  CHECK_THROWS_AS(bias_functional(nm, some_model(), {}), Error);
  const Estimate est = bias_functional(nm, some_model(), {}, MonteCarloBudget{20000, 3});
  CHECK_FALSE(est.exact);
  CHECK(est.std_error > 0.0);
}

TEST_CASE("unclamped weights remove the bias exactly") {
  const LossSpec spec;
  const LinearParams m = some_model();
  const NoiseModel nm = three_point_model(0.3, 0.8, 0.55);
  const RiskDecomposition r = exact_risk_decomposition(nm, m, spec);
  const double bias = bias_functional(nm, m, spec).value;
  CHECK(std::abs(r.weighted_risk - r.clean_risk) <= 1e-10);
  CHECK(std::abs(r.noisy_risk - (r.clean_risk + bias)) <= 1e-10);
  CHECK(std::abs(r.bias - bias) <= 1e-15);
}

TEST_CASE("mse pair examples") {
  const MsePair none = mse_pair(0.0, 1.3, 0.4);
  CHECK(none.unweighted == 0.0);
  CHECK(none.weighted == 0.0);
  const MsePair unit = mse_pair(0.6, 1.3, 1.0);
  CHECK(unit.unweighted == 0.0);
  CHECK(unit.weighted == 0.0);
}

TEST_CASE("mse pair matches a Monte Carlo over the label coin") {
  const double p = 0.5, ell = 1.0, d = 0.25;
  const MsePair m = mse_pair(p, ell, d);
  const double w = raw_debias_weight(p, d);
  auto rng = CounterRng::for_index(77, Purpose::monte_carlo, 0);
  const int n = 200000;
  double su = 0, su2 = 0, sw = 0, sw2 = 0;
  for (int i = 0; i < n; ++i) {
    const bool corrupted = rng.bernoulli(p);
    const double observed = corrupted ? d * ell : ell;
    const double eu = (observed - ell) * (observed - ell);
    const double ew = (w * observed - ell) * (w * observed - ell);
    su += eu;
    su2 += eu * eu;
    sw += ew;
    sw2 += ew * ew;
  }
  const double mu = su / n, mw = sw / n;
  const double se_u = std::sqrt(std::max(0.0, su2 / n - mu * mu) / n);
  const double se_w = std::sqrt(std::max(0.0, sw2 / n - mw * mw) / n);
  CHECK(std::abs(mu - m.unweighted) <= 3 * se_u);
  // Here both coin outcomes give the same weighted error, so the spread is 0
  // and only rounding separates the two.
  CHECK(std::abs(mw - m.weighted) <= 3 * se_w + 1e-12);
}

TEST_CASE("crossover predicate") {
  CHECK((1.0 - 0.5) / (0.75 * 0.75) == Approx(0.888888888888889));
  CHECK(mse_crossover_predicate(0.5, 0.25));
  CHECK_FALSE(mse_crossover_predicate(0.9, 0.25));
  for (int i = 0; i <= 100; ++i) CHECK_FALSE(mse_crossover_predicate(i / 100.0, 0.6));
  CHECK_FALSE(mse_crossover_predicate(0.0, 0.1));
}

TEST_CASE("crossover predicate agrees with the closed forms on a grid") {
  std::size_t violations = 0;
  for (int i = 0; i <= 100; ++i) {
    const double p = i / 100.0;
    for (int j = 0; j <= 300; ++j) {
      const double d = j / 100.0;
      if (i == 100 && j == 0) continue;  // weight undefined
      const MsePair m = mse_pair(p, 1.0, d);
      const double gap = m.weighted - m.unweighted;
      if (std::abs(gap) > 1e-9 && mse_crossover_predicate(p, d) != (gap > 0)) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("regularity constants") {
  const RegularityConstants a = make_regularity(1.0, 1.0, 1.0, 1.0, {});
  CHECK(a.B_q == 4.0);
  const RegularityConstants b = make_regularity(2.0, 1.0, 1.0, 1.0, {});
  CHECK(b.B_q == 9.0);
  const RegularityConstants c = make_regularity(3.0, 2.0, 2.0, 1.0, {1.0, 1.0, 1.0});
  CHECK(c.kappa == 8.0);

  const RegularityConstants ce = regularity_constants({LossKind::cross_entropy_soft, 1.0}, 16.0, {}, 2);
  CHECK(ce.M_ell == Approx(std::log(2.0) + 32.0));
  CHECK(ce.L_ell == 2.0);
  CHECK(ce.B_ell == 1.0);
  CHECK_THROWS_AS(regularity_constants({}, 0.5, {}, 2), Error);
  CHECK_THROWS_AS(regularity_constants({}, 2.0, {0.5, 1.0, 1.0}, 2), Error);
}
