#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wdistill/core.hpp"
#include "wdistill/rng.hpp"

using namespace wdistill;
using doctest::Approx;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

LabelVec random_label(CounterRng& rng, int L) {
  Vec p(L);
  for (int i = 0; i < L; ++i) p[i] = std::exp(2.0 * rng.normal());
  return LabelVec::from_probs(p / p.sum());
}

// Log-sum-exp written independently of the library: sorted ascending
// summation with long double accumulation.
double oracle_cross_entropy(const LabelVec& t, const Vec& z, double T) {
  std::vector<long double> s(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) s[i] = static_cast<long double>(z[i]) / T;
  const long double m = *std::max_element(s.begin(), s.end());
  std::vector<long double> e;
  for (auto v : s) e.push_back(std::exp(v - m));
  std::sort(e.begin(), e.end());
  long double total = 0;
  for (auto v : e) total += v;
  const long double lse = m + std::log(total);
  long double loss = 0;
  for (int i = 0; i < t.size(); ++i) loss -= t[i] * (s[i] - lse);
  return static_cast<double>(loss);
}

}  // namespace

TEST_CASE("label vectors validate their input") {
  CHECK_THROWS_AS(LabelVec::from_probs(vec({0.5, 0.4})), Error);
  CHECK_THROWS_AS(LabelVec::from_probs(vec({1.2, -0.2})), Error);
  CHECK_THROWS_AS(LabelVec::from_probs(vec({1.0})), Error);
  CHECK_THROWS_AS(LabelVec::one_hot(3, 3), Error);
  CHECK(LabelVec::one_hot(3, 1).is_one_hot());
  CHECK_FALSE(LabelVec::uniform(3).is_one_hot());
  CHECK(LabelVec::uniform(4).argmax() == 0);
  CHECK(LabelVec::from_probs(vec({0.2, 0.4, 0.4})).argmax() == 1);
}

TEST_CASE("softmax examples") {
  const Vec half = softmax(vec({0, 0}), 1.0);
  CHECK(half[0] == Approx(0.5));
  CHECK(half[1] == Approx(0.5));

  const Vec a = softmax(vec({0.3, -1.7}));
  const Vec b = softmax(vec({0.3 + 123.0, -1.7 + 123.0}));
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);

  const Vec hot = softmax(vec({1, 0, 0}), 1e6);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(hot[i] - 1.0 / 3.0) < 1e-5);

  CHECK_THROWS_AS(softmax(vec({0, NAN})), Error);
  CHECK_THROWS_AS(softmax(vec({0, 1}), 0.0), Error);
}

TEST_CASE("softmax is stable for large logits") {
  auto rng = CounterRng::for_index(3, Purpose::trial, 0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec z(5);
    for (int i = 0; i < 5; ++i) z[i] = 1e4 * rng.normal();
    const Vec p = softmax(z);
    REQUIRE(p.allFinite());
    CHECK_NOTHROW(LabelVec::from_probs(p));
  }
}

TEST_CASE("cross entropy examples") {
  const LossSpec spec;
  CHECK(cross_entropy(LabelVec::one_hot(2, 0), vec({1e6, 0}), spec) <= 1e-6);
  CHECK(cross_entropy(LabelVec::uniform(2), vec({0, 0}), spec) == Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(cross_entropy(LabelVec::uniform(3), vec({0, 0}), spec), Error);
  const LossSpec bce{LossKind::binary_cross_entropy, 1.0};
  CHECK_THROWS_AS(cross_entropy(LabelVec::uniform(3), vec({0, 0, 0}), bce), Error);
  // Log-probabilities are floored at log(1e-12).
  CHECK(cross_entropy(LabelVec::one_hot(2, 1), vec({1e6, 0}), spec) == Approx(-std::log(1e-12)));
}

TEST_CASE("cross entropy matches an independent log-sum-exp") {
  auto rng = CounterRng::for_index(11, Purpose::trial, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 2 + static_cast<int>(rng.below(6));
    const LabelVec t = random_label(rng, L);
    Vec z(L);
    for (int i = 0; i < L; ++i) z[i] = 3.0 * rng.normal();
    const double T = 0.5 + 2.0 * rng.uniform();
    CHECK(std::abs(cross_entropy(t, z, {LossKind::cross_entropy_soft, T}) - oracle_cross_entropy(t, z, T)) <= 1e-10);
  }
}

TEST_CASE("cross entropy is at least the target entropy") {
  auto rng = CounterRng::for_index(12, Purpose::trial, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 2 + static_cast<int>(rng.below(5));
    const LabelVec t = random_label(rng, L);
    Vec z(L);
    for (int i = 0; i < L; ++i) z[i] = 5.0 * rng.normal();
    CHECK(cross_entropy(t, z, {}) >= entropy_confidence(t) - 1e-9);
  }
}

TEST_CASE("confidence scores") {
  CHECK(margin_score(LabelVec::from_probs(vec({0.7, 0.2, 0.1}))) == Approx(0.5));
  CHECK(margin_score(LabelVec::uniform(4)) == 0.0);
  CHECK(margin_score(LabelVec::one_hot(3, 2)) == 1.0);
  CHECK(entropy_confidence(LabelVec::one_hot(3, 0)) == 0.0);
  CHECK(entropy_confidence(LabelVec::uniform(4)) == Approx(std::log(4.0)));
  CHECK(entropy_confidence(LabelVec::from_probs(vec({0.5, 0.5, 0.0}))) == Approx(std::log(2.0)));
}

TEST_CASE("confidence scores ignore class order") {
  auto rng = CounterRng::for_index(13, Purpose::trial, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelVec p = random_label(rng, 5);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 4; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Vec q(5);
    for (int i = 0; i < 5; ++i) q[i] = p[perm[i]];
    const LabelVec pq = LabelVec::from_probs(q);
    CHECK(margin_score(pq) == Approx(margin_score(p)).epsilon(1e-14));
    CHECK(entropy_confidence(pq) == Approx(entropy_confidence(p)).epsilon(1e-12));
  }
}

TEST_CASE("empirical risk") {
  const LossSpec spec;
  LinearParams model = LinearParams::zeros(3, 2);
  model.theta << 1.0, -0.5, 0.2, 0.3, -1.0, 0.7;

  Dataset one;
  one.examples.push_back({vec({0.4, -1.2}), LabelVec::one_hot(3, 2)});
  const double single = example_loss(model, one.examples[0], spec);
  Dataset repeated;
  repeated.examples.assign(7, one.examples[0]);
  CHECK(empirical_risk(model, repeated, spec) == Approx(single).epsilon(1e-15));

  Dataset hard;
  for (int i = 0; i < 4; ++i) hard.examples.push_back({vec({double(i), 1.0 - i}), LabelVec::one_hot(3, i % 3)});
  CHECK(empirical_risk(LinearParams::zeros(3, 2), hard, spec) == Approx(std::log(3.0)).epsilon(1e-14));

  Dataset three;
  three.examples.push_back({vec({1.0, 0.0}), LabelVec::one_hot(3, 0)});
  three.examples.push_back({vec({-0.5, 2.0}), LabelVec::uniform(3)});
  three.examples.push_back({vec({0.3, 0.3}), LabelVec::from_probs(vec({0.1, 0.6, 0.3}))});
  double manual = 0.0;
  for (const auto& ex : three.examples) manual += example_loss(model, ex, spec);
  CHECK(std::abs(empirical_risk(model, three, spec) - manual / 3.0) <= 1e-12);

  Dataset empty;
  CHECK_THROWS_AS(empirical_risk(model, empty, spec), Error);
}

TEST_CASE("weighted empirical risk") {
  const LossSpec spec;
  LinearParams model = LinearParams::zeros(2, 2);
  model.theta << 0.5, -1.0, 2.0, 0.1;
  Dataset two;
  two.examples.push_back({vec({1.0, 2.0}), LabelVec::one_hot(2, 0)});
  two.examples.push_back({vec({-1.0, 0.5}), LabelVec::one_hot(2, 1)});

  const std::vector<double> ones{1.0, 1.0}, zeros{0.0, 0.0}, mixed{1.0, 0.5};
  CHECK(weighted_empirical_risk(model, two, ones, spec) == Approx(empirical_risk(model, two, spec)).epsilon(1e-15));
  CHECK(weighted_empirical_risk(model, two, zeros, spec) == 0.0);
  const double manual = (example_loss(model, two.examples[0], spec) + 0.5 * example_loss(model, two.examples[1], spec)) / 2;
  CHECK(std::abs(weighted_empirical_risk(model, two, mixed, spec) - manual) <= 1e-12);

  const std::vector<double> bad{1.0, 1.5};
  CHECK_THROWS_AS(weighted_empirical_risk(model, two, bad, spec), Error);
  const std::vector<double> short_list{1.0};
  CHECK_THROWS_AS(weighted_empirical_risk(model, two, short_list, spec), Error);
}

TEST_CASE("unit weights reproduce the empirical risk on random instances") {
  auto rng = CounterRng::for_index(14, Purpose::trial, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int L = 2 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(5));
    LinearParams model = LinearParams::zeros(L, d);
    for (Eigen::Index i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = rng.normal();
    Dataset data;
    const int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      Vec x(d);
      for (int j = 0; j < d; ++j) x[j] = rng.normal();
      data.examples.push_back({x, random_label(rng, L)});
    }
    const std::vector<double> ones(n, 1.0);
    CHECK(std::abs(weighted_empirical_risk(model, data, ones, {}) - empirical_risk(model, data, {})) <= 1e-12);
  }
}

TEST_CASE("pairwise sum") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 499500.0);
  CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
}

TEST_CASE("binary embedding keeps the norm and the decision") {
  const Vec theta = vec({0.6, -0.8, 0.0});
  const LinearParams p = embed_binary(theta);
  CHECK(p.frobenius_norm() == Approx(theta.norm()));
  const Vec x = vec({1.0, 0.2, 3.0});
  const Vec z = p.logits(x);
  CHECK((z[0] > z[1]) == (theta.dot(x) > 0));
}
