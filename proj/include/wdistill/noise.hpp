#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "wdistill/core.hpp"
#include "wdistill/rng.hpp"

namespace wdistill {

struct SupportPoint {
  Vec x;
  double mass = 0.0;
};

// Clean distribution P = (x, f_true(x)); noisy distribution D replaces the
// label by adversarial_label(x) with probability corrupt_prob(x). Both share
// the x-marginal drawn by `x_sampler` (or by `support` when non-empty).
struct NoiseModel {
  int dim = 0;
  int num_classes = 2;
  std::function<int(const Vec&)> ground_truth;
  std::function<double(const Vec&)> corrupt_prob;
  std::function<LabelVec(const Vec&)> adversarial_label;
  std::function<Vec(CounterRng&)> x_sampler;
  // Finite support for exact expectations; masses sum to 1.
  std::vector<SupportPoint> support;

  bool has_exact_support() const noexcept { return !support.empty(); }
  Vec sample_x(CounterRng& rng) const;
  LabelVec clean_label(const Vec& x) const { return LabelVec::one_hot(num_classes, ground_truth(x)); }
  void validate() const;
};

struct NoisyDraw {
  Vec x;
  LabelVec y;
  int truth = 0;
  bool corrupted = false;
};

// The i-th draw of a sample stream. Features depend only on (seed, index), so
// the clean and noisy streams share x for equal seeds.
NoisyDraw draw_clean(const NoiseModel& nm, std::uint64_t seed, std::uint64_t index);
NoisyDraw draw_noisy(const NoiseModel& nm, std::uint64_t seed, std::uint64_t index);

Dataset sample_clean(const NoiseModel& nm, std::size_t n, std::uint64_t seed);
Dataset sample_noisy(const NoiseModel& nm, std::size_t n, std::uint64_t seed);

struct DiscretePoint {
  Vec x;
  double mass = 0.0;
  int truth = 0;
  double corrupt_prob = 0.0;
  LabelVec adversarial;
};

// Noise model over a finite support; lookup is by exact feature equality.
NoiseModel make_discrete_noise_model(std::vector<DiscretePoint> points, int num_classes);

struct SphereInstance {
  int dim = 0;
  double noise_level = 0.0;
  double radius = 0.0;
  Vec theta_star;
  Vec theta_tilde;
};

struct SphereProblem {
  SphereInstance instance;
  NoiseModel model;
};

double default_sphere_radius(int dim, double noise_level);

// Two-class instance with x uniform on the radius-R sphere, clean labels
// sign(theta_star . x) and noisy labels sign(theta_tilde . x), where
// angle(theta_star, theta_tilde) = pi * c. Class 0 encodes sign +1 (ties
// included), class 1 encodes -1.
SphereProblem make_sphere_instance(int dim, double noise_level, std::uint64_t seed,
                                   std::optional<double> radius = std::nullopt);

struct MixtureSpec {
  int dim = 2;
  int num_classes = 2;
  std::size_t n_labeled = 100;
  std::size_t n_unlabeled = 1000;
  std::size_t n_validation = 100;
  std::size_t n_test = 1000;
  // Pairwise distance between cluster means.
  double separation = 4.0;
  double noise_std = 1.0;
};

struct MixtureTask {
  Dataset labeled;
  Dataset unlabeled;
  Dataset validation;
  Dataset test;
  // Row k is the mean of cluster k.
  Mat means;
};

// L isotropic Gaussian clusters whose means are scaled orthonormal directions
// (requires L <= d). Ground truth is the nearest mean, ties going to the
// generating cluster. Unlabeled examples carry uniform placeholder labels;
// their truth is kept for simulation diagnostics.
MixtureTask synthetic_mixture_task(const MixtureSpec& spec, std::uint64_t seed);

// Bayes-optimal linear scorer for a mixture task (rows are the means).
LinearParams nearest_mean_model(const MixtureTask& task);

}  // namespace wdistill
