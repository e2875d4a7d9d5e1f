#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wdistill/core.hpp"
#include "wdistill/debias.hpp"
#include "wdistill/noise.hpp"

namespace wdistill {

enum class StepSchedule {
  constant,      // c / sqrt(T)
  inverse_sqrt,  // c / sqrt(t)
};

enum class Sampling { with_replacement, permutation };

struct SgdConfig {
  std::size_t iterations = 1000;
  StepSchedule schedule = StepSchedule::constant;
  double step_scale = 1.0;
  double radius = 1.0;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::with_replacement;
  // Multi-pass only: keep every n-th iterate (the last one is always kept).
  std::size_t record_every = 1;

  // Step size for 1-based iteration t.
  double step(std::size_t t) const;
  void validate() const;
};

// radius / kappa, the default constant in front of 1/sqrt(T).
double default_step_scale(const RegularityConstants& rc, double radius);

enum class WeightKind { unit, frozen, exact_debias };

// How the per-example weight w(x, y; Theta) is formed.
struct WeightFunctionSpec {
  WeightKind kind = WeightKind::unit;
  double frozen_weight = 1.0;
  // Oracle for exact_debias; must outlive the spec.
  const NoiseModel* noise = nullptr;
  // exact_debias: project onto [0,1] (gradient 0 where the clamp binds).
  bool clamp = true;

  static WeightFunctionSpec unit() { return {}; }
  static WeightFunctionSpec frozen(double w);
  static WeightFunctionSpec exact(const NoiseModel& nm, bool clamp);
  void validate() const;
};

struct WeightedLoss {
  double loss = 0.0;    // w * ell(y, Theta x)
  double weight = 1.0;  // w
  Mat grad;             // d/dTheta of w * ell
};

// Product-rule gradient ell * grad(w) + w * grad(ell) at a single example.
WeightedLoss weighted_loss_and_gradient(const LinearParams& theta, const Vec& x, const LabelVec& y,
                                        const WeightFunctionSpec& wspec, const LossSpec& spec);
Mat weighted_loss_gradient(const LinearParams& theta, const Vec& x, const LabelVec& y,
                           const WeightFunctionSpec& wspec, const LossSpec& spec);
double weighted_loss(const LinearParams& theta, const Vec& x, const LabelVec& y, const WeightFunctionSpec& wspec,
                     const LossSpec& spec);

// Central differences of a scalar function of the parameter matrix.
Mat finite_difference_gradient(const std::function<double(const Mat&)>& f, const Mat& at, double h = 1e-5);

// Radial projection onto the Frobenius ball of radius theta.radius.
LinearParams project_frobenius(LinearParams theta);

using IterateObserver = std::function<void(std::size_t step, const LinearParams&)>;

// Single-pass projected SGD from Theta = 0; step t consumes the t-th fresh
// draw of the noisy stream seeded by cfg.seed. Returns the last iterate.
LinearParams sgd_single_pass(const NoiseModel& nm, const WeightFunctionSpec& wspec, const SgdConfig& cfg,
                             const LossSpec& spec, const IterateObserver& observer = {});

// Same loop on the clean stream with unit weights (the reference learner).
LinearParams sgd_single_pass_clean(const NoiseModel& nm, const SgdConfig& cfg, const LossSpec& spec,
                                   const IterateObserver& observer = {});

struct MultiPassOptions {
  std::optional<LinearParams> init;
  IterateObserver observer;
};

// Multi-pass projected SGD over a fixed dataset with frozen per-example
// weights. Returns the iterates after each recorded step.
std::vector<LinearParams> sgd_multi_pass(const Dataset& data, std::span<const double> weights,
                                         const SgdConfig& cfg, const LossSpec& spec,
                                         const MultiPassOptions& opts = {});

// Multi-pass with a weight function (e.g. exact_debias through a noise model).
std::vector<LinearParams> sgd_multi_pass(const Dataset& data, const WeightFunctionSpec& wspec,
                                         const SgdConfig& cfg, const LossSpec& spec,
                                         const MultiPassOptions& opts = {});

// Index of the iterate with the lowest held-out empirical risk; earliest wins ties.
std::size_t best_iterate_index(std::span<const LinearParams> iterates, const Dataset& heldout, const LossSpec& spec);
LinearParams best_iterate(std::span<const LinearParams> iterates, const Dataset& heldout, const LossSpec& spec);

}  // namespace wdistill
