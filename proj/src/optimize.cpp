#include "wdistill/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace wdistill {

double SgdConfig::step(std::size_t t) const {
  const double denom = schedule == StepSchedule::constant ? static_cast<double>(iterations)
                                                          : static_cast<double>(std::max<std::size_t>(t, 1));
  return step_scale / std::sqrt(denom);
}

void SgdConfig::validate() const {
  if (iterations < 1) throw Error("sgd iterations must be >= 1");
  if (!(step_scale >= 0.0) || !std::isfinite(step_scale)) throw Error("sgd step scale must be >= 0");
  if (!(radius > 0.0)) throw Error("sgd constraint radius must be positive");
  if (record_every < 1) throw Error("sgd record_every must be >= 1");
}

double default_step_scale(const RegularityConstants& rc, double radius) { return radius / rc.kappa; }

WeightFunctionSpec WeightFunctionSpec::frozen(double w) {
  WeightFunctionSpec s;
  s.kind = WeightKind::frozen;
  s.frozen_weight = w;
  return s;
}

WeightFunctionSpec WeightFunctionSpec::exact(const NoiseModel& nm, bool clamp) {
  WeightFunctionSpec s;
  s.kind = WeightKind::exact_debias;
  s.noise = &nm;
  s.clamp = clamp;
  return s;
}

void WeightFunctionSpec::validate() const {
  if (kind == WeightKind::frozen && !(frozen_weight >= 0.0 && frozen_weight <= 1.0)) {
    throw Error("frozen weight outside [0,1]");
  }
  if (kind == WeightKind::exact_debias && noise == nullptr) throw Error("exact_debias weights need a noise model");
}

namespace {

void check_finite(const Mat& g, const char* what, double w, double loss) {
  if (!g.allFinite() || !std::isfinite(w) || !std::isfinite(loss)) {
    throw Error(std::string("non-finite ") + what + " (weight=" + std::to_string(w) +
                ", loss=" + std::to_string(loss) + ")");
  }
}

}  // namespace

WeightedLoss weighted_loss_and_gradient(const LinearParams& theta, const Vec& x, const LabelVec& y,
                                        const WeightFunctionSpec& wspec, const LossSpec& spec) {
  wspec.validate();
  const Vec z = theta.logits(x);
  const double loss = cross_entropy(y, z, spec);
  const Vec g_loss = cross_entropy_logit_grad(y, z, spec);

  double w = 1.0;
  Vec g_w = Vec::Zero(z.size());
  switch (wspec.kind) {
    case WeightKind::unit:
      break;
    case WeightKind::frozen:
      w = wspec.frozen_weight;
      break;
    case WeightKind::exact_debias: {
      const NoiseModel& nm = *wspec.noise;
      const double p = nm.corrupt_prob(x);
      const LabelVec y_true = nm.clean_label(x);
      const LabelVec y_adv = nm.adversarial_label(x);
      const double l_true = cross_entropy(y_true, z, spec);
      if (!(l_true > kZeroLossFloor)) break;  // distortion := 1, w = 1, flat
      const double l_adv = cross_entropy(y_adv, z, spec);
      const double d = l_adv / l_true;
      const double raw = raw_debias_weight(p, d);
      if (wspec.clamp && raw > 1.0) break;  // clamped region: w = 1, gradient 0
      w = raw;
      // dD/dz = (g_adv l_true - l_adv g_true) / l_true^2 and dw/dz = -p w^2 dD/dz.
      const Vec g_adv = cross_entropy_logit_grad(y_adv, z, spec);
      const Vec g_true = cross_entropy_logit_grad(y_true, z, spec);
      const Vec g_d = (g_adv * l_true - l_adv * g_true) / (l_true * l_true);
      g_w = -p * w * w * g_d;
      break;
    }
  }
  WeightedLoss out;
  out.weight = w;
  out.loss = w * loss;
  out.grad = (loss * g_w + w * g_loss) * x.transpose();
  check_finite(out.grad, "weighted-loss gradient", w, loss);
  return out;
}

Mat weighted_loss_gradient(const LinearParams& theta, const Vec& x, const LabelVec& y,
                           const WeightFunctionSpec& wspec, const LossSpec& spec) {
  return weighted_loss_and_gradient(theta, x, y, wspec, spec).grad;
}

double weighted_loss(const LinearParams& theta, const Vec& x, const LabelVec& y, const WeightFunctionSpec& wspec,
                     const LossSpec& spec) {
  return weighted_loss_and_gradient(theta, x, y, wspec, spec).loss;
}

Mat finite_difference_gradient(const std::function<double(const Mat&)>& f, const Mat& at, double h) {
  Mat g(at.rows(), at.cols());
  Mat probe = at;
  for (Eigen::Index j = 0; j < at.cols(); ++j) {
    for (Eigen::Index i = 0; i < at.rows(); ++i) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

LinearParams project_frobenius(LinearParams theta) {
  const double norm = theta.theta.norm();
  if (norm > theta.radius) theta.theta *= theta.radius / norm;
  return theta;
}

namespace {

template <typename Draw>
LinearParams single_pass_loop(const NoiseModel& nm, const SgdConfig& cfg, const LossSpec& spec,
                              const IterateObserver& observer, Draw draw) {
  cfg.validate();
  spec.validate();
  LinearParams theta = LinearParams::zeros(nm.num_classes, nm.dim, cfg.radius);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const auto [x, y, wspec] = draw(t - 1);
    const Mat g = weighted_loss_gradient(theta, x, y, wspec, spec);
    theta.theta -= cfg.step(t) * g;
    theta = project_frobenius(std::move(theta));
    if (observer) observer(t, theta);
  }
  return theta;
}

struct StepInput {
  Vec x;
  LabelVec y;
  WeightFunctionSpec wspec;
};

}  // namespace

LinearParams sgd_single_pass(const NoiseModel& nm, const WeightFunctionSpec& wspec, const SgdConfig& cfg,
                             const LossSpec& spec, const IterateObserver& observer) {
  wspec.validate();
  return single_pass_loop(nm, cfg, spec, observer, [&](std::size_t i) {
    NoisyDraw d = draw_noisy(nm, cfg.seed, i);
    return StepInput{std::move(d.x), std::move(d.y), wspec};
  });
}

LinearParams sgd_single_pass_clean(const NoiseModel& nm, const SgdConfig& cfg, const LossSpec& spec,
                                   const IterateObserver& observer) {
  return single_pass_loop(nm, cfg, spec, observer, [&](std::size_t i) {
    NoisyDraw d = draw_clean(nm, cfg.seed, i);
    return StepInput{std::move(d.x), std::move(d.y), WeightFunctionSpec::unit()};
  });
}

namespace {

template <typename WeightAt>
std::vector<LinearParams> multi_pass_loop(const Dataset& data, const SgdConfig& cfg, const LossSpec& spec,
                                          const MultiPassOptions& opts, WeightAt weight_at) {
  cfg.validate();
  spec.validate();
  if (data.empty()) throw Error("multi-pass SGD needs a non-empty dataset");
  if (!data.labels_valid) throw Error("multi-pass SGD needs labeled data");
  const std::size_t n = data.size();
  LinearParams theta = opts.init.value_or(LinearParams::zeros(data.num_classes(), data.dim(), cfg.radius));
  theta.radius = cfg.radius;
  if (theta.num_classes() != data.num_classes() || theta.dim() != data.dim()) {
    throw Error("initial parameters do not match the dataset shape");
  }
  theta = project_frobenius(std::move(theta));

  std::vector<std::size_t> order(n);
  std::vector<LinearParams> iterates;
  iterates.reserve(cfg.iterations / cfg.record_every + 1);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    std::size_t idx = 0;
    if (cfg.sampling == Sampling::with_replacement) {
      idx = CounterRng::for_index(cfg.seed, Purpose::sgd_sample, t - 1).below(n);
    } else {
      const std::size_t pos = (t - 1) % n;
      if (pos == 0) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = CounterRng::for_index(cfg.seed, Purpose::shuffle, (t - 1) / n);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
      }
      idx = order[pos];
    }
    const Example& ex = data.examples[idx];
    const Mat g = weighted_loss_gradient(theta, ex.x, ex.y, weight_at(idx), spec);
    theta.theta -= cfg.step(t) * g;
    theta = project_frobenius(std::move(theta));
    if (opts.observer) opts.observer(t, theta);
    if (t % cfg.record_every == 0 || t == cfg.iterations) iterates.push_back(theta);
  }
  return iterates;
}

}  // namespace

std::vector<LinearParams> sgd_multi_pass(const Dataset& data, std::span<const double> weights,
                                         const SgdConfig& cfg, const LossSpec& spec,
                                         const MultiPassOptions& opts) {
  if (weights.size() != data.size()) throw Error("weight/data length mismatch");
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error("frozen weight outside [0,1]");
  }
  return multi_pass_loop(data, cfg, spec, opts,
                         [&](std::size_t i) { return WeightFunctionSpec::frozen(weights[i]); });
}

std::vector<LinearParams> sgd_multi_pass(const Dataset& data, const WeightFunctionSpec& wspec,
                                         const SgdConfig& cfg, const LossSpec& spec,
                                         const MultiPassOptions& opts) {
  wspec.validate();
  return multi_pass_loop(data, cfg, spec, opts, [&](std::size_t) { return wspec; });
}

std::size_t best_iterate_index(std::span<const LinearParams> iterates, const Dataset& heldout,
                               const LossSpec& spec) {
  if (iterates.empty()) throw Error("no iterates to select from");
  if (heldout.empty()) throw Error("held-out set is empty");
  std::size_t best = 0;
  double best_risk = empirical_risk(iterates[0], heldout, spec);
  for (std::size_t i = 1; i < iterates.size(); ++i) {
    const double r = empirical_risk(iterates[i], heldout, spec);
    if (r < best_risk) {
      best = i;
      best_risk = r;
    }
  }
  return best;
}

LinearParams best_iterate(std::span<const LinearParams> iterates, const Dataset& heldout, const LossSpec& spec) {
  return iterates[best_iterate_index(iterates, heldout, spec)];
}

}  // namespace wdistill
