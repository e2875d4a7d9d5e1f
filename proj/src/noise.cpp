#include "wdistill/noise.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace wdistill {

Vec NoiseModel::sample_x(CounterRng& rng) const {
  if (!support.empty()) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& pt : support) {
      acc += pt.mass;
      if (u < acc) return pt.x;
    }
    return support.back().x;
  }
  if (!x_sampler) throw Error("noise model has neither a sampler nor a finite support");
  return x_sampler(rng);
}

void NoiseModel::validate() const {
  if (dim < 1) throw Error("noise model dimension must be >= 1");
  if (num_classes < 2) throw Error("noise model needs at least 2 classes");
  if (!ground_truth || !corrupt_prob || !adversarial_label) throw Error("noise model is incomplete");
  if (!has_exact_support() && !x_sampler) throw Error("noise model has neither a sampler nor a finite support");
  if (has_exact_support()) {
    double total = 0.0;
    for (const auto& pt : support) {
      if (pt.mass < 0.0) throw Error("negative support mass");
      total += pt.mass;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("support masses do not sum to 1");
  }
}

NoisyDraw draw_clean(const NoiseModel& nm, std::uint64_t seed, std::uint64_t index) {
  auto rng = CounterRng::for_index(seed, Purpose::features, index);
  NoisyDraw d;
  d.x = nm.sample_x(rng);
  d.truth = nm.ground_truth(d.x);
  d.y = LabelVec::one_hot(nm.num_classes, d.truth);
  return d;
}

NoisyDraw draw_noisy(const NoiseModel& nm, std::uint64_t seed, std::uint64_t index) {
  NoisyDraw d = draw_clean(nm, seed, index);
  const double p = nm.corrupt_prob(d.x);
  if (!(p >= 0.0 && p <= 1.0)) throw Error("corruption probability outside [0,1]");
  auto coin = CounterRng::for_index(seed, Purpose::corruption, index);
  if (coin.uniform() < p) {
    d.y = nm.adversarial_label(d.x);
    d.corrupted = true;
  }
  return d;
}

namespace {

Dataset sample_with(const NoiseModel& nm, std::size_t n, std::uint64_t seed, bool noisy) {
  if (n == 0) throw Error("sample size must be >= 1");
  Dataset ds;
  ds.split = Split::labeled;
  ds.seed = seed;
  ds.examples.reserve(n);
  ds.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NoisyDraw d = noisy ? draw_noisy(nm, seed, i) : draw_clean(nm, seed, i);
    ds.truth.push_back(d.truth);
    ds.examples.push_back({std::move(d.x), std::move(d.y)});
  }
  return ds;
}

}  // namespace

Dataset sample_clean(const NoiseModel& nm, std::size_t n, std::uint64_t seed) {
  return sample_with(nm, n, seed, false);
}

Dataset sample_noisy(const NoiseModel& nm, std::size_t n, std::uint64_t seed) {
  return sample_with(nm, n, seed, true);
}

NoiseModel make_discrete_noise_model(std::vector<DiscretePoint> points, int num_classes) {
  if (points.empty()) throw Error("discrete noise model needs at least one point");
  auto shared = std::make_shared<const std::vector<DiscretePoint>>(std::move(points));
  auto find = [shared](const Vec& x) -> const DiscretePoint& {
    for (const auto& pt : *shared) {
      if (pt.x.size() == x.size() && pt.x == x) return pt;
    }
    throw Error("point is not in the discrete support");
  };
  NoiseModel nm;
  nm.dim = static_cast<int>(shared->front().x.size());
  nm.num_classes = num_classes;
  nm.ground_truth = [find](const Vec& x) { return find(x).truth; };
  nm.corrupt_prob = [find](const Vec& x) { return find(x).corrupt_prob; };
  nm.adversarial_label = [find](const Vec& x) { return find(x).adversarial; };
  for (const auto& pt : *shared) nm.support.push_back({pt.x, pt.mass});
  nm.validate();
  return nm;
}

double default_sphere_radius(int dim, double noise_level) {
  return std::ceil(std::sqrt(static_cast<double>(dim)) / noise_level);
}

namespace {

int sign_class(double v) { return v >= 0.0 ? 0 : 1; }

Vec random_unit(CounterRng& rng, int dim) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v / v.norm();
}

}  // namespace

SphereProblem make_sphere_instance(int dim, double noise_level, std::uint64_t seed,
                                   std::optional<double> radius) {
  if (dim < 2) throw Error("sphere instance needs dim >= 2");
  if (!(noise_level > 0.0 && noise_level < 1.0)) throw Error("noise level must lie in (0,1)");
  SphereInstance inst;
  inst.dim = dim;
  inst.noise_level = noise_level;
  inst.radius = radius.value_or(default_sphere_radius(dim, noise_level));
  if (!(inst.radius > 0.0)) throw Error("sphere radius must be positive");

  auto rng = CounterRng::for_index(seed, Purpose::sphere_setup, 0);
  inst.theta_star = random_unit(rng, dim);
  Vec u = random_unit(rng, dim);
  u -= u.dot(inst.theta_star) * inst.theta_star;
  u.normalize();
  const double phi = std::numbers::pi * noise_level;
  inst.theta_tilde = std::cos(phi) * inst.theta_star + std::sin(phi) * u;
  inst.theta_tilde.normalize();

  NoiseModel nm;
  nm.dim = dim;
  nm.num_classes = 2;
  const Vec star = inst.theta_star;
  const Vec tilde = inst.theta_tilde;
  const double R = inst.radius;
  nm.ground_truth = [star](const Vec& x) { return sign_class(star.dot(x)); };
  // Corruption is deterministic given x: the label flips exactly on the wedge
  // where the two hyperplanes disagree.
  nm.corrupt_prob = [star, tilde](const Vec& x) {
    return sign_class(star.dot(x)) != sign_class(tilde.dot(x)) ? 1.0 : 0.0;
  };
  nm.adversarial_label = [tilde](const Vec& x) { return LabelVec::one_hot(2, sign_class(tilde.dot(x))); };
  nm.x_sampler = [dim, R](CounterRng& rng) { return Vec(R * random_unit(rng, dim)); };
  return {std::move(inst), std::move(nm)};
}

namespace {

int nearest_mean(const Mat& means, const Vec& x, int generating) {
  const double d_gen = (means.row(generating).transpose() - x).squaredNorm();
  int best = generating;
  double best_d = d_gen;
  for (int k = 0; k < means.rows(); ++k) {
    const double dk = (means.row(k).transpose() - x).squaredNorm();
    if (dk < best_d) {
      best = k;
      best_d = dk;
    }
  }
  return best;
}

Dataset mixture_split(const MixtureSpec& spec, const Mat& means, std::uint64_t seed, Split split,
                      std::size_t offset, std::size_t n) {
  Dataset ds;
  ds.split = split;
  ds.seed = seed;
  ds.labels_valid = split != Split::unlabeled;
  ds.examples.reserve(n);
  ds.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t index = offset + i;
    auto pick = CounterRng::for_index(seed, Purpose::cluster_assign, index);
    const int cluster = static_cast<int>(pick.below(static_cast<std::uint64_t>(spec.num_classes)));
    auto rng = CounterRng::for_index(seed, Purpose::features, index);
    Vec x = means.row(cluster).transpose();
    for (int j = 0; j < spec.dim; ++j) x[j] += spec.noise_std * rng.normal();
    const int truth = nearest_mean(means, x, cluster);
    LabelVec y = ds.labels_valid ? LabelVec::one_hot(spec.num_classes, truth) : LabelVec::uniform(spec.num_classes);
    ds.truth.push_back(truth);
    ds.examples.push_back({std::move(x), std::move(y)});
  }
  return ds;
}

}  // namespace

MixtureTask synthetic_mixture_task(const MixtureSpec& spec, std::uint64_t seed) {
  if (spec.n_labeled < 1 || spec.n_unlabeled < 1 || spec.n_validation < 1 || spec.n_test < 1) {
    throw Error("every split needs at least one example");
  }
  if (spec.num_classes < 2) throw Error("mixture task needs at least 2 classes");
  if (spec.num_classes > spec.dim) throw Error("mixture task needs num_classes <= dim");
  if (!(spec.separation >= 0.0) || !(spec.noise_std >= 0.0)) throw Error("separation and noise_std must be >= 0");

  // Gram-Schmidt on Gaussian draws gives orthonormal directions; scaling by
  // separation / sqrt(2) makes every pairwise mean distance equal separation.
  auto rng = CounterRng::for_index(seed, Purpose::cluster_means, 0);
  Mat means(spec.num_classes, spec.dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    Vec v(spec.dim);
    for (int j = 0; j < spec.dim; ++j) v[j] = rng.normal();
    for (int prev = 0; prev < k; ++prev) {
      const Vec q = means.row(prev).transpose();
      v -= v.dot(q) * q;
    }
    means.row(k) = v.normalized().transpose();
  }
  means *= spec.separation / std::sqrt(2.0);

  MixtureTask task;
  task.means = means;
  std::size_t offset = 0;
  task.labeled = mixture_split(spec, means, seed, Split::labeled, offset, spec.n_labeled);
  offset += spec.n_labeled;
  task.unlabeled = mixture_split(spec, means, seed, Split::unlabeled, offset, spec.n_unlabeled);
  offset += spec.n_unlabeled;
  task.validation = mixture_split(spec, means, seed, Split::validation, offset, spec.n_validation);
  offset += spec.n_validation;
  task.test = mixture_split(spec, means, seed, Split::test, offset, spec.n_test);
  return task;
}

LinearParams nearest_mean_model(const MixtureTask& task) {
  LinearParams p{task.means, std::max(1.0, task.means.norm())};
  return p;
}

}  // namespace wdistill
