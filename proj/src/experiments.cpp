#include "wdistill/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numbers>

#include "wdistill/csv_io.hpp"
#include "wdistill/debias.hpp"
#include "wdistill/estimator.hpp"
#include "wdistill/optimize.hpp"
#include "wdistill/report.hpp"

namespace wdistill {

namespace fs = std::filesystem;

namespace {

struct IdName {
  ExperimentId id;
  const char* name;
};

constexpr IdName kIds[] = {
    {ExperimentId::debias_identity, "debias-identity"}, {ExperimentId::mse_grid, "mse-grid"},
    {ExperimentId::naive_fails, "naive-fails"},         {ExperimentId::sgd_convergence, "sgd-convergence"},
    {ExperimentId::knn_consistency, "knn-consistency"}, {ExperimentId::distill_e2e, "distill-e2e"},
    {ExperimentId::gradient_check, "gradient-check"},
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// Runs fn(0..n-1) concurrently and returns the results in trial order.
template <typename Fn>
auto run_trials(std::size_t n, Fn fn) {
  using T = decltype(fn(std::size_t{0}));
  std::vector<std::future<T>> futures;
  for (std::size_t k = 0; k < n; ++k) futures.push_back(std::async(std::launch::async, fn, k));
  std::vector<T> out;
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  MeanSe m;
  m.mean = pairwise_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m.mean) * (v[i] - m.mean);
  m.se = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return m;
}

template <typename E>
E parse_key(const KeyValueConfig& kv, const std::string& key, const std::string& fallback, E (*parse)(const std::string&)) {
  const std::string v = kv.get_string(key, fallback);
  try {
    return parse(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

double positive(const KeyValueConfig& kv, const std::string& key, double fallback) {
  const double v = kv.get_double(key, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "must be a positive finite number");
  return v;
}

std::size_t at_least_one(const KeyValueConfig& kv, const std::string& key, std::size_t fallback) {
  const std::size_t v = kv.get_count(key, fallback);
  if (v < 1) throw ConfigError(key, "must be >= 1");
  return v;
}

// ---------------------------------------------------------------- identity

NoiseModel identity_noise_model() {
  const int L = 3;
  auto adv = [&](std::initializer_list<double> p) {
    Vec v(L);
    int i = 0;
    for (double x : p) v[i++] = x;
    return LabelVec::from_probs(v);
  };
  auto pt = [](double a, double b, double c) { return (Vec(3) << a, b, c).finished(); };
  std::vector<DiscretePoint> points = {
      {pt(1.0, 0.0, 0.0), 0.20, 0, 0.0, LabelVec::one_hot(L, 1)},
      {pt(0.0, 1.0, 0.0), 0.15, 1, 0.1, LabelVec::one_hot(L, 2)},
      {pt(0.0, 0.0, 1.0), 0.10, 2, 0.3, LabelVec::one_hot(L, 0)},
      {pt(1.0, 1.0, 0.0), 0.10, 0, 0.5, adv({0.2, 0.3, 0.5})},
      {pt(1.0, -1.0, 0.5), 0.15, 1, 0.7, LabelVec::one_hot(L, 0)},
      {pt(-1.0, 0.5, 1.0), 0.10, 2, 0.9, adv({0.6, 0.4, 0.0})},
      {pt(0.5, 0.5, -1.0), 0.10, 0, 0.2, LabelVec::one_hot(L, 2)},
      {pt(-0.5, -1.0, -0.5), 0.10, 1, 0.4, adv({0.1, 0.1, 0.8})},
  };
  return make_discrete_noise_model(std::move(points), L);
}

struct IdentityTrial {
  RiskDecomposition exact;
  double bias = 0.0;
  MeanSe mc_weighted;
  MeanSe mc_unweighted;
  std::vector<WeightRecord> weights;
};

ExperimentResult run_debias_identity(const ExperimentConfig& cfg) {
  const KeyValueConfig& kv = cfg.params;
  const std::size_t samples = kv.get_count("identity.mc_samples", 100000);
  if (samples < 2) throw ConfigError("identity.mc_samples", "must be >= 2");
  const double scale = positive(kv, "identity.model_scale", 1.0);
  const LossSpec spec{LossKind::cross_entropy_soft, positive(kv, "identity.temperature", 1.0)};
  kv.reject_unused();
  const NoiseModel nm = identity_noise_model();

  auto trials = run_trials(cfg.trials, [&](std::size_t k) {
    const std::uint64_t ts = trial_seed(cfg.seed, k);
    auto rng = CounterRng::for_index(ts, Purpose::trial, 0);
    LinearParams model = LinearParams::zeros(nm.num_classes, nm.dim, 1e9);
    for (Eigen::Index i = 0; i < model.theta.size(); ++i) model.theta.data()[i] = scale * rng.normal();

    IdentityTrial t;
    t.exact = exact_risk_decomposition(nm, model, spec, /*clamp_weights=*/false);
    t.bias = bias_functional(nm, model, spec).value;
    for (const auto& sp : nm.support) {
      const PointTerms terms = point_terms(nm, model, sp.x, spec);
      t.weights.push_back(debias_weight(terms.p, terms.distortion));
    }

    const Dataset draws = sample_noisy(nm, samples, derive_seed(ts, static_cast<std::uint64_t>(Purpose::monte_carlo)));
    std::vector<double> weighted(samples), unweighted(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      const Example& ex = draws.examples[i];
      const PointTerms terms = point_terms(nm, model, ex.x, spec);
      const double loss = cross_entropy(ex.y, model.logits(ex.x), spec);
      unweighted[i] = loss;
      weighted[i] = raw_debias_weight(terms.p, terms.distortion) * loss;
    }
    t.mc_weighted = mean_se(weighted);
    t.mc_unweighted = mean_se(unweighted);
    return t;
  });

  ExperimentResult res;
  res.id = cfg.id;
  CsvTable table;
  table.header = {"trial",       "clean_risk",       "noisy_risk",         "weighted_risk", "bias",
                  "mc_weighted", "mc_weighted_se",   "mc_unweighted",      "mc_unweighted_se"};
  double exact_err = 0.0, max_z = 0.0;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& t = trials[k];
    const double e1 = std::abs(t.exact.weighted_risk - t.exact.clean_risk);
    const double e2 = std::abs(t.exact.noisy_risk - (t.exact.clean_risk + t.bias));
    const double z1 = std::abs(t.mc_weighted.mean - t.exact.clean_risk) / t.mc_weighted.se;
    const double z2 = std::abs(t.mc_unweighted.mean - t.exact.noisy_risk) / t.mc_unweighted.se;
    exact_err = std::max({exact_err, e1, e2});
    max_z = std::max({max_z, z1, z2});
    table.rows.push_back({static_cast<double>(k), t.exact.clean_risk, t.exact.noisy_risk, t.exact.weighted_risk,
                          t.bias, t.mc_weighted.mean, t.mc_weighted.se, t.mc_unweighted.mean, t.mc_unweighted.se});
    save_weight_csv(t.weights, cfg.out_dir / ("weights_identity_trial" + std::to_string(k) + ".csv"));
    res.lines.push_back("trial " + std::to_string(k) + ": clean " + fmt("%.6f", t.exact.clean_risk) + " weighted " +
                        fmt("%.6f", t.exact.weighted_risk) + " bias " + fmt("%.6f", t.bias) + " mc z " +
                        fmt("%.2f", std::max(z1, z2)));
  }
  write_csv_table(table, cfg.out_dir / "debias_identity.csv");
  res.metrics["exact_max_error"] = exact_err;
  res.metrics["mc_max_z"] = max_z;
  res.metrics["mc_samples"] = static_cast<double>(samples);
  res.metrics["support_size"] = static_cast<double>(nm.support.size());
  return res;
}

// ---------------------------------------------------------------- mse grid

ExperimentResult run_mse_grid(const ExperimentConfig& cfg) {
  const KeyValueConfig& kv = cfg.params;
  const std::size_t np = kv.get_count("grid.p_points", 101);
  const std::size_t nd = kv.get_count("grid.d_points", 301);
  if (np < 2) throw ConfigError("grid.p_points", "must be >= 2");
  if (nd < 2) throw ConfigError("grid.d_points", "must be >= 2");
  const double d_max = positive(kv, "grid.d_max", 3.0);
  const double loss = positive(kv, "grid.loss", 1.0);
  const double tol = positive(kv, "grid.tolerance", 1e-9);
  kv.reject_unused();

  CsvTable table;
  table.header = {"p", "distortion", "mse_unweighted", "mse_weighted", "predicate", "direct", "violation"};
  std::size_t skipped = 0, violations = 0, predicate_true = 0;
  double algebra_err = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    const double p = static_cast<double>(i) / static_cast<double>(np - 1);
    for (std::size_t j = 0; j < nd; ++j) {
      const double d = d_max * static_cast<double>(j) / static_cast<double>(nd - 1);
      const double denom = 1.0 + p * (d - 1.0);
      // Only (p, d) = (1, 0) lands here: the weight is undefined.
      if (!(denom > kWeightDenominatorGuard)) {
        ++skipped;
        continue;
      }
      const MsePair m = mse_pair(p, loss, d);
      const double closed = p * (1.0 - p) * (1.0 - d) * (1.0 - d) * loss * loss / (denom * denom);
      algebra_err = std::max(algebra_err, std::abs(m.weighted - closed));
      const double gap = m.weighted - m.unweighted;
      const bool predicate = mse_crossover_predicate(p, d);
      const bool direct = gap > tol;
      const bool violation = predicate != direct && std::abs(gap) > tol;
      predicate_true += predicate ? 1 : 0;
      violations += violation ? 1 : 0;
      table.rows.push_back({p, d, m.unweighted, m.weighted, predicate ? 1.0 : 0.0, direct ? 1.0 : 0.0,
                            violation ? 1.0 : 0.0});
    }
  }
  write_csv_table(table, cfg.out_dir / "mse_grid.csv");

  ExperimentResult res;
  res.id = cfg.id;
  res.lines.push_back("grid " + std::to_string(np) + "x" + std::to_string(nd) + ": evaluated " +
                      std::to_string(table.rows.size()) + ", skipped " + std::to_string(skipped) + ", violations " +
                      std::to_string(violations));
  res.metrics["grid_points"] = static_cast<double>(np * nd);
  res.metrics["evaluated"] = static_cast<double>(table.rows.size());
  res.metrics["skipped"] = static_cast<double>(skipped);
  res.metrics["violations"] = static_cast<double>(violations);
  res.metrics["predicate_true"] = static_cast<double>(predicate_true);
  res.metrics["algebra_max_error"] = algebra_err;
  return res;
}

// ---------------------------------------------------------------- sphere

struct SphereSettings {
  int dim = 10;
  double noise = 0.2;
  std::optional<double> radius;
  std::size_t iterations = 100000;
  double step_multiplier = 1.0;
  std::size_t test_size = 100000;
  std::size_t probe_size = 2000;
  std::size_t log_every = 10000;
};

SphereSettings sphere_settings(const KeyValueConfig& kv) {
  SphereSettings s;
  const auto dim = kv.get_int("sphere.dim", 10);
  if (dim < 2) throw ConfigError("sphere.dim", "must be >= 2");
  s.dim = static_cast<int>(dim);
  s.noise = kv.get_double("sphere.noise", 0.2);
  if (!(s.noise > 0.0 && s.noise < 1.0)) throw ConfigError("sphere.noise", "must lie in (0, 1)");
  if (kv.has("sphere.radius")) s.radius = positive(kv, "sphere.radius", 1.0);
  s.iterations = at_least_one(kv, "sphere.iterations", s.iterations);
  s.step_multiplier = positive(kv, "sphere.step_multiplier", 1.0);
  s.test_size = at_least_one(kv, "sphere.test_size", s.test_size);
  s.probe_size = at_least_one(kv, "sphere.probe_size", s.probe_size);
  s.log_every = kv.get_count("sphere.log_every", s.log_every);
  return s;
}

struct SphereRun {
  double clean_risk = 0.0;
  double clean_error = 0.0;
  std::vector<TrajectoryPoint> trajectory;
};

double zero_one_error(const LinearParams& model, const Dataset& data) { return 1.0 - accuracy(model, data); }

// Trains one single-pass learner and evaluates its clean risk. `clean`
// selects the clean-stream reference.
SphereRun sphere_run(const SphereProblem& prob, const SphereSettings& s, const WeightFunctionSpec& wspec, bool clean,
                     std::uint64_t ts) {
  const LossSpec spec{LossKind::binary_cross_entropy, 1.0};
  const RegularityConstants rc = regularity_constants(spec, prob.instance.radius, {}, 2);
  SgdConfig sgd;
  sgd.iterations = s.iterations;
  sgd.radius = 1.0;
  sgd.step_scale = s.step_multiplier * default_step_scale(rc, sgd.radius);
  sgd.seed = derive_seed(ts, static_cast<std::uint64_t>(Purpose::sgd_sample));

  const std::uint64_t test_seed = derive_seed(ts, static_cast<std::uint64_t>(Purpose::test_data));
  const Dataset probe_clean = sample_clean(prob.model, s.probe_size, derive_seed(test_seed, 1));
  const Dataset probe_noisy = sample_noisy(prob.model, s.probe_size, derive_seed(test_seed, 1));

  SphereRun run;
  IterateObserver observer;
  if (s.log_every > 0) {
    observer = [&](std::size_t t, const LinearParams& theta) {
      if (t % s.log_every != 0) return;
      const Dataset& train = clean ? probe_clean : probe_noisy;
      std::vector<double> terms(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        terms[i] = weighted_loss(theta, train.examples[i].x, train.examples[i].y, wspec, spec);
      }
      TrajectoryPoint pt;
      pt.step = t;
      pt.frobenius_norm = theta.frobenius_norm();
      pt.train_loss = pairwise_sum(terms) / static_cast<double>(terms.size());
      pt.heldout_loss = empirical_risk(theta, probe_clean, spec);
      run.trajectory.push_back(pt);
    };
  }
  const LinearParams theta =
      clean ? sgd_single_pass_clean(prob.model, sgd, spec, observer) : sgd_single_pass(prob.model, wspec, sgd, spec, observer);
  const Dataset test = sample_clean(prob.model, s.test_size, test_seed);
  run.clean_risk = empirical_risk(theta, test, spec);
  run.clean_error = zero_one_error(theta, test);
  return run;
}

ExperimentResult run_sphere(const ExperimentConfig& cfg) {
  const SphereSettings s = sphere_settings(cfg.params);
  const double eps = positive(cfg.params, "sphere.epsilon", 0.05);
  cfg.params.reject_unused();
  const bool naive = cfg.id == ExperimentId::naive_fails;
  const std::string other = naive ? "naive" : "debiased";

  struct Pair {
    SphereRun reference;
    SphereRun candidate;
    double radius = 0.0;
  };
  auto trials = run_trials(cfg.trials, [&](std::size_t k) {
    const std::uint64_t ts = trial_seed(cfg.seed, k);
    const SphereProblem prob =
        make_sphere_instance(s.dim, s.noise, derive_seed(ts, static_cast<std::uint64_t>(Purpose::sphere_setup)), s.radius);
    // The identity only holds for the unprojected weight.
    const WeightFunctionSpec wspec =
        naive ? WeightFunctionSpec::unit() : WeightFunctionSpec::exact(prob.model, /*clamp=*/false);
    Pair p;
    p.radius = prob.instance.radius;
    p.reference = sphere_run(prob, s, WeightFunctionSpec::unit(), true, ts);
    p.candidate = sphere_run(prob, s, wspec, false, ts);
    return p;
  });

  ExperimentResult res;
  res.id = cfg.id;
  CsvTable table;
  table.header = {"trial", "reference_risk", other + "_risk", "gap", "reference_error", other + "_error"};
  double sum_gap = 0.0, max_abs_gap = 0.0;
  std::size_t within = 0;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& p = trials[k];
    const double gap = p.candidate.clean_risk - p.reference.clean_risk;
    sum_gap += gap;
    max_abs_gap = std::max(max_abs_gap, std::abs(gap));
    within += std::abs(gap) <= eps ? 1 : 0;
    table.rows.push_back({static_cast<double>(k), p.reference.clean_risk, p.candidate.clean_risk, gap,
                          p.reference.clean_error, p.candidate.clean_error});
    const std::string suffix = "_trial" + std::to_string(k) + ".csv";
    if (!p.reference.trajectory.empty()) {
      save_trajectory_csv(p.reference.trajectory, cfg.out_dir / ("trajectory_reference" + suffix));
      save_trajectory_csv(p.candidate.trajectory, cfg.out_dir / ("trajectory_" + other + suffix));
    }
    res.lines.push_back("trial " + std::to_string(k) + ": R " + fmt("%g", p.radius) + " reference " +
                        fmt("%.4f", p.reference.clean_risk) + " " + other + " " + fmt("%.4f", p.candidate.clean_risk) +
                        " gap " + fmt("%+.4f", gap));
  }
  write_csv_table(table, cfg.out_dir / (naive ? "naive_fails.csv" : "sgd_convergence.csv"));
  res.metrics["mean_gap"] = sum_gap / static_cast<double>(trials.size());
  res.metrics["max_abs_gap"] = max_abs_gap;
  res.metrics["trials_within_epsilon"] = static_cast<double>(within);
  res.metrics["epsilon"] = eps;
  res.metrics["noise_level"] = s.noise;
  res.metrics["trials"] = static_cast<double>(trials.size());
  return res;
}

// ---------------------------------------------------------------- gradient

LabelVec random_label(CounterRng& rng, int L) {
  if (rng.bernoulli(0.5)) return LabelVec::one_hot(L, static_cast<int>(rng.below(L)));
  Vec p(L);
  for (int i = 0; i < L; ++i) p[i] = std::exp(rng.normal());
  return LabelVec::from_probs(p / p.sum());
}

ExperimentResult run_gradient_check(const ExperimentConfig& cfg) {
  const KeyValueConfig& kv = cfg.params;
  const std::size_t configs = at_least_one(kv, "gradient.configs", 100);
  const double h = positive(kv, "gradient.step", 1e-5);
  const double scale = positive(kv, "gradient.model_scale", 0.5);
  kv.reject_unused();
  const WeightKind modes[] = {WeightKind::unit, WeightKind::frozen, WeightKind::exact_debias, WeightKind::exact_debias};

  ExperimentResult res;
  res.id = cfg.id;
  CsvTable table;
  table.header = {"mode", "config", "relative_error"};
  double overall = 0.0;
  for (std::size_t m = 0; m < 4; ++m) {
    const bool clamped = m == 3;
    double worst = 0.0;
    for (std::size_t c = 0, attempt = 0; c < configs; ++attempt) {
      auto rng = CounterRng::for_index(derive_seed(cfg.seed, m), Purpose::trial, attempt);
      const int L = 2 + static_cast<int>(rng.below(4));
      const int d = 1 + static_cast<int>(rng.below(6));
      LossSpec spec;
      spec.kind = L == 2 && rng.bernoulli(0.5) ? LossKind::binary_cross_entropy : LossKind::cross_entropy_soft;
      spec.temperature = 0.5 + 1.5 * rng.uniform();
      LinearParams theta = LinearParams::zeros(L, d, 1e9);
      for (Eigen::Index i = 0; i < theta.theta.size(); ++i) theta.theta.data()[i] = scale * rng.normal();
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = rng.normal();
      const LabelVec y = random_label(rng, L);

      NoiseModel nm;
      WeightFunctionSpec wspec;
      if (modes[m] == WeightKind::frozen) {
        wspec = WeightFunctionSpec::frozen(rng.uniform());
      } else if (modes[m] == WeightKind::exact_debias) {
        DiscretePoint pt{x, 1.0, static_cast<int>(rng.below(L)), rng.uniform(), random_label(rng, L)};
        nm = make_discrete_noise_model({pt}, L);
        wspec = WeightFunctionSpec::exact(nm, clamped);
        if (clamped) {
          // The projection has a kink at raw weight 1.
          const PointTerms t = point_terms(nm, theta, x, spec);
          if (std::abs(raw_debias_weight(t.p, t.distortion) - 1.0) < 1e-3) continue;
        }
      }

      const Mat analytic = weighted_loss_gradient(theta, x, y, wspec, spec);
      const Mat numeric = finite_difference_gradient(
          [&](const Mat& th) { return weighted_loss(LinearParams{th, theta.radius}, x, y, wspec, spec); }, theta.theta, h);
      const double rel = (analytic - numeric).norm() / std::max(numeric.norm(), 1e-300);
      worst = std::max(worst, rel);
      table.rows.push_back({static_cast<double>(m), static_cast<double>(c), rel});
      ++c;
    }
    static const char* names[] = {"unit", "frozen", "exact_debias", "exact_debias_clamped"};
    res.metrics[std::string("max_relative_error_") + names[m]] = worst;
    res.lines.push_back(std::string("mode ") + names[m] + ": " + std::to_string(configs) +
                        " configs, max relative error " + fmt("%.3e", worst));
    overall = std::max(overall, worst);
  }
  write_csv_table(table, cfg.out_dir / "gradient_check.csv");
  res.metrics["max_relative_error"] = overall;
  res.metrics["configs_per_mode"] = static_cast<double>(configs);
  return res;
}

// ---------------------------------------------------------------- knn

// Known Lipschitz map from the confidence plane to the corruption
// probability and the distortion of corrupted examples.
double synthetic_p(double t, double s) { return 0.05 + 0.9 * (1.0 - t) * (0.75 + 0.25 * s); }
double synthetic_distortion(double s) { return 1.0 + 2.0 * s; }

ValidationIndex synthetic_index(std::size_t n, std::uint64_t seed) {
  ValidationIndex index;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = CounterRng::for_index(seed, Purpose::features, i);
    const double t = rng.uniform();
    const double s = rng.uniform();
    const bool corrupted = rng.bernoulli(synthetic_p(t, s));
    index.points.push_back({t, s});
    index.responses.push_back(corrupted ? Point2{1.0, synthetic_distortion(s)} : Point2{0.0, 1.0});
  }
  index.k = neighbor_count(n);
  index.validate();
  return index;
}

ExperimentResult run_knn_consistency(const ExperimentConfig& cfg) {
  const KeyValueConfig& kv = cfg.params;
  const auto sizes = kv.get_counts("knn.sizes", {100, 400, 1600});
  for (auto n : sizes) {
    if (n < 4) throw ConfigError("knn.sizes", "every size must be >= 4");
  }
  const std::size_t queries = at_least_one(kv, "knn.queries", 1000);
  kv.reject_unused();

  struct Cell {
    std::size_t k = 0;
    double mae_p = 0.0;
    double mae_d = 0.0;
  };
  auto trials = run_trials(cfg.trials, [&](std::size_t j) {
    const std::uint64_t ts = trial_seed(cfg.seed, j);
    std::vector<Cell> cells;
    for (std::size_t n : sizes) {
      const ValidationIndex index = synthetic_index(n, ts);
      std::vector<double> ep(queries), ed(queries);
      for (std::size_t q = 0; q < queries; ++q) {
        auto rng = CounterRng::for_index(ts, Purpose::test_data, q);
        const double t = rng.uniform();
        const double s = rng.uniform();
        const double p = synthetic_p(t, s);
        const KnnEstimate est = knn_estimate(index, Point2{t, s});
        ep[q] = std::abs(est.p_hat - p);
        ed[q] = std::abs(est.distortion_hat - (1.0 + p * (synthetic_distortion(s) - 1.0)));
      }
      cells.push_back({index.k, pairwise_sum(ep) / static_cast<double>(queries),
                       pairwise_sum(ed) / static_cast<double>(queries)});
    }
    return cells;
  });

  ExperimentResult res;
  res.id = cfg.id;
  CsvTable table;
  table.header = {"size", "k", "trial", "mae_p", "mae_distortion"};
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    double mp = 0.0, md = 0.0;
    for (std::size_t j = 0; j < trials.size(); ++j) {
      const Cell& c = trials[j][a];
      table.rows.push_back({static_cast<double>(sizes[a]), static_cast<double>(c.k), static_cast<double>(j), c.mae_p,
                            c.mae_d});
      mp += c.mae_p / static_cast<double>(trials.size());
      md += c.mae_d / static_cast<double>(trials.size());
    }
    const std::string n = std::to_string(sizes[a]);
    res.metrics["k_" + n] = static_cast<double>(trials.front()[a].k);
    res.metrics["mae_p_" + n] = mp;
    res.metrics["mae_distortion_" + n] = md;
    res.lines.push_back("|V| = " + n + ": k " + std::to_string(trials.front()[a].k) + ", mean MAE p " +
                        fmt("%.4f", mp) + ", distortion " + fmt("%.4f", md));
    save_index_csv(synthetic_index(sizes[a], trial_seed(cfg.seed, 0)), cfg.out_dir / ("index_n" + n + ".csv"));
  }
  write_csv_table(table, cfg.out_dir / "knn_consistency.csv");
  return res;
}

// ---------------------------------------------------------------- e2e

SgdConfig phase_sgd(const KeyValueConfig& kv, const std::string& phase, std::uint64_t seed) {
  auto key = [&](const std::string& name) {
    const std::string specific = phase + "." + name;
    return kv.has(specific) ? specific : "sgd." + name;
  };
  SgdConfig c;
  c.iterations = at_least_one(kv, key("iterations"), 20000);
  c.step_scale = positive(kv, key("step_scale"), 20.0);
  c.radius = positive(kv, key("radius"), 20.0);
  const std::string schedule = kv.get_string(key("schedule"), "constant");
  if (schedule == "constant") {
    c.schedule = StepSchedule::constant;
  } else if (schedule == "inverse_sqrt") {
    c.schedule = StepSchedule::inverse_sqrt;
  } else {
    throw ConfigError(key("schedule"), "expected constant or inverse_sqrt");
  }
  const std::string sampling = kv.get_string(key("sampling"), "with_replacement");
  if (sampling == "with_replacement") {
    c.sampling = Sampling::with_replacement;
  } else if (sampling == "permutation") {
    c.sampling = Sampling::permutation;
  } else {
    throw ConfigError(key("sampling"), "expected with_replacement or permutation");
  }
  c.seed = seed;
  return c;
}

}  // namespace

std::string to_string(ExperimentId id) {
  for (const auto& e : kIds) {
    if (e.id == id) return e.name;
  }
  return "unknown";
}

ExperimentId parse_experiment_id(const std::string& s) {
  for (const auto& e : kIds) {
    if (s == e.name) return e.id;
  }
  throw Error("unknown experiment '" + s + "'");
}

const std::vector<ExperimentId>& all_experiments() {
  static const std::vector<ExperimentId> ids = [] {
    std::vector<ExperimentId> v;
    for (const auto& e : kIds) v.push_back(e.id);
    return v;
  }();
  return ids;
}

std::size_t default_trials(ExperimentId id) {
  switch (id) {
    case ExperimentId::debias_identity: return 5;
    case ExperimentId::naive_fails:
    case ExperimentId::sgd_convergence:
    case ExperimentId::distill_e2e: return 5;
    case ExperimentId::knn_consistency: return 10;
    case ExperimentId::mse_grid:
    case ExperimentId::gradient_check: return 1;
  }
  return 1;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(Purpose::trial)), trial);
}

ExperimentConfig experiment_config_from(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.id = parse_key(kv, "experiment", "", parse_experiment_id);
  cfg.out_dir = kv.get_string("out", "out");
  cfg.seed = kv.get_u64("seed", 0);
  cfg.trials = kv.get_count("trials", default_trials(cfg.id));
  if (cfg.trials < 1) throw ConfigError("trials", "must be >= 1");
  cfg.params = kv;
  return cfg;
}

MixtureSpec mixture_spec_from(const KeyValueConfig& kv) {
  MixtureSpec s;
  s.dim = static_cast<int>(kv.get_int("mixture.dim", 10));
  s.num_classes = static_cast<int>(kv.get_int("mixture.classes", 4));
  if (s.dim < 1) throw ConfigError("mixture.dim", "must be >= 1");
  if (s.num_classes < 2 || s.num_classes > s.dim) throw ConfigError("mixture.classes", "must lie in [2, mixture.dim]");
  s.n_labeled = at_least_one(kv, "mixture.n_labeled", 40);
  s.n_unlabeled = at_least_one(kv, "mixture.n_unlabeled", 4000);
  s.n_validation = at_least_one(kv, "mixture.n_validation", 2000);
  s.n_test = at_least_one(kv, "mixture.n_test", 5000);
  s.separation = kv.get_double("mixture.separation", 3.0);
  if (!(s.separation >= 0.0)) throw ConfigError("mixture.separation", "must be >= 0");
  s.noise_std = positive(kv, "mixture.noise_std", 1.0);
  return s;
}

DistillConfig distill_config_from(const KeyValueConfig& kv, int teacher_dim, std::uint64_t seed) {
  DistillConfig c;
  c.teacher_dim = teacher_dim;
  c.student_dim = static_cast<int>(kv.get_int("distill.student_dim", std::min(6, teacher_dim)));
  if (c.student_dim < 1 || c.student_dim > teacher_dim) {
    throw ConfigError("distill.student_dim", "must lie in [1, " + std::to_string(teacher_dim) + "]");
  }
  c.label_mode = parse_key(kv, "distill.label_mode", "hard", parse_label_mode);
  c.refresh = at_least_one(kv, "distill.refresh", 1);
  c.scheme = parse_key(kv, "distill.scheme", "ours", parse_weight_scheme);
  c.metric = parse_key(kv, "distill.metric", "margin", parse_metric);
  c.temperature = positive(kv, "distill.temperature", 1.0);
  c.log_every = kv.get_count("distill.log_every", 1000);
  c.histogram_bins = at_least_one(kv, "distill.histogram_bins", 10);
  c.merge_validation = kv.get_bool("distill.merge_validation", false);
  c.seed = seed;
  const std::uint64_t sgd_seed = derive_seed(seed, static_cast<std::uint64_t>(Purpose::sgd_sample));
  c.teacher_sgd = phase_sgd(kv, "teacher", derive_seed(sgd_seed, 0));
  c.pretrain_sgd = phase_sgd(kv, "pretrain", derive_seed(sgd_seed, 1));
  c.student_sgd = phase_sgd(kv, "student", derive_seed(sgd_seed, 2));
  return c;
}

DistillSplits distill_splits_from(const KeyValueConfig& kv, std::uint64_t seed) {
  DistillSplits s;
  if (kv.has("data.labeled")) {
    const auto classes = kv.get_int("data.classes", 0);
    std::optional<int> L;
    if (classes != 0) {
      if (classes < 2) throw ConfigError("data.classes", "must be >= 2");
      L = static_cast<int>(classes);
    }
    s.labeled = load_csv(kv.require_string("data.labeled"), L, Split::labeled);
    if (!L) L = s.labeled.num_classes();
    s.unlabeled = load_csv(kv.require_string("data.unlabeled"), L, Split::unlabeled);
    s.unlabeled.labels_valid = false;
    s.validation = load_csv(kv.require_string("data.validation"), L, Split::validation);
    s.test = load_csv(kv.require_string("data.test"), L, Split::test);
    return s;
  }
  MixtureTask task = synthetic_mixture_task(mixture_spec_from(kv), seed);
  s.labeled = std::move(task.labeled);
  s.unlabeled = std::move(task.unlabeled);
  s.validation = std::move(task.validation);
  s.test = std::move(task.test);
  return s;
}

void write_distill_outputs(const DistillReport& report, std::size_t labeled_count, std::size_t trial,
                           const fs::path& out_dir) {
  const std::string suffix = "_trial" + std::to_string(trial);
  write_json(report_to_json(report), out_dir / ("report" + suffix + ".json"));

  // S_l (and a merged S_v) always trains with weight exactly 1.
  const std::vector<WeightRecord> base(labeled_count, WeightRecord{});
  save_weight_csv(base, out_dir / ("weights_labeled" + suffix + ".csv"));

  const SchemeRun& run = report.primary;
  std::vector<WeightRecord> pool;
  for (std::size_t i = 0; i < run.weights.size(); ++i) {
    WeightRecord r = i < run.records.size() ? run.records[i] : WeightRecord{0.0, 1.0, run.weights[i], run.weights[i], false};
    // Composition keeps the debiasing estimate and reports the product weight.
    r.weight = run.weights[i];
    pool.push_back(r);
  }
  if (!pool.empty()) save_weight_csv(pool, out_dir / ("weights_unlabeled" + suffix + ".csv"));

  for (const SchemeRun* r : {&report.primary, &report.baseline}) {
    if (r->trajectory.empty()) continue;
    save_trajectory_csv(r->trajectory, out_dir / ("trajectory_" + to_string(r->scheme) + suffix + ".csv"));
  }
  export_plot_data(report, out_dir / ("plots" + suffix));
}

namespace {

ExperimentResult run_distill_e2e(const ExperimentConfig& cfg) {
  const KeyValueConfig& kv = cfg.params;
  // Parse once up front so configuration errors surface before any work.
  (void)distill_config_from(kv, mixture_spec_from(kv).dim, 0);
  kv.reject_unused();

  struct Trial {
    DistillReport report;
    std::size_t base = 0;
  };
  auto trials = run_trials(cfg.trials, [&](std::size_t k) {
    const std::uint64_t ts = trial_seed(cfg.seed, k);
    const DistillSplits s = distill_splits_from(kv, ts);
    const DistillConfig dc = distill_config_from(kv, s.labeled.dim(), ts);
    Trial t;
    t.report = run_distillation(s.labeled, s.unlabeled, s.validation, s.test, dc);
    t.base = s.labeled.size() + (dc.merge_validation ? s.validation.size() : 0);
    return t;
  });

  ExperimentResult res;
  res.id = cfg.id;
  CsvTable table;
  table.header = {"trial", "teacher_test_accuracy", "teacher_unlabeled_accuracy", "pretrain_test_accuracy",
                  "primary_accuracy", "unit_accuracy", "improvement", "weight_correctness_corr"};
  double sum_diff = 0.0, sum_corr = 0.0;
  double min_corr = 1.0, tmin = 1.0, tmax = 0.0;
  std::size_t positive_trials = 0;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const DistillReport& r = trials[k].report;
    const double diff = r.primary.final_accuracy - r.baseline.final_accuracy;
    const double corr = r.primary.weight_correctness_corr;
    sum_diff += diff;
    sum_corr += corr;
    min_corr = std::min(min_corr, corr);
    tmin = std::min(tmin, r.teacher_test_accuracy);
    tmax = std::max(tmax, r.teacher_test_accuracy);
    positive_trials += diff > 0.0 ? 1 : 0;
    table.rows.push_back({static_cast<double>(k), r.teacher_test_accuracy, r.teacher_unlabeled_accuracy,
                          r.pretrain_test_accuracy, r.primary.final_accuracy, r.baseline.final_accuracy, diff,
                          std::isfinite(corr) ? corr : 0.0});
    write_distill_outputs(r, trials[k].base, k, cfg.out_dir);
    res.lines.push_back("trial " + std::to_string(k) + ": teacher " + fmt("%.4f", r.teacher_test_accuracy) + " " +
                        to_string(r.primary.scheme) + " " + fmt("%.4f", r.primary.final_accuracy) + " unit " +
                        fmt("%.4f", r.baseline.final_accuracy) + " diff " + fmt("%+.4f", diff) + " corr " +
                        fmt("%.3f", corr));
  }
  write_csv_table(table, cfg.out_dir / "distill_e2e.csv");
  const double n = static_cast<double>(trials.size());
  res.metrics["mean_improvement"] = sum_diff / n;
  res.metrics["mean_weight_correctness_corr"] = sum_corr / n;
  res.metrics["min_weight_correctness_corr"] = min_corr;
  res.metrics["teacher_accuracy_min"] = tmin;
  res.metrics["teacher_accuracy_max"] = tmax;
  res.metrics["positive_trials"] = static_cast<double>(positive_trials);
  res.metrics["trials"] = n;
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("trials", "must be >= 1");
  fs::create_directories(cfg.out_dir);
  ExperimentResult res;
  switch (cfg.id) {
    case ExperimentId::debias_identity: res = run_debias_identity(cfg); break;
    case ExperimentId::mse_grid: res = run_mse_grid(cfg); break;
    case ExperimentId::naive_fails:
    case ExperimentId::sgd_convergence: res = run_sphere(cfg); break;
    case ExperimentId::knn_consistency: res = run_knn_consistency(cfg); break;
    case ExperimentId::distill_e2e: res = run_distill_e2e(cfg); break;
    case ExperimentId::gradient_check: res = run_gradient_check(cfg); break;
  }
  return res;
}

}  // namespace wdistill
