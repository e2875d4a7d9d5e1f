#include "wdistill/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace wdistill {

std::string to_string(LabelMode mode) { return mode == LabelMode::soft ? "soft" : "hard"; }

std::string to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::ours: return "ours";
    case WeightScheme::fidelity: return "fidelity";
    case WeightScheme::composition: return "composition";
    case WeightScheme::unit: return "unit";
  }
  return "unknown";
}

std::string to_string(ConfidenceMetric metric) { return metric == ConfidenceMetric::margin ? "margin" : "entropy"; }

LabelMode parse_label_mode(const std::string& s) {
  if (s == "soft") return LabelMode::soft;
  if (s == "hard") return LabelMode::hard;
  throw Error("unknown label mode '" + s + "'");
}

WeightScheme parse_weight_scheme(const std::string& s) {
  if (s == "ours") return WeightScheme::ours;
  if (s == "fidelity") return WeightScheme::fidelity;
  if (s == "composition") return WeightScheme::composition;
  if (s == "unit") return WeightScheme::unit;
  throw Error("unknown weight scheme '" + s + "'");
}

ConfidenceMetric parse_metric(const std::string& s) {
  if (s == "margin") return ConfidenceMetric::margin;
  if (s == "entropy") return ConfidenceMetric::entropy;
  throw Error("unknown confidence metric '" + s + "'");
}

void DistillConfig::validate() const {
  if (teacher_dim < 1 || student_dim < 1) throw Error("feature dimensions must be >= 1");
  if (student_dim > teacher_dim) throw Error("student_dim must not exceed teacher_dim");
  if (refresh < 1) throw Error("refresh must be >= 1");
  if (histogram_bins < 1) throw Error("histogram_bins must be >= 1");
  LossSpec{LossKind::cross_entropy_soft, temperature}.validate();
  teacher_sgd.validate();
  pretrain_sgd.validate();
  student_sgd.validate();
}

Vec student_feature_map(const Vec& x, int student_dim) {
  if (student_dim < 1 || student_dim > x.size()) throw Error("student_dim must lie in [1, teacher_dim]");
  return x.head(student_dim);
}

Dataset student_view(const Dataset& data, int student_dim) {
  Dataset out = data;
  for (auto& ex : out.examples) ex.x = student_feature_map(ex.x, student_dim);
  return out;
}

namespace {

LossSpec loss_for(const DistillConfig& cfg) { return {LossKind::cross_entropy_soft, cfg.temperature}; }

std::vector<LabelVec> predictions(const LinearParams& model, const Dataset& data, double temperature) {
  std::vector<LabelVec> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) out.push_back(predict(model, ex.x, temperature));
  return out;
}

LabelVec to_target(const LabelVec& pred, LabelMode mode) {
  return mode == LabelMode::soft ? pred : LabelVec::one_hot(pred.size(), pred.argmax());
}

}  // namespace

LinearParams train_teacher(const Dataset& labeled, const DistillConfig& cfg) {
  if (labeled.empty() || !labeled.labels_valid) throw Error("teacher needs a non-empty labeled set");
  if (labeled.dim() != cfg.teacher_dim) throw Error("labeled data does not match teacher_dim");
  const std::vector<double> ones(labeled.size(), 1.0);
  SgdConfig sgd = cfg.teacher_sgd;
  sgd.record_every = sgd.iterations;
  return sgd_multi_pass(labeled, ones, sgd, loss_for(cfg)).back();
}

Dataset teacher_label(const LinearParams& teacher, const Dataset& unlabeled, LabelMode mode, double temperature) {
  Dataset out = unlabeled;
  for (auto& ex : out.examples) ex.y = to_target(predict(teacher, ex.x, temperature), mode);
  out.labels_valid = true;
  return out;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("correlation needs two equal-length series");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(va * vb);
}

std::vector<HistogramBin> weight_histogram(std::span<const double> weights, std::size_t bins) {
  if (bins < 1) throw Error("histogram needs at least one bin");
  std::vector<HistogramBin> hist(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    hist[b].lo = static_cast<double>(b) / static_cast<double>(bins);
    hist[b].hi = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error("weight outside [0,1]");
    auto b = static_cast<std::size_t>(w * static_cast<double>(bins));
    hist[std::min(b, bins - 1)].count++;
  }
  return hist;
}

void check_disjoint(const std::vector<const Dataset*>& splits) {
  std::map<std::vector<double>, std::size_t> owner;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (const auto& ex : splits[s]->examples) {
      std::vector<double> key(ex.x.data(), ex.x.data() + ex.x.size());
      auto [it, inserted] = owner.emplace(std::move(key), s);
      if (!inserted && it->second != s) throw Error("overlapping splits: a feature vector appears in two splits");
    }
  }
}

namespace {

struct Context {
  const DistillConfig& cfg;
  LossSpec spec;
  LinearParams pretrained;
  Dataset train_base;  // student view of S_l (+ S_v when merged), unit weights
  Dataset unlabeled;   // student view of S_u with teacher labels
  Dataset validation;  // student view of S_v
  Dataset test;        // student view of the test split
  std::vector<LabelVec> teacher_probs_u;
  std::vector<LabelVec> teacher_probs_v;
  std::vector<LabelVec> teacher_targets_v;
  std::vector<LabelVec> true_labels_v;
  std::vector<double> teacher_correct_u;
};

void log_point(SchemeRun& run, const Context& ctx, const Dataset& train, std::span<const double> weights,
               std::size_t step, const LinearParams& student) {
  TrajectoryPoint pt;
  pt.step = step;
  pt.frobenius_norm = student.frobenius_norm();
  pt.train_loss = weighted_empirical_risk(student, train, weights, ctx.spec);
  pt.heldout_loss = empirical_risk(student, ctx.test, ctx.spec);
  pt.test_accuracy = accuracy(student, ctx.test);
  run.trajectory.push_back(pt);
}

SchemeRun run_scheme(WeightScheme scheme, const Context& ctx) {
  const DistillConfig& cfg = ctx.cfg;
  SchemeRun run;
  run.scheme = scheme;
  run.student = ctx.pretrained;

  // S = base examples followed by the teacher-labeled pool; base weights stay 1.
  Dataset train = ctx.train_base;
  train.examples.insert(train.examples.end(), ctx.unlabeled.examples.begin(), ctx.unlabeled.examples.end());
  train.truth.clear();
  const std::size_t base_n = ctx.train_base.size();
  std::vector<double> weights(train.size(), 1.0);

  std::vector<double> fidelity;
  if (scheme == WeightScheme::fidelity || scheme == WeightScheme::composition) {
    fidelity = fidelity_weights(ctx.teacher_probs_u).weights;
  }

  std::size_t global_step = 0;
  const std::size_t per_round = cfg.student_sgd.iterations;
  for (std::size_t round = 0; round < cfg.refresh; ++round) {
    std::vector<double> unl(ctx.unlabeled.size(), 1.0);
    if (scheme == WeightScheme::ours || scheme == WeightScheme::composition) {
      const auto student_v = predictions(run.student, ctx.validation, cfg.temperature);
      const auto student_u = predictions(run.student, ctx.unlabeled, cfg.temperature);
      const ValidationIndex index = build_validation_index(ctx.teacher_probs_v, student_v, ctx.true_labels_v,
                                                           cfg.metric, ctx.teacher_targets_v);
      run.records = estimate_weights(index, ctx.teacher_probs_u, student_u);
      ++run.estimate_calls;
      if (scheme == WeightScheme::ours) {
        for (std::size_t i = 0; i < unl.size(); ++i) unl[i] = run.records[i].weight;
      } else {
        unl = compose_weights(fidelity, run.records);
      }
    } else if (scheme == WeightScheme::fidelity) {
      unl = fidelity;
    }
    std::copy(unl.begin(), unl.end(), weights.begin() + static_cast<std::ptrdiff_t>(base_n));
    run.weights = unl;

    if (round == 0 && cfg.log_every > 0) log_point(run, ctx, train, weights, 0, run.student);

    SgdConfig sgd = cfg.student_sgd;
    sgd.seed = derive_seed(cfg.student_sgd.seed, round);
    sgd.record_every = per_round;
    MultiPassOptions opts;
    opts.init = run.student;
    if (cfg.log_every > 0) {
      opts.observer = [&](std::size_t t, const LinearParams& theta) {
        const std::size_t step = global_step + t;
        if (step % cfg.log_every == 0) log_point(run, ctx, train, weights, step, theta);
      };
    }
    run.student = sgd_multi_pass(train, weights, sgd, ctx.spec, opts).back();
    global_step += per_round;
  }

  run.final_accuracy = accuracy(run.student, ctx.test);
  run.best_accuracy = run.final_accuracy;
  for (const auto& pt : run.trajectory) run.best_accuracy = std::max(run.best_accuracy, pt.test_accuracy);
  run.histogram = weight_histogram(run.weights, cfg.histogram_bins);
  run.weight_correctness_corr = ctx.teacher_correct_u.size() == run.weights.size() && run.weights.size() >= 2
                                    ? pearson_correlation(run.weights, ctx.teacher_correct_u)
                                    : std::numeric_limits<double>::quiet_NaN();
  return run;
}

}  // namespace

DistillReport run_distillation(const Dataset& labeled, const Dataset& unlabeled, const Dataset& validation,
                               const Dataset& test, const DistillConfig& cfg) {
  cfg.validate();
  for (const Dataset* d : {&labeled, &unlabeled, &validation, &test}) {
    if (d->empty()) throw Error("every split must be non-empty");
    d->validate();
    if (d->dim() != cfg.teacher_dim) throw Error("split dimension does not match teacher_dim");
  }
  if (!labeled.labels_valid || !validation.labels_valid) throw Error("labeled and validation splits need labels");
  check_disjoint({&labeled, &unlabeled, &validation, &test});

  DistillReport report;
  report.config = cfg;
  const LinearParams teacher = train_teacher(labeled, cfg);
  report.teacher_test_accuracy = accuracy(teacher, test);

  Context ctx{cfg, loss_for(cfg), {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const Dataset labeled_u = teacher_label(teacher, unlabeled, cfg.label_mode, cfg.temperature);
  ctx.teacher_probs_u = predictions(teacher, unlabeled, cfg.temperature);
  ctx.teacher_probs_v = predictions(teacher, validation, cfg.temperature);
  for (const auto& p : ctx.teacher_probs_v) ctx.teacher_targets_v.push_back(to_target(p, cfg.label_mode));
  for (std::size_t i = 0; i < validation.size(); ++i) {
    ctx.true_labels_v.push_back(validation.truth.size() == validation.size()
                                    ? LabelVec::one_hot(validation.num_classes(), validation.truth[i])
                                    : validation.examples[i].y);
  }
  if (unlabeled.truth.size() == unlabeled.size()) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      const bool ok = ctx.teacher_probs_u[i].argmax() == unlabeled.truth[i];
      hits += ok ? 1 : 0;
      ctx.teacher_correct_u.push_back(ok ? 1.0 : 0.0);
    }
    report.teacher_unlabeled_accuracy = static_cast<double>(hits) / static_cast<double>(unlabeled.size());
  } else {
    report.teacher_unlabeled_accuracy = std::numeric_limits<double>::quiet_NaN();
  }

  const Dataset labeled_s = student_view(labeled, cfg.student_dim);
  ctx.unlabeled = student_view(labeled_u, cfg.student_dim);
  ctx.validation = student_view(validation, cfg.student_dim);
  ctx.test = student_view(test, cfg.student_dim);
  ctx.train_base = labeled_s;
  if (cfg.merge_validation) {
    ctx.train_base.examples.insert(ctx.train_base.examples.end(), ctx.validation.examples.begin(),
                                   ctx.validation.examples.end());
  }
  ctx.train_base.truth.clear();

  // Pretrained parameters initialize every scheme.
  {
    const std::vector<double> ones(labeled_s.size(), 1.0);
    SgdConfig sgd = cfg.pretrain_sgd;
    sgd.record_every = sgd.iterations;
    ctx.pretrained = sgd_multi_pass(labeled_s, ones, sgd, ctx.spec).back();
    ctx.pretrained.radius = cfg.student_sgd.radius;
  }
  report.pretrain_test_accuracy = accuracy(ctx.pretrained, ctx.test);

  report.primary = run_scheme(cfg.scheme, ctx);
  report.baseline = cfg.scheme == WeightScheme::unit ? report.primary : run_scheme(WeightScheme::unit, ctx);
  return report;
}

WeightEstimation estimate_pool_weights(const Dataset& labeled, const Dataset& unlabeled, const Dataset& validation,
                                       const DistillConfig& cfg) {
  cfg.validate();
  for (const Dataset* d : {&labeled, &unlabeled, &validation}) {
    if (d->empty()) throw Error("every split must be non-empty");
    d->validate();
    if (d->dim() != cfg.teacher_dim) throw Error("split dimension does not match teacher_dim");
  }
  if (!labeled.labels_valid || !validation.labels_valid) throw Error("labeled and validation splits need labels");
  check_disjoint({&labeled, &unlabeled, &validation});

  WeightEstimation out;
  out.teacher = train_teacher(labeled, cfg);
  const LossSpec spec = loss_for(cfg);
  const Dataset labeled_s = student_view(labeled, cfg.student_dim);
  const std::vector<double> ones(labeled_s.size(), 1.0);
  SgdConfig sgd = cfg.pretrain_sgd;
  sgd.record_every = sgd.iterations;
  out.student = sgd_multi_pass(labeled_s, ones, sgd, spec).back();

  const auto teacher_v = predictions(out.teacher, validation, cfg.temperature);
  std::vector<LabelVec> targets_v, truth_v;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    targets_v.push_back(to_target(teacher_v[i], cfg.label_mode));
    truth_v.push_back(validation.truth.size() == validation.size()
                          ? LabelVec::one_hot(validation.num_classes(), validation.truth[i])
                          : validation.examples[i].y);
  }
  const auto student_v = predictions(out.student, student_view(validation, cfg.student_dim), cfg.temperature);
  out.index = build_validation_index(teacher_v, student_v, truth_v, cfg.metric, targets_v);
  const auto teacher_u = predictions(out.teacher, unlabeled, cfg.temperature);
  const auto student_u = predictions(out.student, student_view(unlabeled, cfg.student_dim), cfg.temperature);
  out.records = estimate_weights(out.index, teacher_u, student_u);
  return out;
}

}  // namespace wdistill
