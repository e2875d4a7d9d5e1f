#include "doctest.h"

#include <cmath>

#include "wdistill/experiments.hpp"
#include "wdistill/pipeline.hpp"

using namespace wdistill;

namespace {

MixtureSpec small_mixture() {
  MixtureSpec ms;
  ms.dim = 6;
  ms.num_classes = 3;
  ms.n_labeled = 60;
  ms.n_unlabeled = 800;
  ms.n_validation = 400;
  ms.n_test = 1500;
  ms.separation = 3.0;
  return ms;
}

DistillConfig small_config(int teacher_dim, std::uint64_t seed, const std::string& extra = "") {
  const auto kv = KeyValueConfig::parse("distill.student_dim = 3\nteacher.iterations = 4000\n"
                                        "pretrain.iterations = 4000\nstudent.iterations = 4000\n"
                                        "distill.log_every = 500\n" + extra);
  return distill_config_from(kv, teacher_dim, seed);
}

DistillReport run_small(const MixtureSpec& ms, std::uint64_t seed, const std::string& extra = "") {
  const MixtureTask task = synthetic_mixture_task(ms, seed);
  return run_distillation(task.labeled, task.unlabeled, task.validation, task.test, small_config(ms.dim, seed, extra));
}

}  // namespace

TEST_CASE("student feature map") {
  Vec x(4);
  x << 1.0, -2.0, 3.0, 0.5;
  CHECK(student_feature_map(x, 4) == x);
  const Vec y = student_feature_map(x, 2);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == -2.0);
  Vec z(4);
  z << 0.3, 0.1, -1.0, 2.0;
  CHECK((student_feature_map(2.0 * x + z, 2) - (2.0 * student_feature_map(x, 2) + student_feature_map(z, 2))).norm() < 1e-15);
}

TEST_CASE("teacher on a well separated task") {
  MixtureSpec ms = small_mixture();
  ms.separation = 12.0;
  const MixtureTask task = synthetic_mixture_task(ms, 3);
  const DistillConfig cfg = small_config(ms.dim, 3);
  const LinearParams a = train_teacher(task.labeled, cfg);
  CHECK(accuracy(a, task.test) >= 0.99);
  CHECK(train_teacher(task.labeled, cfg).theta == a.theta);
}

TEST_CASE("teacher accuracy grows with the labeled set") {
  MixtureSpec ms = small_mixture();
  ms.dim = 10;
  ms.num_classes = 4;
  ms.separation = 2.0;
  ms.n_test = 5000;
  double prev = 0.0;
  for (std::size_t n : {250u, 1000u, 4000u}) {
    ms.n_labeled = n;
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const MixtureTask task = synthetic_mixture_task(ms, 50 + s);
      DistillConfig cfg = small_config(ms.dim, s);
      cfg.teacher_sgd.iterations = 20000;
      acc += accuracy(train_teacher(task.labeled, cfg), task.test) / 3.0;
    }
    CAPTURE(n);
    CHECK(acc >= prev - 0.005);
    prev = acc;
  }
}

TEST_CASE("teacher labels") {
  LinearParams teacher = LinearParams::zeros(3, 2);
  teacher.theta << 1.0, 0.0, 0.0, 1.0, -1.0, -1.0;
  Dataset pool;
  pool.labels_valid = false;
  pool.split = Split::unlabeled;
  Vec a(2), origin = Vec::Zero(2);
  a << 2.0, 0.5;
  pool.examples = {{a, LabelVec::uniform(3)}, {origin, LabelVec::uniform(3)}};

  const Dataset hard = teacher_label(teacher, pool, LabelMode::hard, 1.0);
  CHECK(hard.examples[0].y == LabelVec::one_hot(3, 0));
  CHECK(hard.examples[1].y.is_one_hot());
  const Dataset soft = teacher_label(teacher, pool, LabelMode::soft, 1.0);
  CHECK((soft.examples[1].y.probs() - LabelVec::uniform(3).probs()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(soft.examples[0].y.argmax() == 0);
  CHECK(soft.labels_valid);
}

TEST_CASE("hard-label distillation agrees with the teacher") {
  const MixtureSpec ms = small_mixture();
  const MixtureTask task = synthetic_mixture_task(ms, 9);
  DistillConfig cfg = small_config(ms.dim, 9, "distill.scheme = unit\n");
  cfg.student_dim = ms.dim;
  const DistillReport rep = run_distillation(task.labeled, task.unlabeled, task.validation, task.test, cfg);
  const LinearParams teacher = train_teacher(task.labeled, cfg);
  std::size_t agree = 0;
  for (const auto& ex : task.test.examples) {
    agree += predict(teacher, ex.x).argmax() == predict(rep.primary.student, ex.x).argmax();
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(task.test.size()) >= 0.95);
}

TEST_CASE("unit scheme reproduces the baseline") {
  const DistillReport rep = run_small(small_mixture(), 4, "distill.scheme = unit\n");
  CHECK(rep.primary.student.theta == rep.baseline.student.theta);
  CHECK(rep.primary.final_accuracy == rep.baseline.final_accuracy);
  for (double w : rep.primary.weights) CHECK(w == 1.0);
}

TEST_CASE("an always-correct teacher gives unit weights") {
  MixtureSpec ms = small_mixture();
  ms.separation = 1e3;
  const DistillReport rep = run_small(ms, 5);
  REQUIRE(rep.teacher_test_accuracy == 1.0);
  for (double w : rep.primary.weights) CHECK(w == 1.0);
  CHECK(rep.primary.student.theta == rep.baseline.student.theta);
}

TEST_CASE("weights are re-estimated once per refresh round") {
  for (std::size_t r : {1u, 3u}) {
    const DistillReport rep = run_small(small_mixture(), 6, "distill.refresh = " + std::to_string(r) + "\n");
    CHECK(rep.primary.estimate_calls == r);
    CHECK(rep.primary.weights.size() == small_mixture().n_unlabeled);
    for (double w : rep.primary.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
  }
}

TEST_CASE("composition weights are the product of fidelity and ours") {
  const DistillReport rep = run_small(small_mixture(), 7, "distill.scheme = composition\ndistill.label_mode = soft\n");
  const MixtureTask task = synthetic_mixture_task(small_mixture(), 7);
  const LinearParams teacher = train_teacher(task.labeled, rep.config);
  std::vector<LabelVec> preds;
  for (const auto& ex : task.unlabeled.examples) preds.push_back(predict(teacher, ex.x, rep.config.temperature));
  const FidelityWeights fid = fidelity_weights(preds);
  REQUIRE(rep.primary.records.size() == rep.primary.weights.size());
  for (std::size_t i = 0; i < rep.primary.weights.size(); ++i) {
    CHECK(std::abs(rep.primary.weights[i] - fid.weights[i] * rep.primary.records[i].weight) <= 1e-12);
  }
}

TEST_CASE("overlapping splits are rejected") {
  const MixtureTask task = synthetic_mixture_task(small_mixture(), 8);
  Dataset validation = task.validation;
  validation.examples.push_back(task.labeled.examples.front());
  CHECK_THROWS_AS(run_distillation(task.labeled, task.unlabeled, validation, task.test, small_config(6, 8)), Error);
}

TEST_CASE("a restricted student trails its teacher") {
  MixtureSpec ms = small_mixture();
  ms.dim = 8;
  ms.num_classes = 4;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MixtureTask task = synthetic_mixture_task(ms, 70 + s);
    DistillConfig cfg = small_config(ms.dim, s);
    cfg.student_dim = 2;
    const DistillReport rep = run_distillation(task.labeled, task.unlabeled, task.validation, task.test, cfg);
    CAPTURE(s);
    CHECK(rep.primary.final_accuracy < rep.teacher_test_accuracy);
  }
}

TEST_CASE("distillation is reproducible") {
  const DistillReport a = run_small(small_mixture(), 10);
  const DistillReport b = run_small(small_mixture(), 10);
  CHECK(a.primary.student.theta == b.primary.student.theta);
  CHECK(a.primary.weights == b.primary.weights);
  CHECK(a.baseline.student.theta == b.baseline.student.theta);
  REQUIRE(a.primary.trajectory.size() == b.primary.trajectory.size());
  for (std::size_t i = 0; i < a.primary.trajectory.size(); ++i) {
    CHECK(a.primary.trajectory[i].test_accuracy == b.primary.trajectory[i].test_accuracy);
  }
}

TEST_CASE("debiased weights do not hurt on the default mixture") {
  const auto kv = KeyValueConfig::parse("");
  ExperimentConfig cfg;
  cfg.id = ExperimentId::distill_e2e;
  cfg.out_dir = std::filesystem::temp_directory_path() / "wdistill_pipeline_e2e";
  cfg.seed = 0;
  cfg.trials = 5;
  cfg.params = kv;
  const ExperimentResult res = run_experiment(cfg);
  CHECK(res.metrics.at("mean_improvement") >= 0.0);
  std::filesystem::remove_all(cfg.out_dir);
}
