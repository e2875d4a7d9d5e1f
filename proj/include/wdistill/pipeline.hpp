#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdistill/core.hpp"
#include "wdistill/estimator.hpp"
#include "wdistill/optimize.hpp"

namespace wdistill {

enum class LabelMode { soft, hard };
enum class WeightScheme { ours, fidelity, composition, unit };

std::string to_string(LabelMode mode);
std::string to_string(WeightScheme scheme);
std::string to_string(ConfidenceMetric metric);
LabelMode parse_label_mode(const std::string& s);
WeightScheme parse_weight_scheme(const std::string& s);
ConfidenceMetric parse_metric(const std::string& s);

struct DistillConfig {
  int teacher_dim = 2;
  // Student sees only the first student_dim coordinates.
  int student_dim = 2;
  LabelMode label_mode = LabelMode::soft;
  // Number of weight-estimation rounds; each round re-estimates the weights
  // and then runs student_sgd.iterations steps.
  std::size_t refresh = 1;
  WeightScheme scheme = WeightScheme::ours;
  ConfidenceMetric metric = ConfidenceMetric::margin;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  SgdConfig teacher_sgd;
  SgdConfig pretrain_sgd;
  SgdConfig student_sgd;
  // Global-step cadence of trajectory points (0 disables logging).
  std::size_t log_every = 0;
  std::size_t histogram_bins = 10;
  // Train the student on S_l + S_u + S_v (validation still builds the index).
  bool merge_validation = false;

  void validate() const;
};

Vec student_feature_map(const Vec& x, int student_dim);
Dataset student_view(const Dataset& data, int student_dim);

// Multi-pass SGD on the full feature map; returns the last iterate.
LinearParams train_teacher(const Dataset& labeled, const DistillConfig& cfg);

// Soft mode: softmax at `temperature`; hard mode: one-hot argmax. Keeps truth.
Dataset teacher_label(const LinearParams& teacher, const Dataset& unlabeled, LabelMode mode, double temperature);

struct TrajectoryPoint {
  std::size_t step = 0;
  double frobenius_norm = 0.0;
  double train_loss = 0.0;    // weighted risk on the student's training set
  double heldout_loss = 0.0;  // clean risk on the test split
  double test_accuracy = 0.0;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct SchemeRun {
  WeightScheme scheme = WeightScheme::unit;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::vector<TrajectoryPoint> trajectory;
  // Unlabeled-pool weights from the last round, with estimator details when
  // the scheme uses them.
  std::vector<double> weights;
  std::vector<WeightRecord> records;
  std::size_t estimate_calls = 0;
  // Pearson correlation of unlabeled weights with 1{teacher correct}; NaN
  // when truth is unknown or weights are constant.
  double weight_correctness_corr = 0.0;
  std::vector<HistogramBin> histogram;
  LinearParams student;
};

struct DistillReport {
  DistillConfig config;
  double teacher_test_accuracy = 0.0;
  double teacher_unlabeled_accuracy = 0.0;
  double pretrain_test_accuracy = 0.0;
  SchemeRun primary;
  // Same seeds with unit weights for paired comparison.
  SchemeRun baseline;
};

double pearson_correlation(std::span<const double> a, std::span<const double> b);
std::vector<HistogramBin> weight_histogram(std::span<const double> weights, std::size_t bins);

// Throws if any feature vector appears in two different splits.
void check_disjoint(const std::vector<const Dataset*>& splits);

DistillReport run_distillation(const Dataset& labeled, const Dataset& unlabeled, const Dataset& validation,
                               const Dataset& test, const DistillConfig& cfg);

// The distillation pipeline up to the first weight estimate: teacher, pretrained student, the
// validation index and the unlabeled-pool weights.
struct WeightEstimation {
  LinearParams teacher;
  LinearParams student;
  ValidationIndex index;
  std::vector<WeightRecord> records;
};

WeightEstimation estimate_pool_weights(const Dataset& labeled, const Dataset& unlabeled, const Dataset& validation,
                                       const DistillConfig& cfg);

}  // namespace wdistill
