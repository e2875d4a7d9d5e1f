#pragma once

#include <array>
#include <span>
#include <vector>

#include "wdistill/core.hpp"
#include "wdistill/debias.hpp"

namespace wdistill {

enum class ConfidenceMetric { margin, entropy };

// Covariate coordinate for one model's prediction: the raw margin score, or
// the negated entropy (so larger always means more confident).
double confidence(const LabelVec& pred, ConfidenceMetric metric);

// k = ceil(sqrt(n) / 2), computed exactly as the least k with 4k^2 >= n.
std::size_t neighbor_count(std::size_t n);

using Point2 = std::array<double, 2>;

// k-NN regression table from (teacher confidence, student confidence) to
// (corruption indicator, distortion), built on the clean validation split.
struct ValidationIndex {
  std::vector<Point2> points;
  std::vector<Point2> responses;
  std::size_t k = 1;
  ConfidenceMetric metric = ConfidenceMetric::margin;
  // Validation rows whose clean loss was zero and got distortion 1.
  std::size_t flagged = 0;

  std::size_t size() const noexcept { return points.size(); }
  void validate() const;
};

// `teacher_preds` and `student_preds` are predictive distributions and give
// the covariates. The distortion numerator uses `teacher_targets` (the labels
// the student actually trains on, e.g. one-hot in hard mode) when given,
// otherwise `teacher_preds`.
ValidationIndex build_validation_index(std::span<const LabelVec> teacher_preds,
                                       std::span<const LabelVec> student_preds,
                                       std::span<const LabelVec> true_labels, ConfidenceMetric metric,
                                       std::span<const LabelVec> teacher_targets = {});

struct KnnEstimate {
  double p_hat = 0.0;
  double distortion_hat = 1.0;
};

// Mean response of the k nearest covariates (Euclidean; ties by lower index).
KnnEstimate knn_estimate(const ValidationIndex& index, Point2 query);
KnnEstimate knn_estimate(const ValidationIndex& index, const LabelVec& teacher_pred, const LabelVec& student_pred);

// Projected debiasing weights for a teacher-labeled pool, in input order.
std::vector<WeightRecord> estimate_weights(const ValidationIndex& index,
                                           std::span<const LabelVec> teacher_preds,
                                           std::span<const LabelVec> student_preds);

struct FidelityWeights {
  double mean_entropy = 0.0;
  std::vector<double> weights;
  // All predictions were one-hot (mean entropy 0); every weight is 1.
  bool flagged = false;
};

// exp(-entropy(x) / mean entropy) over the teacher's predictions.
FidelityWeights fidelity_weights(std::span<const LabelVec> teacher_preds);

// Elementwise product of fidelity and debiasing weights.
std::vector<double> compose_weights(std::span<const double> fidelity, std::span<const WeightRecord> ours);

}  // namespace wdistill
