#include "wdistill/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wdistill {

double confidence(const LabelVec& pred, ConfidenceMetric metric) {
  return metric == ConfidenceMetric::margin ? margin_score(pred) : -entropy_confidence(pred);
}

std::size_t neighbor_count(std::size_t n) {
  if (n == 0) return 0;
  std::size_t k = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)) / 2.0);
  while (4 * k * k < n) ++k;
  while (k > 1 && 4 * (k - 1) * (k - 1) >= n) --k;
  return std::max<std::size_t>(k, 1);
}

void ValidationIndex::validate() const {
  if (points.empty()) throw Error("validation index is empty");
  if (points.size() != responses.size()) throw Error("validation index points/responses length mismatch");
  if (k < 1 || k > points.size()) throw Error("validation index k out of range");
  for (const auto& r : responses) {
    if (r[0] != 0.0 && r[0] != 1.0) throw Error("validation response p must be 0 or 1");
  }
}

ValidationIndex build_validation_index(std::span<const LabelVec> teacher_preds,
                                       std::span<const LabelVec> student_preds,
                                       std::span<const LabelVec> true_labels, ConfidenceMetric metric,
                                       std::span<const LabelVec> teacher_targets) {
  if (teacher_preds.size() != student_preds.size() || teacher_preds.size() != true_labels.size()) {
    throw Error("validation inputs have different lengths");
  }
  if (!teacher_targets.empty() && teacher_targets.size() != teacher_preds.size()) {
    throw Error("validation inputs have different lengths");
  }
  if (teacher_preds.empty()) throw Error("validation set is empty");
  ValidationIndex index;
  index.metric = metric;
  index.k = neighbor_count(teacher_preds.size());
  index.points.reserve(teacher_preds.size());
  index.responses.reserve(teacher_preds.size());
  for (std::size_t i = 0; i < teacher_preds.size(); ++i) {
    const LabelVec& teacher = teacher_preds[i];
    const LabelVec& student = student_preds[i];
    index.points.push_back({confidence(teacher, metric), confidence(student, metric)});
    if (teacher.argmax() == true_labels[i].argmax()) {
      index.responses.push_back({0.0, 1.0});
      continue;
    }
    bool flagged = false;
    const LabelVec& target = teacher_targets.empty() ? teacher : teacher_targets[i];
    const double d = distortion_or_unit(cross_entropy_probs(target, student),
                                        cross_entropy_probs(true_labels[i], student), &flagged);
    if (flagged) ++index.flagged;
    index.responses.push_back({1.0, d});
  }
  return index;
}

KnnEstimate knn_estimate(const ValidationIndex& index, Point2 query) {
  if (index.points.empty()) throw Error("validation index is empty");
  const std::size_t n = index.points.size();
  const std::size_t k = std::min(index.k, n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = index.points[i][0] - query[0];
    const double dy = index.points[i][1] - query[1];
    dist[i] = {dx * dx + dy * dy, i};
  }
  // Pair ordering breaks distance ties by the lower validation index.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  KnnEstimate est;
  double p = 0.0, d = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    p += index.responses[dist[j].second][0];
    d += index.responses[dist[j].second][1];
  }
  est.p_hat = p / static_cast<double>(k);
  est.distortion_hat = d / static_cast<double>(k);
  return est;
}

KnnEstimate knn_estimate(const ValidationIndex& index, const LabelVec& teacher_pred, const LabelVec& student_pred) {
  return knn_estimate(index, Point2{confidence(teacher_pred, index.metric), confidence(student_pred, index.metric)});
}

std::vector<WeightRecord> estimate_weights(const ValidationIndex& index,
                                           std::span<const LabelVec> teacher_preds,
                                           std::span<const LabelVec> student_preds) {
  if (teacher_preds.size() != student_preds.size()) throw Error("prediction lists have different lengths");
  std::vector<WeightRecord> out;
  out.reserve(teacher_preds.size());
  for (std::size_t i = 0; i < teacher_preds.size(); ++i) {
    const KnnEstimate est = knn_estimate(index, teacher_preds[i], student_preds[i]);
    try {
      out.push_back(debias_weight(est.p_hat, est.distortion_hat));
    } catch (const Error&) {
      WeightRecord rec;
      rec.p_hat = est.p_hat;
      rec.distortion_hat = est.distortion_hat;
      rec.raw_weight = 1.0;
      rec.weight = 1.0;
      rec.flagged = true;
      out.push_back(rec);
    }
  }
  return out;
}

FidelityWeights fidelity_weights(std::span<const LabelVec> teacher_preds) {
  if (teacher_preds.empty()) throw Error("fidelity weights need at least one prediction");
  FidelityWeights fw;
  std::vector<double> ent(teacher_preds.size());
  for (std::size_t i = 0; i < teacher_preds.size(); ++i) ent[i] = entropy_confidence(teacher_preds[i]);
  fw.mean_entropy = pairwise_sum(ent) / static_cast<double>(ent.size());
  fw.weights.resize(ent.size(), 1.0);
  if (!(fw.mean_entropy > 0.0)) {
    fw.flagged = true;
    return fw;
  }
  for (std::size_t i = 0; i < ent.size(); ++i) fw.weights[i] = std::exp(-ent[i] / fw.mean_entropy);
  return fw;
}

std::vector<double> compose_weights(std::span<const double> fidelity, std::span<const WeightRecord> ours) {
  if (fidelity.size() != ours.size()) throw Error("weight lists have different lengths");
  std::vector<double> out(fidelity.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = fidelity[i] * ours[i].weight;
    if (!(w >= 0.0 && w <= 1.0)) throw Error("composed weight outside [0,1]");
    out[i] = w;
  }
  return out;
}

}  // namespace wdistill
