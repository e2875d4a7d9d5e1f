#include "wdistill/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wdistill {

LabelVec LabelVec::from_probs(Vec probs, double tolerance) {
  if (probs.size() < 2) throw Error("label vector needs at least 2 classes");
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0) throw Error("label vector has a negative or non-finite entry");
  }
  if (std::abs(probs.sum() - 1.0) > tolerance) throw Error("label vector does not sum to 1");
  return LabelVec(std::move(probs));
}

LabelVec LabelVec::one_hot(int num_classes, int cls) {
  if (num_classes < 2) throw Error("label vector needs at least 2 classes");
  if (cls < 0 || cls >= num_classes) throw Error("class index out of range");
  Vec p = Vec::Zero(num_classes);
  p[cls] = 1.0;
  return LabelVec(std::move(p));
}

LabelVec LabelVec::uniform(int num_classes) {
  if (num_classes < 2) throw Error("label vector needs at least 2 classes");
  return LabelVec(Vec::Constant(num_classes, 1.0 / num_classes));
}

int LabelVec::argmax() const {
  int best = 0;
  for (int i = 1; i < size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return best;
}

bool LabelVec::is_one_hot() const {
  int ones = 0;
  for (int i = 0; i < size(); ++i) {
    if (probs_[i] == 1.0) {
      ++ones;
    } else if (probs_[i] != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::labeled: return "labeled";
    case Split::unlabeled: return "unlabeled";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

int Dataset::dim() const {
  if (examples.empty()) throw Error("empty dataset");
  return static_cast<int>(examples.front().x.size());
}

int Dataset::num_classes() const {
  if (examples.empty()) throw Error("empty dataset");
  return examples.front().y.size();
}

void Dataset::validate() const {
  if (examples.empty()) return;
  const auto d = examples.front().x.size();
  const int L = examples.front().y.size();
  if (d < 1) throw Error("feature dimension must be >= 1");
  for (const auto& ex : examples) {
    if (ex.x.size() != d) throw Error("examples do not share a feature dimension");
    if (ex.y.size() != L) throw Error("examples do not share a class count");
  }
  if (!truth.empty() && truth.size() != examples.size()) throw Error("truth length mismatch");
}

void LossSpec::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error("temperature must be positive");
}

Vec softmax(const Vec& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  if (!logits.allFinite()) throw Error("non-finite logits");
  const Vec scaled = logits / temperature;
  const Vec e = (scaled.array() - scaled.maxCoeff()).exp();
  return e / e.sum();
}

namespace {

void check_loss_args(const LabelVec& target, const Vec& logits, const LossSpec& spec) {
  spec.validate();
  if (target.size() != logits.size()) throw Error("label/logit length mismatch");
  if (spec.kind == LossKind::binary_cross_entropy && target.size() != 2) {
    throw Error("binary cross entropy requires exactly 2 classes");
  }
  if (!logits.allFinite()) throw Error("non-finite logits");
}

}  // namespace

double cross_entropy(const LabelVec& target, const Vec& logits, const LossSpec& spec) {
  check_loss_args(target, logits, spec);
  const Vec scaled = logits / spec.temperature;
  const double m = scaled.maxCoeff();
  const double lse = m + std::log((scaled.array() - m).exp().sum());
  const double log_floor = std::log(kLogFloor);
  double loss = 0.0;
  for (int i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    loss -= target[i] * std::max(scaled[i] - lse, log_floor);
  }
  return std::max(loss, 0.0);
}

Vec cross_entropy_logit_grad(const LabelVec& target, const Vec& logits, const LossSpec& spec) {
  check_loss_args(target, logits, spec);
  return (softmax(logits, spec.temperature) - target.probs()) / spec.temperature;
}

double cross_entropy_probs(const LabelVec& target, const LabelVec& pred) {
  if (target.size() != pred.size()) throw Error("label/prediction length mismatch");
  double loss = 0.0;
  for (int i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    loss -= target[i] * std::log(std::max(pred[i], kLogFloor));
  }
  return std::max(loss, 0.0);
}

double margin_score(const LabelVec& pred) {
  if (pred.size() < 2) throw Error("margin score needs at least 2 classes");
  double top1 = -1.0, top2 = -1.0;
  for (int i = 0; i < pred.size(); ++i) {
    const double v = pred[i];
    if (v > top1) {
      top2 = top1;
      top1 = v;
    } else if (v > top2) {
      top2 = v;
    }
  }
  return top1 - top2;
}

double entropy_confidence(const LabelVec& pred) {
  double h = 0.0;
  for (int i = 0; i < pred.size(); ++i) {
    if (pred[i] > 0.0) h -= pred[i] * std::log(pred[i]);
  }
  return std::max(h, 0.0);
}

LabelVec predict(const LinearParams& model, const Vec& x, double temperature) {
  return LabelVec::from_probs(softmax(model.logits(x), temperature), 1e-8);
}

double example_loss(const LinearParams& model, const Example& ex, const LossSpec& spec) {
  return cross_entropy(ex.y, model.logits(ex.x), spec);
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 8;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double empirical_risk(const LinearParams& model, const Dataset& data, const LossSpec& spec) {
  if (data.empty()) throw Error("empty dataset");
  if (!data.labels_valid) throw Error("dataset labels are placeholders");
  std::vector<double> losses(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) losses[i] = example_loss(model, data.examples[i], spec);
  return pairwise_sum(losses) / static_cast<double>(data.size());
}

double weighted_empirical_risk(const LinearParams& model, const Dataset& data,
                               std::span<const double> weights, const LossSpec& spec) {
  if (data.empty()) throw Error("empty dataset");
  if (!data.labels_valid) throw Error("dataset labels are placeholders");
  if (weights.size() != data.size()) throw Error("weight/data length mismatch");
  std::vector<double> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weights[i];
    if (!(w >= 0.0 && w <= 1.0)) throw Error("weight outside [0,1] at index " + std::to_string(i));
    terms[i] = w * example_loss(model, data.examples[i], spec);
  }
  return pairwise_sum(terms) / static_cast<double>(data.size());
}

double accuracy(const LinearParams& model, const Dataset& data) {
  if (data.empty()) throw Error("empty dataset");
  const bool use_truth = data.truth.size() == data.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::Index pred = 0;
    model.logits(data.examples[i].x).maxCoeff(&pred);
    const int target = use_truth ? data.truth[i] : data.examples[i].y.argmax();
    if (pred == target) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

LinearParams embed_binary(const Vec& theta, double radius) {
  LinearParams p = LinearParams::zeros(2, static_cast<int>(theta.size()), radius);
  p.theta.row(0) = theta.transpose() / std::sqrt(2.0);
  p.theta.row(1) = -theta.transpose() / std::sqrt(2.0);
  return p;
}

}  // namespace wdistill
