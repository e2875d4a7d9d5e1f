#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wdistill {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLabelSumTolerance = 1e-9;
inline constexpr double kLogFloor = 1e-12;

// Probability vector over L >= 2 classes. Hard labels are one-hot.
class LabelVec {
 public:
  LabelVec() = default;

  // Validates non-negativity and unit sum within `tolerance`.
  static LabelVec from_probs(Vec probs, double tolerance = kLabelSumTolerance);
  static LabelVec one_hot(int num_classes, int cls);
  static LabelVec uniform(int num_classes);

  const Vec& probs() const noexcept { return probs_; }
  int size() const noexcept { return static_cast<int>(probs_.size()); }
  double operator[](int i) const { return probs_[i]; }
  // Lowest index among ties.
  int argmax() const;
  bool is_one_hot() const;

  friend bool operator==(const LabelVec& a, const LabelVec& b) {
    return a.probs_.size() == b.probs_.size() && a.probs_ == b.probs_;
  }

 private:
  explicit LabelVec(Vec probs) : probs_(std::move(probs)) {}
  Vec probs_;
};

struct Example {
  Vec x;
  LabelVec y;
};

enum class Split { labeled, unlabeled, validation, test };

std::string to_string(Split split);

struct Dataset {
  Split split = Split::labeled;
  std::uint64_t seed = 0;
  std::vector<Example> examples;
  // False for an unlabeled pool whose `y` entries are placeholders.
  bool labels_valid = true;
  // Simulation-only ground-truth class per example; empty for real data.
  std::vector<int> truth;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  int dim() const;
  int num_classes() const;
  // Throws unless every example shares d and L.
  void validate() const;
};

// Linear multiclass model f(x) = theta * x, constrained to a Frobenius ball.
struct LinearParams {
  Mat theta;
  double radius = 1.0;

  static LinearParams zeros(int num_classes, int dim, double radius = 1.0) {
    return {Mat::Zero(num_classes, dim), radius};
  }
  int num_classes() const noexcept { return static_cast<int>(theta.rows()); }
  int dim() const noexcept { return static_cast<int>(theta.cols()); }
  Vec logits(const Vec& x) const { return theta * x; }
  double frobenius_norm() const { return theta.norm(); }
};

enum class LossKind { cross_entropy_soft, binary_cross_entropy };

struct LossSpec {
  LossKind kind = LossKind::cross_entropy_soft;
  double temperature = 1.0;

  void validate() const;
};

Vec softmax(const Vec& logits, double temperature = 1.0);

// -sum_i t_i log softmax(z / T)_i, with log-probabilities floored at log(1e-12).
double cross_entropy(const LabelVec& target, const Vec& logits, const LossSpec& spec);
// d/dz of cross_entropy: (softmax(z / T) - t) / T (floor ignored).
Vec cross_entropy_logit_grad(const LabelVec& target, const Vec& logits, const LossSpec& spec);

// Cross entropy against an already-normalized prediction, -sum t_i log q_i
// with q floored at 1e-12.
double cross_entropy_probs(const LabelVec& target, const LabelVec& pred);

// Top-1 minus top-2 probability.
double margin_score(const LabelVec& pred);
// Shannon entropy in nats; lower means more confident.
double entropy_confidence(const LabelVec& pred);

LabelVec predict(const LinearParams& model, const Vec& x, double temperature = 1.0);
double example_loss(const LinearParams& model, const Example& ex, const LossSpec& spec);

// Deterministic pairwise (tree) reduction with a fixed leaf size of 8.
double pairwise_sum(std::span<const double> values);

double empirical_risk(const LinearParams& model, const Dataset& data, const LossSpec& spec);
double weighted_empirical_risk(const LinearParams& model, const Dataset& data,
                               std::span<const double> weights, const LossSpec& spec);

// Fraction of examples whose argmax prediction matches `truth` when present,
// otherwise the argmax of the stored label.
double accuracy(const LinearParams& model, const Dataset& data);

// Embeds a binary scalar model theta into the two-class vector form
// Theta = [theta; -theta] / sqrt(2), which keeps ||Theta||_F = ||theta||_2.
LinearParams embed_binary(const Vec& theta, double radius = 1.0);

}  // namespace wdistill
