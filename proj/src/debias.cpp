#include "wdistill/debias.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace wdistill {

double distortion(double loss_adv, double loss_true) {
  if (!(loss_true > kZeroLossFloor)) throw Error("zero clean loss: distortion undefined");
  if (!(loss_adv >= 0.0)) throw Error("negative loss");
  return loss_adv / loss_true;
}

double distortion_or_unit(double loss_adv, double loss_true, bool* flagged) {
  if (!(loss_true > kZeroLossFloor)) {
    if (flagged) *flagged = true;
    return 1.0;
  }
  return distortion(loss_adv, loss_true);
}

double raw_debias_weight(double p, double d) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("corruption probability outside [0,1]");
  if (!(d >= 0.0) || !std::isfinite(d)) throw Error("distortion must be finite and >= 0");
  const double denom = 1.0 + p * (d - 1.0);
  if (!(denom > kWeightDenominatorGuard)) throw Error("degenerate weight");
  return 1.0 / denom;
}

WeightRecord debias_weight(double p, double d) {
  WeightRecord rec;
  rec.p_hat = p;
  rec.distortion_hat = d;
  rec.raw_weight = raw_debias_weight(p, d);
  rec.weight = p == 0.0 ? 1.0 : std::clamp(rec.raw_weight, 0.0, 1.0);
  return rec;
}

PointTerms point_terms(const NoiseModel& nm, const LinearParams& model, const Vec& x, const LossSpec& spec) {
  PointTerms t;
  const Vec z = model.logits(x);
  t.p = nm.corrupt_prob(x);
  t.loss_true = cross_entropy(nm.clean_label(x), z, spec);
  t.loss_adv = cross_entropy(nm.adversarial_label(x), z, spec);
  t.distortion = distortion_or_unit(t.loss_adv, t.loss_true);
  return t;
}

namespace {

double bias_term(const PointTerms& t) { return t.p * (t.distortion - 1.0) * t.loss_true; }

}  // namespace

Estimate bias_functional(const NoiseModel& nm, const LinearParams& model, const LossSpec& spec,
                         std::optional<MonteCarloBudget> budget) {
  Estimate est;
  if (nm.has_exact_support()) {
    for (const auto& pt : nm.support) est.value += pt.mass * bias_term(point_terms(nm, model, pt.x, spec));
    est.exact = true;
    return est;
  }
  if (!budget || budget->samples < 2) throw Error("bias functional needs a finite support or a Monte Carlo budget");
  std::vector<double> terms(budget->samples);
  for (std::size_t i = 0; i < budget->samples; ++i) {
    auto rng = CounterRng::for_index(budget->seed, Purpose::monte_carlo, i);
    terms[i] = bias_term(point_terms(nm, model, nm.sample_x(rng), spec));
  }
  const double n = static_cast<double>(terms.size());
  est.value = pairwise_sum(terms) / n;
  std::vector<double> sq(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) sq[i] = (terms[i] - est.value) * (terms[i] - est.value);
  est.std_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return est;
}

RiskDecomposition exact_risk_decomposition(const NoiseModel& nm, const LinearParams& model,
                                           const LossSpec& spec, bool clamp_weights) {
  if (!nm.has_exact_support()) throw Error("exact risk decomposition needs a finite support");
  RiskDecomposition out;
  for (const auto& pt : nm.support) {
    const PointTerms t = point_terms(nm, model, pt.x, spec);
    const WeightRecord w = debias_weight(t.p, t.distortion);
    const double weight = clamp_weights ? w.weight : w.raw_weight;
    // Two outcomes per support point: clean label (1 - p) and corrupted label (p).
    const double clean_outcome = (1.0 - t.p) * t.loss_true;
    const double corrupt_outcome = t.p * t.loss_adv;
    out.clean_risk += pt.mass * t.loss_true;
    out.noisy_risk += pt.mass * (clean_outcome + corrupt_outcome);
    out.weighted_risk += pt.mass * weight * (clean_outcome + corrupt_outcome);
    out.bias += pt.mass * bias_term(t);
  }
  return out;
}

MsePair mse_pair(double p, double loss_true, double d) {
  const double w = raw_debias_weight(p, d);
  const double l2 = loss_true * loss_true;
  MsePair m;
  m.unweighted = p * l2 * (1.0 - d) * (1.0 - d);
  m.weighted = (1.0 - p) * l2 * (1.0 - w) * (1.0 - w) + p * l2 * (1.0 - w * d) * (1.0 - w * d);
  return m;
}

bool mse_crossover_predicate(double p, double d) {
  if (!(d < 0.5)) return false;
  const double threshold = (1.0 - 2.0 * d) / ((1.0 - d) * (1.0 - d));
  return p > 0.0 && p < threshold;
}

RegularityConstants make_regularity(double R, double M_ell, double L_ell, double B_ell, WeightBounds w) {
  RegularityConstants rc;
  rc.R = R;
  rc.M_ell = M_ell;
  rc.L_ell = L_ell;
  rc.B_ell = B_ell;
  rc.M_w = w.M_w;
  rc.L_w = w.L_w;
  rc.B_w = w.B_w;
  rc.kappa = rc.L_w * rc.M_ell + rc.R * rc.M_w * rc.L_ell;
  rc.B_q = rc.M_ell * rc.B_w + 2.0 * rc.L_ell * rc.L_w * rc.R + rc.M_w * rc.B_ell * rc.R * rc.R;
  return rc;
}

RegularityConstants regularity_constants(const LossSpec& spec, double R, WeightBounds w, int num_classes) {
  spec.validate();
  if (!(R >= 1.0)) throw Error("regularity radius must be >= 1");
  if (w.M_w < 1.0 || w.L_w < 1.0 || w.B_w < 1.0) throw Error("weight bounds must be >= 1");
  if (num_classes < 2) throw Error("need at least 2 classes");
  const double T = spec.temperature;
  const double M_ell = std::max(1.0, std::log(static_cast<double>(num_classes)) + 2.0 * R / T);
  const double L_ell = std::max(1.0, 2.0 / T);
  const double B_ell = std::max(1.0, 1.0 / (T * T));
  return make_regularity(R, M_ell, L_ell, B_ell, w);
}

}  // namespace wdistill
