#pragma once

#include <cstdint>
#include <optional>

#include "wdistill/core.hpp"
#include "wdistill/noise.hpp"

namespace wdistill {

inline constexpr double kZeroLossFloor = 1e-12;
inline constexpr double kWeightDenominatorGuard = 1e-9;

struct WeightRecord {
  double p_hat = 0.0;
  double distortion_hat = 1.0;
  double raw_weight = 1.0;
  // raw_weight projected onto [0, 1].
  double weight = 1.0;
  // Set when a degenerate distortion or denominator was replaced by a default.
  bool flagged = false;
};

// loss_adv / loss_true. Throws when loss_true <= 1e-12.
double distortion(double loss_adv, double loss_true);

// Same ratio, but returns 1 (and sets *flagged) on a zero clean loss.
double distortion_or_unit(double loss_adv, double loss_true, bool* flagged = nullptr);

// Unprojected weight 1 / (1 + p (d - 1)). Throws "degenerate weight" when the
// denominator is <= 1e-9.
double raw_debias_weight(double p, double distortion);

WeightRecord debias_weight(double p, double distortion);

// Per-point terms of the noise model for a fixed predictor.
struct PointTerms {
  double p = 0.0;
  double loss_true = 0.0;
  double loss_adv = 0.0;
  double distortion = 1.0;
};

PointTerms point_terms(const NoiseModel& nm, const LinearParams& model, const Vec& x, const LossSpec& spec);

struct MonteCarloBudget {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
};

// E_x[ p(x) (distortion(x) - 1) loss_true(x) ]. Exact over a finite support,
// otherwise a Monte Carlo mean; throws if neither is available.
Estimate bias_functional(const NoiseModel& nm, const LinearParams& model, const LossSpec& spec,
                         std::optional<MonteCarloBudget> budget = std::nullopt);

// Exact expectations obtained by enumerating every (support point, coin)
// outcome of a finite-support noise model.
struct RiskDecomposition {
  double clean_risk = 0.0;
  double noisy_risk = 0.0;     // E over D of the unweighted loss
  double weighted_risk = 0.0;  // E over D of the weighted loss
  double bias = 0.0;
};

RiskDecomposition exact_risk_decomposition(const NoiseModel& nm, const LinearParams& model,
                                           const LossSpec& spec, bool clamp_weights = false);

struct MsePair {
  double unweighted = 0.0;
  double weighted = 0.0;
};

// Closed-form per-point mean squared errors of the unweighted and the
// (unprojected) weighted loss estimators around the clean loss.
MsePair mse_pair(double p, double loss_true, double distortion);

// True iff distortion < 1/2 and 0 < p < (1 - 2 d) / (1 - d)^2, i.e. exactly
// when the unweighted estimator has the smaller MSE.
bool mse_crossover_predicate(double p, double distortion);

struct WeightBounds {
  double M_w = 1.0;
  double L_w = 1.0;
  double B_w = 1.0;
};

struct RegularityConstants {
  double R = 1.0;
  double M_ell = 1.0;
  double L_ell = 1.0;
  double B_ell = 1.0;
  double M_w = 1.0;
  double L_w = 1.0;
  double B_w = 1.0;
  double kappa = 0.0;  // L_w M_ell + R M_w L_ell
  double B_q = 0.0;    // M_ell B_w + 2 L_ell L_w R + M_w B_ell R^2
};

RegularityConstants make_regularity(double R, double M_ell, double L_ell, double B_ell, WeightBounds w);

// Constants for temperature-T cross entropy with ||Theta||_F <= 1 and
// ||x|| <= R (so ||z|| <= R):
//   M_ell = log L + 2R/T   (log-sum-exp <= log L + max_i z_i/T, and -z_y/T <= R/T)
//   L_ell = 2/T            (||softmax - t||_2 <= sqrt(2))
//   B_ell = 1/T^2          (||diag(s) - s s^T||_2 <= 1/2)
// each raised to at least 1.
RegularityConstants regularity_constants(const LossSpec& spec, double R, WeightBounds w, int num_classes);

}  // namespace wdistill
