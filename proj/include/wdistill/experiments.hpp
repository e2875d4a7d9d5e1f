#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wdistill/config.hpp"
#include "wdistill/noise.hpp"
#include "wdistill/pipeline.hpp"

namespace wdistill {

enum class ExperimentId {
  debias_identity,
  mse_grid,
  naive_fails,
  sgd_convergence,
  knn_consistency,
  distill_e2e,
  gradient_check,
};

std::string to_string(ExperimentId id);
ExperimentId parse_experiment_id(const std::string& s);
const std::vector<ExperimentId>& all_experiments();

struct ExperimentConfig {
  ExperimentId id = ExperimentId::mse_grid;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  // Experiment-specific keys (identity.*, grid.*, sphere.*, gradient.*,
  // knn.*, mixture.*, distill.*, sgd.*, teacher.*, pretrain.*, student.*).
  KeyValueConfig params;
};

// Reads `experiment`, `out`, `seed` and `trials` (default depends on the
// experiment). Throws ConfigError on bad values.
ExperimentConfig experiment_config_from(const KeyValueConfig& kv);
std::size_t default_trials(ExperimentId id);

struct ExperimentResult {
  ExperimentId id = ExperimentId::mse_grid;
  // One human-readable line per trial.
  std::vector<std::string> lines;
  // Named summary numbers; criteria are judged from these by the caller.
  std::map<std::string, double> metrics;
};

// Runs the experiment and writes its files into cfg.out_dir. Output files
// depend only on (params, seed, trials).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Building blocks shared with the CLI. Keys are read from `kv` with the
// defaults of the end-to-end experiment.
MixtureSpec mixture_spec_from(const KeyValueConfig& kv);
DistillConfig distill_config_from(const KeyValueConfig& kv, int teacher_dim, std::uint64_t seed);

struct DistillSplits {
  Dataset labeled;
  Dataset unlabeled;
  Dataset validation;
  Dataset test;
};

// data.labeled / data.unlabeled / data.validation / data.test CSV paths when
// `data.labeled` is set, otherwise a synthetic mixture task drawn from `seed`.
DistillSplits distill_splits_from(const KeyValueConfig& kv, std::uint64_t seed);

// Writes report_trial<k>.json, weights_{labeled,unlabeled}_trial<k>.csv,
// trajectory CSVs and plot data for one finished run.
void write_distill_outputs(const DistillReport& report, std::size_t labeled_count, std::size_t trial,
                           const std::filesystem::path& out_dir);

// Seed of trial k under a global seed.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial);

}  // namespace wdistill
