#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wdistill/core.hpp"
#include "wdistill/debias.hpp"
#include "wdistill/estimator.hpp"
#include "wdistill/pipeline.hpp"

namespace wdistill {

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

// A numeric CSV with a header row. Every cell must parse as a finite number.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Position of `name` in the header; throws when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
void write_csv_table(const CsvTable& table, const std::filesystem::path& path);

// Hard datasets use `f0..f{d-1},label`, soft ones `f0..f{d-1},p0..p{L-1}`.
// Unlabeled pools are written as features only. Hard files do not record L,
// so `num_classes` (when given) overrides the max-label-plus-one guess and is
// required for feature-only files.
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt,
                 Split split = Split::labeled);

// `index,p_hat,distortion_hat,raw_weight,weight`
void save_weight_csv(std::span<const WeightRecord> records, const std::filesystem::path& path);
std::vector<WeightRecord> load_weight_csv(const std::filesystem::path& path);

// `tconf,sconf,p,distortion`
void save_index_csv(const ValidationIndex& index, const std::filesystem::path& path);
ValidationIndex load_index_csv(const std::filesystem::path& path, ConfidenceMetric metric = ConfidenceMetric::margin);

// `step,frobenius_norm,train_loss,heldout_loss`
void save_trajectory_csv(std::span<const TrajectoryPoint> trajectory, const std::filesystem::path& path);

}  // namespace wdistill
