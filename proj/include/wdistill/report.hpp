#pragma once

#include <filesystem>

#include "json.hpp"

#include "wdistill/pipeline.hpp"

namespace wdistill {

nlohmann::json report_to_json(const DistillReport& report);
// Restores the fields needed for plotting and summaries; student parameters
// and per-example weights are not part of the JSON.
DistillReport report_from_json(const nlohmann::json& j);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// trajectory_<scheme>.csv (`step,test_accuracy`) for each scheme in the
// report and weights_hist.csv (`bin_lo,bin_hi,count`) for the primary run.
void export_plot_data(const DistillReport& report, const std::filesystem::path& out_dir);

}  // namespace wdistill
