// Runs experiments 1-7 with their default configuration, then the weight
// scan and a byte-for-byte rerun. Prints one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "wdistill/config.hpp"
#include "wdistill/csv_io.hpp"
#include "wdistill/experiments.hpp"

using namespace wdistill;
namespace fs = std::filesystem;

namespace {

struct Timed {
  ExperimentResult result;
  double seconds = 0.0;
};

Timed run(ExperimentId id, const fs::path& root) {
  ExperimentConfig cfg;
  cfg.id = id;
  cfg.out_dir = root / to_string(id);
  cfg.seed = 0;
  cfg.trials = default_trials(id);
  cfg.params = KeyValueConfig::parse("");
  const auto start = std::chrono::steady_clock::now();
  Timed t;
  t.result = run_experiment(cfg);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

int failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const ExperimentId kOrder[] = {ExperimentId::debias_identity, ExperimentId::mse_grid,       ExperimentId::naive_fails,
                               ExperimentId::sgd_convergence, ExperimentId::gradient_check, ExperimentId::knn_consistency,
                               ExperimentId::distill_e2e};

std::map<fs::path, std::string> snapshot(const fs::path& root) {
  std::map<fs::path, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root)] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::remove_all(out);
  const fs::path first = out / "run1", second = out / "run2";

  std::map<ExperimentId, Timed> runs;
  try {
    for (ExperimentId id : kOrder) runs[id] = run(id, first);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  auto m = [&](ExperimentId id, const std::string& key) { return runs.at(id).result.metrics.at(key); };

  {
    const auto id = ExperimentId::debias_identity;
    const double err = m(id, "exact_max_error"), z = m(id, "mc_max_z"), s = runs[id].seconds;
    report(1, err <= 1e-10 && z <= 4.0 && s < 10.0,
           "exact error " + fmt("%.2e", err) + " (<= 1e-10), MC max |z| " + fmt("%.2f", z) + " (<= 4), " +
               fmt("%.2f", s) + " s (< 10)");
  }
  {
    const auto id = ExperimentId::mse_grid;
    const double v = m(id, "violations"), n = m(id, "grid_points"), s = runs[id].seconds;
    report(2, v == 0.0 && n == 101.0 * 301.0 && s < 1.0,
           fmt("%.0f", v) + " violations on " + fmt("%.0f", n) + " grid points, " + fmt("%.3f", s) + " s (< 1)");
  }
  {
    const auto id = ExperimentId::naive_fails;
    const double gap = m(id, "mean_gap"), s = runs[id].seconds;
    report(3, gap >= 0.08 && s < 120.0,
           "mean naive gap " + fmt("%.4f", gap) + " (>= 0.08), " + fmt("%.1f", s) + " s (< 120)");
  }
  {
    const auto id = ExperimentId::sgd_convergence;
    const double within = m(id, "trials_within_epsilon"), s = runs[id].seconds;
    report(4, within >= 4.0 && s < 120.0,
           fmt("%.0f", within) + " of 5 seeds within 0.05 of the reference, max gap " +
               fmt("%.4f", m(id, "max_abs_gap")) + ", " + fmt("%.1f", s) + " s (< 120)");
  }
  {
    const auto id = ExperimentId::gradient_check;
    const double err = m(id, "max_relative_error"), s = runs[id].seconds;
    report(5, err <= 1e-5 && s < 10.0,
           "max relative error " + fmt("%.2e", err) + " (<= 1e-5), " + fmt("%.2f", s) + " s (< 10)");
  }
  {
    const auto id = ExperimentId::knn_consistency;
    bool ok = runs[id].seconds < 30.0;
    double prev = INFINITY;
    std::string detail = "MAE(p)";
    for (std::size_t n : {100u, 400u, 1600u}) {
      const double mae = m(id, "mae_p_" + std::to_string(n));
      const double k = m(id, "k_" + std::to_string(n));
      ok = ok && mae <= prev && k == std::ceil(0.5 * std::sqrt(static_cast<double>(n)));
      prev = mae;
      detail += " " + std::to_string(n) + ":" + fmt("%.4f", mae) + " (k=" + fmt("%.0f", k) + ")";
    }
    ok = ok && prev <= 0.1;
    report(6, ok, detail + ", " + fmt("%.2f", runs[id].seconds) + " s (< 30)");
  }
  {
    const auto id = ExperimentId::distill_e2e;
    const double imp = m(id, "mean_improvement"), corr = m(id, "mean_weight_correctness_corr");
    const double lo = m(id, "teacher_accuracy_min"), hi = m(id, "teacher_accuracy_max"), s = runs[id].seconds;
    report(7, imp >= 0.0 && corr > 0.5 && lo >= 0.7 && hi <= 0.9 && s < 300.0,
           "mean improvement " + fmt("%+.4f", imp) + " (>= 0), weight/correctness corr " + fmt("%.3f", corr) +
               " (> 0.5), teacher accuracy [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "], " + fmt("%.1f", s) +
               " s (< 300)");
  }
  {
    std::size_t files = 0, weights = 0;
    std::string bad;
    for (const auto& e : fs::recursive_directory_iterator(first)) {
      const std::string name = e.path().filename().string();
      if (!e.is_regular_file() || e.path().extension() != ".csv" || name.rfind("weights", 0) != 0) continue;
      const CsvTable t = read_csv_table(e.path());
      // Histogram exports share the prefix but carry counts.
      if (std::find(t.header.begin(), t.header.end(), "weight") == t.header.end()) continue;
      const std::size_t col = t.column("weight");
      const bool labeled = name.find("labeled") != std::string::npos && name.find("unlabeled") == std::string::npos;
      ++files;
      for (const auto& row : t.rows) {
        const double w = row[col];
        ++weights;
        if (!(w >= 0.0 && w <= 1.0) || (labeled && w != 1.0)) bad = e.path().string();
      }
    }
    report(8, files > 0 && bad.empty(),
           std::to_string(weights) + " weights in " + std::to_string(files) + " files" +
               (bad.empty() ? "" : ", first offending file " + bad));
  }
  {
    bool same = false;
    std::string detail;
    try {
      for (ExperimentId id : kOrder) run(id, second);
      const auto a = snapshot(first), b = snapshot(second);
      same = a == b;
      detail = std::to_string(a.size()) + " files compared";
      if (!same) {
        for (const auto& [path, bytes] : a) {
          auto it = b.find(path);
          if (it == b.end() || it->second != bytes) {
            detail += ", first difference " + path.string();
            break;
          }
        }
      }
    } catch (const std::exception& e) {
      detail = e.what();
    }
    report(9, same, detail);
  }

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
