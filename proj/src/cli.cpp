#include "wdistill/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "wdistill/config.hpp"
#include "wdistill/csv_io.hpp"
#include "wdistill/experiments.hpp"
#include "wdistill/report.hpp"

namespace wdistill {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scheme;
  std::optional<std::string> metric;
  std::optional<std::string> label_mode;
  std::optional<std::size_t> refresh;
};

KeyValueConfig load_config(const Flags& f) {
  KeyValueConfig kv = f.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(f.config);
  auto override = [&](const std::string& key, const std::optional<std::string>& v) {
    if (!v) return;
    kv.set(key, *v);
    kv.mark_used(key);
  };
  override("seed", f.seed ? std::optional(std::to_string(*f.seed)) : std::nullopt);
  override("out", f.out);
  override("distill.scheme", f.scheme);
  override("distill.metric", f.metric);
  override("distill.label_mode", f.label_mode);
  override("distill.refresh", f.refresh ? std::optional(std::to_string(*f.refresh)) : std::nullopt);
  return kv;
}

std::size_t trials_from(const KeyValueConfig& kv) {
  const std::size_t n = kv.get_count("trials", 1);
  if (n < 1) throw ConfigError("trials", "must be >= 1");
  return n;
}

fs::path trial_dir(const fs::path& out, std::size_t trials, std::size_t k) {
  return trials == 1 ? out : out / ("trial" + std::to_string(k));
}

int cmd_simulate(const KeyValueConfig& kv) {
  const fs::path out = kv.get_string("out", "out");
  const std::uint64_t seed = kv.get_u64("seed", 0);
  const std::size_t trials = trials_from(kv);
  const std::string task = kv.get_string("simulate.task", "mixture");
  if (task == "mixture") {
    const MixtureSpec spec = mixture_spec_from(kv);
    kv.reject_unused();
    for (std::size_t k = 0; k < trials; ++k) {
      const fs::path dir = trial_dir(out, trials, k);
      fs::create_directories(dir);
      const MixtureTask t = synthetic_mixture_task(spec, trial_seed(seed, k));
      save_csv(t.labeled, dir / "labeled.csv");
      save_csv(t.unlabeled, dir / "unlabeled.csv");
      save_csv(t.validation, dir / "validation.csv");
      save_csv(t.test, dir / "test.csv");
      std::cout << "trial " << k << ": mixture d=" << spec.dim << " L=" << spec.num_classes << " labeled "
                << t.labeled.size() << " unlabeled " << t.unlabeled.size() << " validation " << t.validation.size()
                << " test " << t.test.size() << "\n";
    }
  } else if (task == "sphere") {
    const auto dim = kv.get_int("sphere.dim", 10);
    const double noise = kv.get_double("sphere.noise", 0.2);
    std::optional<double> radius;
    if (kv.has("sphere.radius")) radius = kv.get_double("sphere.radius", 1.0);
    const std::size_t n = kv.get_count("simulate.samples", 1000);
    if (dim < 2) throw ConfigError("sphere.dim", "must be >= 2");
    if (!(noise > 0.0 && noise < 1.0)) throw ConfigError("sphere.noise", "must lie in (0, 1)");
    if (radius && !(*radius > 0.0)) throw ConfigError("sphere.radius", "must be > 0");
    if (n < 1) throw ConfigError("simulate.samples", "must be >= 1");
    kv.reject_unused();
    for (std::size_t k = 0; k < trials; ++k) {
      const fs::path dir = trial_dir(out, trials, k);
      fs::create_directories(dir);
      const std::uint64_t ts = trial_seed(seed, k);
      const SphereProblem p = make_sphere_instance(static_cast<int>(dim), noise,
                                                   derive_seed(ts, static_cast<std::uint64_t>(Purpose::sphere_setup)), radius);
      const std::uint64_t draw_seed = derive_seed(ts, static_cast<std::uint64_t>(Purpose::features));
      const Dataset clean = sample_clean(p.model, n, draw_seed);
      const Dataset noisy = sample_noisy(p.model, n, draw_seed);
      save_csv(clean, dir / "sphere_clean.csv");
      save_csv(noisy, dir / "sphere_noisy.csv");
      std::size_t flipped = 0;
      for (std::size_t i = 0; i < n; ++i) flipped += clean.examples[i].y == noisy.examples[i].y ? 0 : 1;
      std::cout << "trial " << k << ": sphere d=" << dim << " c=" << noise << " R=" << p.instance.radius << " samples "
                << n << " flipped " << flipped << "\n";
    }
  } else {
    throw ConfigError("simulate.task", "expected mixture or sphere");
  }
  return kExitOk;
}

int cmd_distill(const KeyValueConfig& kv) {
  const fs::path out = kv.get_string("out", "out");
  const std::uint64_t seed = kv.get_u64("seed", 0);
  const std::size_t trials = trials_from(kv);
  // Read every key once before training so that typos fail fast.
  const DistillSplits first = distill_splits_from(kv, trial_seed(seed, 0));
  (void)distill_config_from(kv, first.labeled.dim(), seed);
  kv.reject_unused();
  fs::create_directories(out);
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t ts = trial_seed(seed, k);
    const DistillSplits s = k == 0 ? first : distill_splits_from(kv, ts);
    const DistillConfig cfg = distill_config_from(kv, s.labeled.dim(), ts);
    const DistillReport r = run_distillation(s.labeled, s.unlabeled, s.validation, s.test, cfg);
    write_distill_outputs(r, s.labeled.size() + (cfg.merge_validation ? s.validation.size() : 0), k, out);
    std::cout << "trial " << k << ": teacher " << r.teacher_test_accuracy << " " << to_string(r.primary.scheme) << " "
              << r.primary.final_accuracy << " unit " << r.baseline.final_accuracy << " corr "
              << r.primary.weight_correctness_corr << "\n";
  }
  return kExitOk;
}

int cmd_experiment(const KeyValueConfig& kv) {
  const ExperimentConfig cfg = experiment_config_from(kv);
  const ExperimentResult res = run_experiment(cfg);
  for (const auto& line : res.lines) std::cout << to_string(res.id) << " " << line << "\n";
  nlohmann::json metrics(res.metrics);
  write_json({{"experiment", to_string(res.id)}, {"seed", cfg.seed}, {"trials", cfg.trials}, {"metrics", metrics}},
             cfg.out_dir / (to_string(res.id) + "_metrics.json"));
  return kExitOk;
}

int cmd_estimate_weights(const KeyValueConfig& kv) {
  const fs::path out = kv.get_string("out", "out");
  const std::uint64_t seed = kv.get_u64("seed", 0);
  const DistillSplits s = distill_splits_from(kv, trial_seed(seed, 0));
  const DistillConfig cfg = distill_config_from(kv, s.labeled.dim(), trial_seed(seed, 0));
  kv.reject_unused();
  fs::create_directories(out);
  const WeightEstimation est = estimate_pool_weights(s.labeled, s.unlabeled, s.validation, cfg);
  save_index_csv(est.index, out / "index.csv");
  save_weight_csv(est.records, out / "weights_unlabeled.csv");
  save_weight_csv(std::vector<WeightRecord>(s.labeled.size()), out / "weights_labeled.csv");
  double sum = 0.0;
  std::size_t flagged = 0;
  for (const auto& r : est.records) {
    sum += r.weight;
    flagged += r.flagged ? 1 : 0;
  }
  std::cout << "trial 0: |V| " << est.index.size() << " k " << est.index.k << " mean weight "
            << sum / static_cast<double>(est.records.size()) << " flagged " << flagged << "\n";
  return kExitOk;
}

int cmd_export_plots(const KeyValueConfig& kv) {
  const fs::path out = kv.get_string("out", "out");
  const std::string path = kv.require_string("report");
  kv.reject_unused();
  const DistillReport r = report_from_json(read_json(path));
  export_plot_data(r, out);
  std::cout << "trial 0: " << to_string(r.primary.scheme) << " trajectory points " << r.primary.trajectory.size()
            << " histogram bins " << r.primary.histogram.size() << "\n";
  return kExitOk;
}

}  // namespace

int cli_run(const std::vector<std::string>& argv) {
  CLI::App app{"Debiasing-reweighted distillation toolkit", "wdistill"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "Configuration file (key = value lines)");
  app.add_option("--seed", f.seed, "Global seed");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--scheme", f.scheme, "Weight scheme")->check(CLI::IsMember({"ours", "unit", "fidelity", "composition"}));
  app.add_option("--metric", f.metric, "Confidence metric")->check(CLI::IsMember({"margin", "entropy"}));
  app.add_option("--label-mode", f.label_mode, "Teacher label mode")->check(CLI::IsMember({"soft", "hard"}));
  app.add_option("--refresh", f.refresh, "Weight-estimation rounds")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic datasets as CSV");
  auto* distill = app.add_subcommand("distill", "Run the distillation pipeline");
  auto* experiment = app.add_subcommand("experiment", "Run a named experiment");
  auto* estimate = app.add_subcommand("estimate-weights", "Estimate weights for an unlabeled pool");
  auto* plots = app.add_subcommand("export-plots", "Write plot data from a report");

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const KeyValueConfig kv = load_config(f);
    if (simulate->parsed()) return cmd_simulate(kv);
    if (distill->parsed()) return cmd_distill(kv);
    if (experiment->parsed()) return cmd_experiment(kv);
    if (estimate->parsed()) return cmd_estimate_weights(kv);
    if (plots->parsed()) return cmd_export_plots(kv);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_run(int argc, const char* const* argv) { return cli_run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace wdistill
