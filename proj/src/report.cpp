#include "wdistill/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wdistill/csv_io.hpp"

namespace wdistill {

using nlohmann::json;

namespace {

json sgd_to_json(const SgdConfig& c) {
  return {{"iterations", c.iterations},
          {"schedule", c.schedule == StepSchedule::constant ? "constant" : "inverse_sqrt"},
          {"step_scale", c.step_scale},
          {"radius", c.radius},
          {"seed", c.seed},
          {"sampling", c.sampling == Sampling::with_replacement ? "with_replacement" : "permutation"}};
}

SgdConfig sgd_from_json(const json& j) {
  SgdConfig c;
  c.iterations = j.at("iterations").get<std::size_t>();
  c.schedule = j.at("schedule") == "constant" ? StepSchedule::constant : StepSchedule::inverse_sqrt;
  c.step_scale = j.at("step_scale").get<double>();
  c.radius = j.at("radius").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sampling = j.at("sampling") == "with_replacement" ? Sampling::with_replacement : Sampling::permutation;
  return c;
}

// NaN is not representable in JSON; it is written as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json weight_summary(const std::vector<double>& w) {
  if (w.empty()) return {{"count", 0}};
  const double n = static_cast<double>(w.size());
  const double mean = pairwise_sum(w) / n;
  std::vector<double> sq(w.size());
  std::size_t below = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sq[i] = (w[i] - mean) * (w[i] - mean);
    below += w[i] < 1.0 ? 1 : 0;
  }
  return {{"count", w.size()},
          {"mean", mean},
          {"std", std::sqrt(pairwise_sum(sq) / n)},
          {"min", *std::min_element(w.begin(), w.end())},
          {"max", *std::max_element(w.begin(), w.end())},
          {"fraction_below_one", static_cast<double>(below) / n}};
}

json run_to_json(const SchemeRun& run) {
  json traj = json::array();
  std::vector<double> acc;
  for (const auto& pt : run.trajectory) {
    traj.push_back({{"step", pt.step},
                    {"frobenius_norm", pt.frobenius_norm},
                    {"train_loss", pt.train_loss},
                    {"heldout_loss", pt.heldout_loss},
                    {"test_accuracy", pt.test_accuracy}});
    acc.push_back(pt.test_accuracy);
  }
  json hist = json::array();
  for (const auto& b : run.histogram) hist.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
  return {{"scheme", to_string(run.scheme)},
          {"final_accuracy", run.final_accuracy},
          {"best_accuracy", run.best_accuracy},
          {"accuracy", acc},
          {"trajectory", traj},
          {"estimate_calls", run.estimate_calls},
          {"weight_correctness_corr", number(run.weight_correctness_corr)},
          {"weights", weight_summary(run.weights)},
          {"histogram", hist}};
}

SchemeRun run_from_json(const json& j) {
  SchemeRun run;
  run.scheme = parse_weight_scheme(j.at("scheme").get<std::string>());
  run.final_accuracy = j.at("final_accuracy").get<double>();
  run.best_accuracy = j.at("best_accuracy").get<double>();
  run.estimate_calls = j.at("estimate_calls").get<std::size_t>();
  run.weight_correctness_corr = number_from(j.at("weight_correctness_corr"));
  for (const auto& p : j.at("trajectory")) {
    run.trajectory.push_back({p.at("step").get<std::size_t>(), p.at("frobenius_norm").get<double>(),
                              p.at("train_loss").get<double>(), p.at("heldout_loss").get<double>(),
                              p.at("test_accuracy").get<double>()});
  }
  for (const auto& b : j.at("histogram")) {
    run.histogram.push_back({b.at("lo").get<double>(), b.at("hi").get<double>(), b.at("count").get<std::size_t>()});
  }
  return run;
}

}  // namespace

json report_to_json(const DistillReport& report) {
  const DistillConfig& c = report.config;
  json config = {{"teacher_dim", c.teacher_dim},
                 {"student_dim", c.student_dim},
                 {"label_mode", to_string(c.label_mode)},
                 {"refresh", c.refresh},
                 {"scheme", to_string(c.scheme)},
                 {"metric", to_string(c.metric)},
                 {"temperature", c.temperature},
                 {"seed", c.seed},
                 {"teacher_sgd", sgd_to_json(c.teacher_sgd)},
                 {"pretrain_sgd", sgd_to_json(c.pretrain_sgd)},
                 {"student_sgd", sgd_to_json(c.student_sgd)},
                 {"log_every", c.log_every},
                 {"histogram_bins", c.histogram_bins},
                 {"merge_validation", c.merge_validation}};
  return {{"config", config},
          {"teacher_test_accuracy", report.teacher_test_accuracy},
          {"teacher_unlabeled_accuracy", number(report.teacher_unlabeled_accuracy)},
          {"pretrain_test_accuracy", report.pretrain_test_accuracy},
          {"primary", run_to_json(report.primary)},
          {"baseline", run_to_json(report.baseline)}};
}

DistillReport report_from_json(const json& j) {
  DistillReport r;
  const json& c = j.at("config");
  r.config.teacher_dim = c.at("teacher_dim").get<int>();
  r.config.student_dim = c.at("student_dim").get<int>();
  r.config.label_mode = parse_label_mode(c.at("label_mode").get<std::string>());
  r.config.refresh = c.at("refresh").get<std::size_t>();
  r.config.scheme = parse_weight_scheme(c.at("scheme").get<std::string>());
  r.config.metric = parse_metric(c.at("metric").get<std::string>());
  r.config.temperature = c.at("temperature").get<double>();
  r.config.seed = c.at("seed").get<std::uint64_t>();
  r.config.teacher_sgd = sgd_from_json(c.at("teacher_sgd"));
  r.config.pretrain_sgd = sgd_from_json(c.at("pretrain_sgd"));
  r.config.student_sgd = sgd_from_json(c.at("student_sgd"));
  r.config.log_every = c.at("log_every").get<std::size_t>();
  r.config.histogram_bins = c.at("histogram_bins").get<std::size_t>();
  r.config.merge_validation = c.at("merge_validation").get<bool>();
  r.teacher_test_accuracy = j.at("teacher_test_accuracy").get<double>();
  r.teacher_unlabeled_accuracy = number_from(j.at("teacher_unlabeled_accuracy"));
  r.pretrain_test_accuracy = j.at("pretrain_test_accuracy").get<double>();
  r.primary = run_from_json(j.at("primary"));
  r.baseline = run_from_json(j.at("baseline"));
  return r;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void export_plot_data(const DistillReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto trajectory = [&](const SchemeRun& run) {
    CsvTable t;
    t.header = {"step", "test_accuracy"};
    for (const auto& pt : run.trajectory) t.rows.push_back({static_cast<double>(pt.step), pt.test_accuracy});
    if (!t.rows.empty()) write_csv_table(t, out_dir / ("trajectory_" + to_string(run.scheme) + ".csv"));
  };
  trajectory(report.primary);
  if (report.baseline.scheme != report.primary.scheme) trajectory(report.baseline);

  CsvTable h;
  h.header = {"bin_lo", "bin_hi", "count"};
  for (const auto& b : report.primary.histogram) h.rows.push_back({b.lo, b.hi, static_cast<double>(b.count)});
  if (!h.rows.empty()) write_csv_table(h, out_dir / "weights_hist.csv");
}

}  // namespace wdistill
