#include "wdistill/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wdistill {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& text, std::size_t row, const std::filesystem::path& path) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw Error(path.string() + ": row " + std::to_string(row) + ": cannot parse '" + text + "'");
  }
  if (!std::isfinite(v)) throw Error(path.string() + ": row " + std::to_string(row) + ": non-finite value");
  return v;
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (table.header.empty()) {
      table.header = split_line(line);
      continue;
    }
    // Rows are numbered from 1 after the header.
    const std::size_t row = table.rows.size() + 1;
    const auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw Error(path.string() + ": row " + std::to_string(row) + ": expected " +
                  std::to_string(table.header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> values;
    values.reserve(cells.size());
    for (const auto& c : cells) values.push_back(parse_cell(c, row, path));
    table.rows.push_back(std::move(values));
  }
  if (table.rows.empty()) throw Error(path.string() + ": no rows");
  return table;
}

void write_csv_table(const CsvTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t j = 0; j < table.header.size(); ++j) out << (j ? "," : "") << table.header[j];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  if (data.empty()) throw Error("cannot save an empty dataset");
  data.validate();
  const int d = data.dim();
  const int L = data.num_classes();
  const bool hard = data.labels_valid &&
                    std::all_of(data.examples.begin(), data.examples.end(), [](const Example& e) {
                      return e.y.is_one_hot();
                    });
  CsvTable t;
  t.header = numbered("f", d);
  if (data.labels_valid) {
    if (hard) {
      t.header.push_back("label");
    } else {
      const auto ps = numbered("p", L);
      t.header.insert(t.header.end(), ps.begin(), ps.end());
    }
  }
  for (const auto& ex : data.examples) {
    std::vector<double> row(ex.x.data(), ex.x.data() + d);
    if (data.labels_valid) {
      if (hard) {
        row.push_back(ex.y.argmax());
      } else {
        for (int k = 0; k < L; ++k) row.push_back(ex.y[k]);
      }
    }
    t.rows.push_back(std::move(row));
  }
  write_csv_table(t, path);
}

Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes, Split split) {
  const CsvTable t = read_csv_table(path);
  int d = 0;
  while (d < static_cast<int>(t.header.size()) && t.header[d] == "f" + std::to_string(d)) ++d;
  if (d == 0) throw Error(path.string() + ": header must start with f0");
  const std::size_t rest = t.header.size() - static_cast<std::size_t>(d);

  enum class Kind { features, hard, soft } kind;
  if (rest == 0) {
    kind = Kind::features;
  } else if (rest == 1 && t.header[d] == "label") {
    kind = Kind::hard;
  } else {
    for (std::size_t k = 0; k < rest; ++k) {
      if (t.header[d + k] != "p" + std::to_string(k)) {
        throw Error(path.string() + ": unexpected column '" + t.header[d + k] + "'");
      }
    }
    kind = Kind::soft;
  }

  int L = 0;
  if (kind == Kind::soft) {
    L = static_cast<int>(rest);
    if (num_classes && *num_classes != L) throw Error(path.string() + ": class count mismatch");
  } else if (num_classes) {
    L = *num_classes;
  } else if (kind == Kind::hard) {
    double mx = 0;
    for (const auto& r : t.rows) mx = std::max(mx, r[d]);
    L = std::max(2, static_cast<int>(mx) + 1);
  } else {
    throw Error(path.string() + ": feature-only file needs a class count");
  }

  Dataset data;
  data.split = split;
  data.labels_valid = kind != Kind::features;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path.string() + ": row " + std::to_string(i + 1);
    Example ex;
    ex.x = Eigen::Map<const Vec>(r.data(), d);
    if (kind == Kind::hard) {
      const double c = r[d];
      if (c != std::floor(c) || c < 0 || c >= L) throw Error(where + ": invalid label");
      ex.y = LabelVec::one_hot(L, static_cast<int>(c));
    } else if (kind == Kind::soft) {
      Vec p = Eigen::Map<const Vec>(r.data() + d, L);
      if (std::abs(p.sum() - 1.0) > 1e-6 || (p.array() < 0).any()) {
        throw Error(where + ": soft label must be non-negative and sum to 1");
      }
      p /= p.sum();
      ex.y = LabelVec::from_probs(p);
    } else {
      ex.y = LabelVec::uniform(L);
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

void save_weight_csv(std::span<const WeightRecord> records, const std::filesystem::path& path) {
  CsvTable t;
  t.header = {"index", "p_hat", "distortion_hat", "raw_weight", "weight"};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    t.rows.push_back({static_cast<double>(i), r.p_hat, r.distortion_hat, r.raw_weight, r.weight});
  }
  write_csv_table(t, path);
}

std::vector<WeightRecord> load_weight_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv_table(path);
  const std::size_t p = t.column("p_hat"), d = t.column("distortion_hat"), rw = t.column("raw_weight"),
                    w = t.column("weight");
  std::vector<WeightRecord> out;
  for (const auto& r : t.rows) out.push_back({r[p], r[d], r[rw], r[w], false});
  return out;
}

void save_index_csv(const ValidationIndex& index, const std::filesystem::path& path) {
  CsvTable t;
  t.header = {"tconf", "sconf", "p", "distortion"};
  for (std::size_t i = 0; i < index.size(); ++i) {
    t.rows.push_back({index.points[i][0], index.points[i][1], index.responses[i][0], index.responses[i][1]});
  }
  write_csv_table(t, path);
}

ValidationIndex load_index_csv(const std::filesystem::path& path, ConfidenceMetric metric) {
  const CsvTable t = read_csv_table(path);
  const std::size_t tc = t.column("tconf"), sc = t.column("sconf"), p = t.column("p"), d = t.column("distortion");
  ValidationIndex index;
  index.metric = metric;
  for (const auto& r : t.rows) {
    index.points.push_back({r[tc], r[sc]});
    index.responses.push_back({r[p], r[d]});
  }
  index.k = neighbor_count(index.size());
  index.validate();
  return index;
}

void save_trajectory_csv(std::span<const TrajectoryPoint> trajectory, const std::filesystem::path& path) {
  CsvTable t;
  t.header = {"step", "frobenius_norm", "train_loss", "heldout_loss"};
  for (const auto& pt : trajectory) {
    t.rows.push_back({static_cast<double>(pt.step), pt.frobenius_norm, pt.train_loss, pt.heldout_loss});
  }
  write_csv_table(t, path);
}

}  // namespace wdistill
