#include "sharpdim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

namespace sharpdim {

namespace {

const std::vector<std::string>& hyperparam_names() {
  static const std::vector<std::string> names = {"eta", "batch_size", "weight_decay", "momentum", "seed"};
  return names;
}

const std::vector<std::string>& stat_names() {
  static const std::vector<std::string> names = {"train_loss", "test_loss", "train_acc", "test_acc",
                                                 "acc_gap",    "loss_gap"};
  return names;
}

}  // namespace

std::optional<double> RunRecord::value(const std::string& name) const {
  if (auto it = hyperparams.find(name); it != hyperparams.end()) return it->second;
  if (name == "train_loss") return train_loss;
  if (name == "test_loss") return test_loss;
  if (name == "train_acc") return train_acc;
  if (name == "test_acc") return test_acc;
  if (name == "acc_gap" || name == "loss_gap") {
    if (!train_loss || !test_loss || !train_acc || !test_acc) return std::nullopt;
    const auto g = generalization_gap(*this);
    return name == "acc_gap" ? g.acc_gap : g.loss_gap;
  }
  if (auto it = measures.find(name); it != measures.end()) return it->second;
  return std::nullopt;
}

GeneralizationGap generalization_gap(const RunRecord& rec) {
  if (!rec.train_loss || !rec.test_loss || !rec.train_acc || !rec.test_acc)
    throw std::invalid_argument("generalization_gap: run " + rec.run_id + " is missing train/test statistics");
  return {std::abs(*rec.train_acc - *rec.test_acc), std::abs(*rec.train_loss - *rec.test_loss)};
}

namespace {

using i64 = long long;

i64 tied_pairs(std::span<const double> sorted) {
  i64 total = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Sorts v ascending and returns the number of strict inversions.
i64 merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  i64 swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<i64>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least two observations");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }

  const i64 n0 = static_cast<i64>(n) * static_cast<i64>(n - 1) / 2;
  const i64 n1 = tied_pairs(xs);
  i64 n3 = 0, run = 1;  // pairs tied in both variables
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
      ++run;
    } else {
      n3 += run * (run - 1) / 2;
      run = 1;
    }
  }
  std::vector<double> buf(n);
  const i64 swaps = merge_count(ys, buf, 0, n);
  const i64 n2 = tied_pairs(ys);

  const i64 not_tied_x = n0 - n1;
  const i64 not_tied_y = n0 - n2;
  if (not_tied_x == 0 || not_tied_y == 0) return std::nullopt;
  const i64 concordant_minus_discordant = n0 - n1 - n2 + n3 - 2 * swaps;
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(not_tied_x) * static_cast<double>(not_tied_y));
}

double granulated_kendall(const std::vector<RunRecord>& records, const std::string& measure, const std::string& target,
                          const std::string& axis) {
  std::map<std::vector<std::pair<std::string, double>>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<std::pair<std::string, double>> key;
    for (const auto& [name, v] : records[i].hyperparams)
      if (name != axis) key.emplace_back(name, v);
    groups[key].push_back(i);
  }
  double sum = 0.0;
  std::size_t valid = 0;
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    std::vector<double> xs, ys;
    for (auto i : members) {
      const auto m = records[i].value(measure);
      const auto t = records[i].value(target);
      if (!m || !t) throw std::invalid_argument("granulated_kendall: run " + records[i].run_id + " lacks '" +
                                                (m ? target : measure) + "'");
      xs.push_back(*m);
      ys.push_back(*t);
    }
    if (auto tau = kendall_tau(xs, ys)) {
      sum += *tau;
      ++valid;
    }
  }
  if (valid == 0)
    throw std::invalid_argument("granulated_kendall: no group along '" + axis + "' has a defined tau for " + measure +
                                " vs " + target);
  return sum / static_cast<double>(valid);
}

const std::vector<std::pair<std::string, std::string>>& granulation_axes() {
  static const std::vector<std::pair<std::string, std::string>> axes = {
      {"eta", "psi_lr"}, {"batch_size", "psi_bs"}, {"weight_decay", "psi_wd"}};
  return axes;
}

std::vector<CorrelationCell> correlation_matrix(const std::vector<RunRecord>& records,
                                                const std::vector<std::string>& measures,
                                                const std::vector<std::string>& targets) {
  if (records.empty()) throw std::invalid_argument("correlation_matrix: no records");
  std::vector<CorrelationCell> cells;
  for (const auto& m : measures) {
    for (const auto& t : targets) {
      CorrelationCell cell{m, t, std::nullopt, {}, std::nullopt};
      std::vector<double> xs, ys;
      for (const auto& r : records) {
        const auto mv = r.value(m);
        const auto tv = r.value(t);
        if (!mv || !tv) throw std::invalid_argument("correlation_matrix: run " + r.run_id + " lacks '" + (mv ? t : m) + "'");
        xs.push_back(*mv);
        ys.push_back(*tv);
      }
      cell.tau = kendall_tau(xs, ys);
      double psi_sum = 0.0;
      for (const auto& [axis, column] : granulation_axes()) {
        std::set<double> distinct;
        for (const auto& r : records)
          if (auto it = r.hyperparams.find(axis); it != r.hyperparams.end()) distinct.insert(it->second);
        if (distinct.size() < 2) continue;
        try {
          const double psi = granulated_kendall(records, m, t, axis);
          cell.psi[axis] = psi;
          psi_sum += psi;
        } catch (const std::invalid_argument&) {
          // no group with a defined tau along this axis: left blank
        }
      }
      if (!cell.psi.empty()) cell.avg_psi = psi_sum / static_cast<double>(cell.psi.size());
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCell>& cells) {
  out << "measure,target,tau";
  for (const auto& [axis, column] : granulation_axes()) out << ',' << column;
  out << ",avg_psi\n";
  auto opt = [](std::optional<double> v) { return v ? format_double(*v) : std::string(); };
  for (const auto& c : cells) {
    out << c.measure << ',' << c.target << ',' << opt(c.tau);
    for (const auto& [axis, column] : granulation_axes()) {
      auto it = c.psi.find(axis);
      out << ',' << (it == c.psi.end() ? std::string() : format_double(it->second));
    }
    out << ',' << opt(c.avg_psi) << '\n';
  }
}

std::vector<std::string> run_record_columns(const std::vector<RunRecord>& records) {
  std::vector<std::string> cols = {"run_id"};
  for (const auto& h : hyperparam_names()) cols.push_back(h);
  for (const auto& s : stat_names()) cols.push_back(s);
  std::set<std::string> measures;
  for (const auto& r : records)
    for (const auto& [name, v] : r.measures) measures.insert(name);
  cols.insert(cols.end(), measures.begin(), measures.end());
  return cols;
}

CsvTable records_to_table(const std::vector<RunRecord>& records) {
  CsvTable t;
  t.header = run_record_columns(records);
  for (const auto& r : records) {
    std::vector<std::string> row;
    row.push_back(r.run_id);
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      const auto v = r.value(t.header[c]);
      row.push_back(v ? format_double(*v) : std::string());
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<RunRecord> records_from_table(const CsvTable& table) {
  std::vector<RunRecord> out;
  const auto& hp = hyperparam_names();
  for (const auto& row : table.rows) {
    RunRecord r;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const std::string& name = table.header[c];
      const std::string& cell = row[c];
      if (name == "run_id") {
        r.run_id = cell;
        continue;
      }
      if (cell.empty() || name == "acc_gap" || name == "loss_gap") continue;
      double v;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("column '" + name + "': cannot parse '" + cell + "'");
      }
      if (std::find(hp.begin(), hp.end(), name) != hp.end())
        r.hyperparams[name] = v;
      else if (name == "train_loss")
        r.train_loss = v;
      else if (name == "test_loss")
        r.test_loss = v;
      else if (name == "train_acc")
        r.train_acc = v;
      else if (name == "test_acc")
        r.test_acc = v;
      else
        r.measures[name] = v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sharpdim
