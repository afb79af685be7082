#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sharpdim/csv.hpp"

namespace sharpdim {

/// One training run: hyperparameters, final statistics and complexity measures.
struct RunRecord {
  std::string run_id;
  std::map<std::string, double> hyperparams;  // eta, batch_size, weight_decay, momentum, seed
  std::optional<double> train_loss, test_loss, train_acc, test_acc;
  std::map<std::string, double> measures;

  /// Looks up a hyperparameter, statistic, gap (acc_gap / loss_gap) or measure.
  std::optional<double> value(const std::string& name) const;
};

struct GeneralizationGap {
  double acc_gap = 0.0;
  double loss_gap = 0.0;
};

GeneralizationGap generalization_gap(const RunRecord& rec);

/// Kendall tau-b in O(n log n). Returns nullopt when either input is
/// constant (tau undefined). Throws on size errors.
std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y);

/// Mean Kendall tau of measure vs target over groups of records that agree on
/// every hyperparameter except `axis`. Groups with fewer than two members or
/// an undefined tau are skipped; throws if no group remains.
double granulated_kendall(const std::vector<RunRecord>& records, const std::string& measure, const std::string& target,
                          const std::string& axis);

struct CorrelationCell {
  std::string measure;
  std::string target;
  std::optional<double> tau;
  std::map<std::string, double> psi;  // axis -> granulated tau, present axes only
  std::optional<double> avg_psi;
};

/// Hyperparameter axes reported in correlation matrices, with CSV column names.
const std::vector<std::pair<std::string, std::string>>& granulation_axes();

std::vector<CorrelationCell> correlation_matrix(const std::vector<RunRecord>& records,
                                                const std::vector<std::string>& measures,
                                                const std::vector<std::string>& targets);

/// Header `measure,target,tau,psi_lr,psi_bs,psi_wd,avg_psi`; absent cells blank.
void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCell>& cells);

/// Column order used for runs.csv.
std::vector<std::string> run_record_columns(const std::vector<RunRecord>& records);
CsvTable records_to_table(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_table(const CsvTable& table);

}  // namespace sharpdim
