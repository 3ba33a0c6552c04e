// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lcurve/bma.hpp"
#include "lcurve/data.hpp"
#include "lcurve/profiler.hpp"
#include "lcurve/trainer.hpp"

namespace lcurve {

/// Comma-delimited, header row, '.' decimal point, LF line endings,
/// round-trippable doubles. Cells holding a comma, quote or line break are
/// quoted with embedded quotes doubled.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(const std::vector<std::string>& cells);
  std::string str() const { return text_; }
  void save(const std::filesystem::path& path) const;

  static std::string cell(double v);
  static std::string cell(long long v);

 private:
  std::size_t columns_;
  std::string text_;
};

/// t, loss, acc, grad_norm, speed
CsvWriter profile_csv(const LossProfile& profile);
/// step, lr, train_loss, jsd, val_ll
CsvWriter train_log_csv(const TrainReport& report);
/// example_id, t, class, probability
CsvWriter evolution_csv(const ProbabilityEvolution& evolution);
/// feature columns x0..x{d-1}, label
CsvWriter dataset_csv(const Split& split);

}  // namespace lcurve
