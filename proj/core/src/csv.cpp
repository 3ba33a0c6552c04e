// SPDX-License-Identifier: Apache-2.0
#include "lcurve/csv.hpp"

#include <cmath>
#include <fstream>
#include <locale>
#include <sstream>
#include <stdexcept>

namespace lcurve {

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) text_ += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n\r") == std::string::npos) {
      text_ += c;
      continue;
    }
    text_ += '"';
    for (char ch : c) {
      if (ch == '"') text_ += '"';
      text_ += ch;
    }
    text_ += '"';
  }
  text_ += '\n';
  return *this;
}

void CsvWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text_;
}

std::string CsvWriter::cell(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(17);
  s << v;
  return s.str();
}

std::string CsvWriter::cell(long long v) { return std::to_string(v); }

CsvWriter profile_csv(const LossProfile& profile) {
  CsvWriter csv({"t", "loss", "acc", "grad_norm", "speed"});
  const auto speed = profile.speed();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    csv.row({CsvWriter::cell(profile.t[i]), CsvWriter::cell(profile.loss[i]), CsvWriter::cell(profile.accuracy[i]),
             CsvWriter::cell(profile.grad_norm[i]), CsvWriter::cell(speed[i])});
  }
  return csv;
}

CsvWriter train_log_csv(const TrainReport& report) {
  CsvWriter csv({"step", "lr", "train_loss", "jsd", "val_ll"});
  for (const auto& s : report.steps) {
    csv.row({CsvWriter::cell(static_cast<long long>(s.step)), CsvWriter::cell(s.lr), CsvWriter::cell(s.train_loss),
             CsvWriter::cell(s.jsd), CsvWriter::cell(s.val_ll)});
  }
  return csv;
}

CsvWriter evolution_csv(const ProbabilityEvolution& evolution) {
  CsvWriter csv({"example_id", "t", "class", "probability"});
  for (std::size_t e = 0; e < evolution.probs.size(); ++e) {
    for (std::size_t j = 0; j < evolution.grid.size(); ++j) {
      const auto& p = evolution.probs[e][j];
      for (std::size_t c = 0; c < p.size(); ++c) {
        csv.row({CsvWriter::cell(static_cast<long long>(e)), CsvWriter::cell(evolution.grid[j]),
                 CsvWriter::cell(static_cast<long long>(c)), CsvWriter::cell(p[c])});
      }
    }
  }
  return csv;
}

CsvWriter dataset_csv(const Split& split) {
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < split.x.cols(); ++c) header.push_back("x" + std::to_string(c));
  header.emplace_back("label");
  CsvWriter csv(header);
  for (Eigen::Index r = 0; r < split.x.rows(); ++r) {
    std::vector<std::string> cells;
    for (Eigen::Index c = 0; c < split.x.cols(); ++c) cells.push_back(CsvWriter::cell(split.x(r, c)));
    cells.push_back(CsvWriter::cell(static_cast<long long>(split.y[static_cast<std::size_t>(r)])));
    csv.row(cells);
  }
  return csv;
}

}  // namespace lcurve
