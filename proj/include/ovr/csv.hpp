#pragma once

// Minimal RFC-4180 CSV reading/writing and the run-record schema.

#include "ovr/common.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace ovr {

using CsvRow = std::vector<std::string>;

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw InvalidArgument("csv: unknown column '" + name + "'");
  }
};

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv_row(std::ostream& os, const CsvRow& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << csv_escape(row[i]);
  }
  os << '\n';
}

// Reads one record; quoted fields may span lines. Returns false at EOF.
inline bool read_csv_row(std::istream& is, CsvRow& row) {
  row.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (is.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (!any) return false;
  row.push_back(std::move(field));
  return true;
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  if (!read_csv_row(is, t.header)) throw FormatError("csv: missing header row");
  CsvRow row;
  std::size_t line = 1;
  while (read_csv_row(is, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != t.header.size())
      throw FormatError("csv: record " + std::to_string(line) + " has " + std::to_string(row.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(row);
  }
  return t;
}

// Doubles round-trip exactly at 17 significant digits; NaN is an empty cell.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double_cell(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("csv: not a number: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("csv: not a number: '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Run records

struct RunRecord {
  std::string run_id;
  std::string config_hash;
  std::string version = kVersion;
  std::string status;  // "epoch", "final" or "failed"
  std::string model;
  std::string dataset;
  int hidden = 0;
  double lambda = 0.0;
  std::string activation;
  std::uint64_t seed = 0;
  int epoch = -1;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double sparsity = std::numeric_limits<double>::quiet_NaN();
  double mean_activation = std::numeric_limits<double>::quiet_NaN();
  double probe_accuracy = std::numeric_limits<double>::quiet_NaN();
  double wall_time_seconds = 0.0;
  std::string message;
};

inline const CsvRow& run_record_header() {
  static const CsvRow header = {"run_id",     "config_hash", "version",  "status",          "model",
                                "dataset",    "hidden",      "lambda",   "activation",      "seed",
                                "epoch",      "train_loss",  "val_loss", "sparsity",        "mean_activation",
                                "probe_accuracy", "wall_time_seconds", "message"};
  return header;
}

inline CsvRow to_row(const RunRecord& r) {
  return {r.run_id,
          r.config_hash,
          r.version,
          r.status,
          r.model,
          r.dataset,
          std::to_string(r.hidden),
          format_double(r.lambda),
          r.activation,
          std::to_string(r.seed),
          std::to_string(r.epoch),
          format_double(r.train_loss),
          format_double(r.val_loss),
          format_double(r.sparsity),
          format_double(r.mean_activation),
          format_double(r.probe_accuracy),
          format_double(r.wall_time_seconds),
          r.message};
}

inline RunRecord from_row(const CsvRow& row) {
  if (row.size() != run_record_header().size())
    throw FormatError("run record: expected " + std::to_string(run_record_header().size()) + " fields, got " +
                      std::to_string(row.size()));
  RunRecord r;
  r.run_id = row[0];
  r.config_hash = row[1];
  r.version = row[2];
  r.status = row[3];
  r.model = row[4];
  r.dataset = row[5];
  try {
    r.hidden = std::stoi(row[6]);
    r.seed = std::stoull(row[9]);
    r.epoch = std::stoi(row[10]);
  } catch (const std::exception&) {
    throw FormatError("run record: malformed integer field in run '" + row[0] + "'");
  }
  r.lambda = parse_double_cell(row[7]);
  r.activation = row[8];
  r.train_loss = parse_double_cell(row[11]);
  r.val_loss = parse_double_cell(row[12]);
  r.sparsity = parse_double_cell(row[13]);
  r.mean_activation = parse_double_cell(row[14]);
  r.probe_accuracy = parse_double_cell(row[15]);
  r.wall_time_seconds = parse_double_cell(row[16]);
  r.message = row[17];
  return r;
}

inline void write_run_records(std::ostream& os, const std::vector<RunRecord>& records) {
  write_csv_row(os, run_record_header());
  for (const auto& r : records) write_csv_row(os, to_row(r));
}

inline std::vector<RunRecord> read_run_records(std::istream& is) {
  const CsvTable t = read_csv(is);
  if (t.header != run_record_header()) throw FormatError("run records: header does not match the run-record schema");
  std::vector<RunRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(from_row(row));
  return out;
}

}  // namespace ovr
