#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "balancer/model.hpp"
#include "balancer/simlab.hpp"

namespace balancer {

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& path, long line, long column, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) +
                           (column > 0 ? ", column " + std::to_string(column) : "") + ": " + what),
        line_(line),
        column_(column) {}
  long line() const { return line_; }
  long column() const { return column_; }

 private:
  long line_, column_;
};

/// Shortest round-trippable decimal form; locale-independent.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lg", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[40];
      std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
      std::sscanf(probe, "%lg", &back);
      if (back == v) return probe;
    }
  }
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

/// Input covariate file: header row, first column the unit id (string), the
/// remaining columns numeric covariates. UTF-8, '.' decimal separator.
inline UnitTable read_unit_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(path, 0, 0, "cannot open file");

  UnitTable table;
  std::string line;
  long lineno = 0;
  std::vector<std::vector<double>> rows;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.eof()) break;
    const auto fields = split_csv_line(line);
    if (lineno == 1) {
      if (fields.size() < 2) throw CsvError(path, 1, 0, "header needs unit_id plus covariates");
      ncols = fields.size();
      continue;
    }
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() != ncols)
      throw CsvError(path, lineno, 0,
                     "expected " + std::to_string(ncols) + " fields, got " +
                         std::to_string(fields.size()));
    table.ids.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      std::size_t consumed = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[j], &consumed);
      } catch (const std::exception&) {
        throw CsvError(path, lineno, static_cast<long>(j + 1),
                       "not a numeric covariate: '" + fields[j] + "'");
      }
      if (consumed != fields[j].size() || !std::isfinite(v))
        throw CsvError(path, lineno, static_cast<long>(j + 1),
                       "not a numeric covariate: '" + fields[j] + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw CsvError(path, lineno, 0, "needs at least two data rows");

  table.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < ncols; ++j)
      table.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

/// Allocation output: unit_id, arm, order_index (1-based position in the
/// allocation sequence). Body is byte-identical across reruns.
inline void write_allocation_csv(const std::string& path, const UnitTable& table,
                                 const Allocation& alloc) {
  std::ofstream out(path);
  if (!out) throw CsvError(path, 0, 0, "cannot open for writing");
  std::vector<long> rank(static_cast<std::size_t>(alloc.n()));
  for (std::size_t k = 0; k < alloc.order.size(); ++k)
    rank[static_cast<std::size_t>(alloc.order[k])] = static_cast<long>(k + 1);
  out << "unit_id,arm,order_index\n";
  for (Eigen::Index i = 0; i < alloc.n(); ++i)
    out << table.id_of(i) << ',' << alloc.arms[static_cast<std::size_t>(i)] << ','
        << rank[static_cast<std::size_t>(i)] << '\n';
}

inline nlohmann::json allocation_sidecar(const Allocation& alloc, double final_m,
                                         double applied_lambda, const std::string& timestamp) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["method"] = method_name(alloc.method);
  nlohmann::json params = nlohmann::json::object();
  if (!std::isnan(alloc.params.q)) params["q"] = alloc.params.q;
  if (!std::isnan(alloc.params.threshold)) params["threshold"] = alloc.params.threshold;
  if (!std::isnan(alloc.params.acceptance_prob))
    params["acceptance_prob"] = alloc.params.acceptance_prob;
  j["params"] = params;
  j["seed"] = alloc.seed;
  j["final_m"] = final_m;
  j["group_sizes"] = {alloc.count_arm(1), alloc.count_arm(2)};
  j["applied_lambda"] = applied_lambda;
  j["timestamp"] = timestamp;
  // Arm labels are 1/2 in files; arm 1 is "treatment 1" (indicator T=1), arm 2
  // is "treatment 2" (T=0).
  j["arm_encoding"] = {{"1", "treatment 1"}, {"2", "treatment 2"}};
  return j;
}

/// One row per replication, plus a failed flag; NaNs serialize as empty fields.
inline void write_cell_csv(const std::string& path, const CellResult& cell) {
  std::ofstream out(path);
  if (!out) throw CsvError(path, 0, 0, "cannot open for writing");
  auto field = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  out << "rep,m,tau_hat,tau_tilde,iterations,failed\n";
  for (std::size_t r = 0; r < cell.records.size(); ++r) {
    const RepRecord& rec = cell.records[r];
    out << r + 1 << ',' << field(rec.m) << ',' << field(rec.tau_hat) << ','
        << field(rec.tau_tilde) << ',' << field(rec.iterations) << ',' << (rec.failed ? 1 : 0)
        << '\n';
  }
}

inline nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"count", a.count},
          {"mean", a.mean},
          {"var", a.var},
          {"se_mean", a.se_mean},
          {"se_var", a.se_var}};
}

inline nlohmann::json cell_summary_json(const CellResult& cell) {
  nlohmann::json j;
  j["n"] = cell.n;
  j["p"] = cell.p;
  j["allocator"] = cell.allocator;
  j["m"] = aggregate_json(cell.m_stat);
  if (cell.tau_hat_stat.count > 0) {
    j["tau_hat"] = aggregate_json(cell.tau_hat_stat);
    j["tau_tilde"] = aggregate_json(cell.tau_tilde_stat);
  }
  j["iterations"] = aggregate_json(cell.iterations_stat);
  j["failures"] = cell.failures;
  j["wall_ms"] = cell.total_wall_ms;
  return j;
}

}  // namespace balancer
