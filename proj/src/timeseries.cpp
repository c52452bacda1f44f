#include "battkit/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "battkit/errors.hpp"

namespace battkit {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Non-numeric cells (zone letters, stage labels) read as NaN; typed readers
// validate the columns they actually consume.
double parse_cell(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) return std::nan("");
  return v;
}

}  // namespace

double TimeSeries::sample_period() const {
  if (samples.size() < 2)
    throw FormatError("time series needs at least two samples for a period");
  const double ts = samples[1].t_s - samples[0].t_s;
  if (!(ts > 0.0)) throw FormatError("timestamps must be strictly increasing");
  for (std::size_t k = 1; k < samples.size(); ++k) {
    const double dt = samples[k].t_s - samples[k - 1].t_s;
    if (std::abs(dt - ts) > 1e-9)
      throw FormatError("time series is not uniformly sampled");
  }
  return ts;
}

void write_csv(const TimeSeries& ts, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "t_s,i_a,v_v\n";
  for (const Sample& s : ts.samples)
    f << format_double(s.t_s) << ',' << format_double(s.i_a) << ','
      << format_double(s.v_v) << '\n';
}

void write_csv(const TimeSeries& ts, const std::vector<double>& soc_true,
               const std::vector<double>& vc_true, const std::string& path) {
  if (soc_true.size() != ts.size() || vc_true.size() != ts.size())
    throw InvalidInput("truth columns must align with the series");
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "t_s,i_a,v_v,soc_true,vc_true\n";
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Sample& s = ts.samples[k];
    f << format_double(s.t_s) << ',' << format_double(s.i_a) << ','
      << format_double(s.v_v) << ',' << format_double(soc_true[k]) << ','
      << format_double(vc_true[k]) << '\n';
  }
}

TimeSeries read_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  for (const char* col : {"t_s", "i_a", "v_v"})
    if (!t.has(col))
      throw FormatError(path + ": missing column '" + std::string(col) + "'");
  const auto& tc = t.col("t_s");
  const auto& ic = t.col("i_a");
  const auto& vc = t.col("v_v");
  TimeSeries ts;
  ts.samples.resize(tc.size());
  for (std::size_t k = 0; k < tc.size(); ++k) {
    if (std::isnan(tc[k]) || std::isnan(ic[k]) || std::isnan(vc[k]))
      throw FormatError(path + ": non-numeric value in row " +
                        std::to_string(k + 2));
    ts.samples[k] = {tc[k], ic[k], vc[k]};
  }
  return ts;
}

bool CsvTable::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

const std::vector<double>& CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return data[i];
  throw FormatError("no such column: " + name);
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw FormatError(path + ": empty file");
  t.columns = split_line(line);
  t.data.resize(t.columns.size());
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.columns.size())
      throw FormatError(path + ": row " + std::to_string(row) +
                        " has wrong column count");
    for (std::size_t i = 0; i < cells.size(); ++i)
      t.data[i].push_back(parse_cell(cells[i]));
  }
  return t;
}

void write_csv_table(const CsvTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    f << (i ? "," : "") << table.columns[i];
  f << '\n';
  const std::size_t rows = table.data.empty() ? 0 : table.data[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < table.data.size(); ++i)
      f << (i ? "," : "") << format_double(table.data[i][r]);
    f << '\n';
  }
}

}  // namespace battkit
