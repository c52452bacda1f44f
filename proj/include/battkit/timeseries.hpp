#pragma once

#include <map>
#include <string>
#include <vector>

namespace battkit {

// One timestamped measurement record. Positive current = discharge.
struct Sample {
  double t_s = 0.0;
  double i_a = 0.0;
  double v_v = 0.0;
};

struct TimeSeries {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // Sampling period; throws FormatError unless timestamps are strictly
  // increasing and uniform within 1e-9 s.
  double sample_period() const;
};

// CSV with header `t_s,i_a,v_v`; simulator output adds `soc_true,vc_true`.
void write_csv(const TimeSeries& ts, const std::string& path);
void write_csv(const TimeSeries& ts, const std::vector<double>& soc_true,
               const std::vector<double>& vc_true, const std::string& path);
TimeSeries read_csv(const std::string& path);

// Generic numeric CSV: header row of column names, one vector per column.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;

  bool has(const std::string& name) const;
  const std::vector<double>& col(const std::string& name) const;
};

CsvTable read_csv_table(const std::string& path);
void write_csv_table(const CsvTable& table, const std::string& path);

}  // namespace battkit
