#pragma once

#include <string>
#include <vector>

namespace voi {

// Delimited-table and flat key=value I/O. All files are UTF-8 with LF line
// endings and a mandatory header row; numbers are rendered with 12
// significant digits, which is the representation reproducibility claims
// are made on.

std::string fmt_g12(double x);

// fmt_g12 followed by strtod; pins a value to its on-disk representation.
double round_to_file_precision(double x);

double parse_double(const std::string& s);
long long parse_int(const std::string& s);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws if absent
};

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
Table read_table(const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);

// key = value lines, '#' comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::string& path);
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

}  // namespace voi
