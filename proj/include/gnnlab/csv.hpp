#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnnlab {

// Formats a double with 12 significant digits. Used for every numeric
// cell we write so repeated runs with the same seed produce
// byte-identical files.
inline std::string fmt_g12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    write_row_raw(header);
  }

  void write_row_raw(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Minimal reader for our own output files (resume support). Splits on
// commas; none of our cells contain commas or quotes.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace gnnlab
