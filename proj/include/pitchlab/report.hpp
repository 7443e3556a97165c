#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pitchlab/common.hpp"

namespace pitchlab::report {

// Shortest round-trip decimal form (std::to_chars), so files diff bit-exactly
// across runs.
std::string format_double(double v);

void ensure_dir(const std::string& path);
void write_text(const std::string& path, const std::string& body);
std::string read_text(const std::string& path);
void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_bytes(const std::string& path);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void row(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  size_t ncols_;
};

// Binary 8-bit PGM.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& pixels);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal multi-series line plot with an axes box and range labels.
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<Series>& series);

}  // namespace pitchlab::report
