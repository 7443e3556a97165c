#include "pitchlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>

namespace pitchlab::report {

std::string format_double(double v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("short write to " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return body;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : out_(path, std::ios::binary | std::ios::trunc), ncols_(columns.size()) {
  if (!out_) throw IoError("cannot open " + path + " for writing");
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != ncols_) throw IoError("csv row width mismatch");
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ',';
    out_ << format_double(values[i]);
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != ncols_) throw IoError("csv row width mismatch");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& pixels) {
  if (static_cast<size_t>(width) * height != pixels.size())
    throw IoError("pgm size mismatch");
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("short write to " + path);
}

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<Series>& series) {
  const int W = 640, H = 400, ML = 60, MR = 20, MT = 40, MB = 40;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmin < xmax)) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (!(ymin < ymax)) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  auto sx = [&](double v) { return ML + (v - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto sy = [&](double v) { return H - MB - (v - ymin) / (ymax - ymin) * (H - MT - MB); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
         "\" height=\"" + std::to_string(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(W / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
  svg += "<rect x=\"" + std::to_string(ML) + "\" y=\"" + std::to_string(MT) + "\" width=\"" +
         std::to_string(W - ML - MR) + "\" height=\"" + std::to_string(H - MT - MB) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  auto label = [&](double v, double px, double py, const char* anchor) {
    svg += "<text x=\"" + format_double(px) + "\" y=\"" + format_double(py) +
           "\" text-anchor=\"" + anchor + "\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_double(v) + "</text>\n";
  };
  label(xmin, ML, H - MB + 16, "middle");
  label(xmax, W - MR, H - MB + 16, "middle");
  label(ymin, ML - 6, H - MB + 4, "end");
  label(ymax, ML - 6, MT + 4, "end");

  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = palette[k % 6];
    if (s.x.size() >= 2) {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (i) svg += ' ';
        svg += format_double(sx(s.x[i])) + "," + format_double(sy(s.y[i]));
      }
      svg += "\"/>\n";
    } else {
      for (size_t i = 0; i < s.x.size(); ++i)
        svg += "<circle cx=\"" + format_double(sx(s.x[i])) + "\" cy=\"" +
               format_double(sy(s.y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    svg += "<text x=\"" + std::to_string(ML + 8) + "\" y=\"" +
           std::to_string(MT + 16 + 14 * static_cast<int>(k)) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" + s.label +
           "</text>\n";
  }
  svg += "</svg>\n";
  write_text(path, svg);
}

}  // namespace pitchlab::report
