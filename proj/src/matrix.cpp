#include "tempoproj/matrix.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "tempoproj/error.hpp"

namespace tempoproj {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != rows * cols) fail(ErrorKind::Shape, "matrix buffer does not match its shape");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  char buf[64];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      if (c) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  Matrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      while (first < last && *first == ' ') ++first;
      auto res = std::from_chars(first, last, value);
      if (res.ec != std::errc{} || res.ptr != last) {
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
      }
      row.push_back(value);
    }
    if (m.rows == 0) m.cols = row.size();
    if (row.size() != m.cols) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
  }
  return m;
}

}  // namespace tempoproj
