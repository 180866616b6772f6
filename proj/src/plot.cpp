#include "tempoproj/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tempoproj/eigen.hpp"
#include "tempoproj/error.hpp"

namespace tempoproj {

Pca2d pca_2d(const Matrix& points) {
  if (points.cols < 2) {
    fail(ErrorKind::Config, "plot needs at least 2 latent dimensions, got " + std::to_string(points.cols));
  }
  if (points.rows == 0) fail(ErrorKind::EmptyDataset, "nothing to plot");
  const std::size_t n = points.rows, d = points.cols;

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += points(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  SymmetricMatrix cov(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = points.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov(a, b) += (row[a] - mean[a]) * (row[b] - mean[b]);
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) cov(a, b) /= denom;

  const auto eig = jacobi_eigen(cov);
  Pca2d out;
  out.coords = Matrix(n, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t lead = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(eig.vectors(j, c)) > std::abs(eig.vectors(lead, c))) lead = j;
    const double sign = eig.vectors(lead, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (points(i, j) - mean[j]) * eig.vectors(j, c);
      out.coords(i, c) = sign * s;
    }
    out.variances.push_back(eig.values[c]);
  }
  return out;
}

namespace {

std::string color_for(int group) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#393b79"};
  if (group < 10) return palette[group];
  // Past the palette, walk the hue circle by the golden angle.
  const double h = std::fmod(group * 137.508, 360.0) / 60.0;
  const double s = 0.65, v = 0.85, c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string scatter_svg(const Matrix& coords, std::optional<std::span<const int>> labels,
                        const ScatterOptions& options) {
  if (coords.cols != 2) fail(ErrorKind::Shape, "scatter expects 2 columns");
  if (labels && labels->size() != coords.rows) {
    fail(ErrorKind::Shape, "label count " + std::to_string(labels->size()) + " does not match " +
                               std::to_string(coords.rows) + " points");
  }

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (coords.rows > 0) {
    xmin = xmax = coords(0, 0);
    ymin = ymax = coords(0, 1);
    for (std::size_t i = 1; i < coords.rows; ++i) {
      xmin = std::min(xmin, coords(i, 0)), xmax = std::max(xmax, coords(i, 0));
      ymin = std::min(ymin, coords(i, 1)), ymax = std::max(ymax, coords(i, 1));
    }
  }
  const double margin = 30.0, top = options.title.empty() ? margin : margin + 20.0;
  const double plot_w = options.width - 2 * margin, plot_h = options.height - top - margin;
  const double xr = xmax > xmin ? xmax - xmin : 1.0, yr = ymax > ymin ? ymax - ymin : 1.0;
  auto px = [&](double x) { return margin + (x - xmin) / xr * plot_w; };
  auto py = [&](double y) { return top + plot_h - (y - ymin) / yr * plot_h; };

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < coords.rows; ++i) groups[labels ? (*labels)[i] : 0].push_back(i);

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height
      << "\" viewBox=\"0 0 " << options.width << ' ' << options.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    svg << "<text x=\"" << options.width / 2 << "\" y=\"" << margin
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << escape(options.title)
        << "</text>\n";
  }
  svg << "<rect x=\"" << margin << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  int next = 0;
  for (const auto& [label, members] : groups) {
    const std::string fill = label < 0 ? "#999999" : color_for(next++);
    svg << "<g class=\"group\" data-label=\"" << label << "\" fill=\"" << fill << "\">\n";
    for (std::size_t i : members) {
      svg << "<circle cx=\"" << px(coords(i, 0)) << "\" cy=\"" << py(coords(i, 1)) << "\" r=\"" << options.radius
          << "\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_latent_plot(const std::filesystem::path& path, const Matrix& latent,
                       std::optional<std::span<const int>> labels, const ScatterOptions& options) {
  const auto svg = scatter_svg(pca_2d(latent).coords, labels, options);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << svg;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace tempoproj
