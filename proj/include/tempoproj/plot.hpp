#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempoproj/matrix.hpp"

namespace tempoproj {

struct Pca2d {
  Matrix coords;                  // N x 2
  std::vector<double> variances;  // of the two retained components
};

/// Projects rows onto the two leading principal axes. Each axis is signed so
/// its largest-magnitude loading is positive.
Pca2d pca_2d(const Matrix& points);

struct ScatterOptions {
  std::string title;
  double width = 640.0;
  double height = 480.0;
  double radius = 3.0;
};

/// One <g> group per distinct label, each with its own fill. Noise (-1) is
/// drawn in grey. Without labels every point shares one group.
std::string scatter_svg(const Matrix& coords, std::optional<std::span<const int>> labels,
                        const ScatterOptions& options = {});

void write_latent_plot(const std::filesystem::path& path, const Matrix& latent,
                       std::optional<std::span<const int>> labels, const ScatterOptions& options = {});

}  // namespace tempoproj
