#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "tempoproj/error.hpp"
#include "tempoproj/plot.hpp"
#include "tempoproj/rng.hpp"
#include "test_util.hpp"

using namespace tempoproj;

namespace {

Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (double& v : m.data) v = rng.normal();
  return m;
}

std::set<std::string> fills(const std::string& svg) {
  std::set<std::string> out;
  const std::regex re("<g class=\"group\" data-label=\"-?[0-9]+\" fill=\"(#[0-9a-f]{6})\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
    out.insert((*it)[1]);
  return out;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("seven labels give seven colour groups") {
  const auto latent = random_points(210, 10, 3);
  std::vector<int> labels(210);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 7);
  const auto svg = scatter_svg(pca_2d(latent).coords, std::span<const int>(labels));
  CHECK(count(svg, "<g class=\"group\"") == 7);
  CHECK(fills(svg).size() == 7);
  CHECK(count(svg, "<circle") == 210);
}

TEST_CASE("many labels keep distinct colours") {
  const auto latent = random_points(60, 3, 4);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 30);
  CHECK(fills(scatter_svg(pca_2d(latent).coords, std::span<const int>(labels))).size() == 30);
}

TEST_CASE("unlabelled scatter is a single group") {
  const auto svg = scatter_svg(pca_2d(random_points(40, 4, 5)).coords, std::nullopt);
  CHECK(count(svg, "<g class=\"group\"") == 1);
  CHECK(count(svg, "<circle") == 40);
}

TEST_CASE("noise points are grey") {
  std::vector<int> labels{0, 0, -1, 1};
  const auto svg = scatter_svg(pca_2d(random_points(4, 2, 6)).coords, std::span<const int>(labels));
  CHECK(svg.find("data-label=\"-1\" fill=\"#999999\"") != std::string::npos);
}

TEST_CASE("fewer than two dimensions is a config error") {
  try {
    pca_2d(Matrix(5, 1, 1.0));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("label count mismatch is a shape error") {
  std::vector<int> labels{0, 1};
  CHECK_THROWS_AS(scatter_svg(Matrix(3, 2), std::span<const int>(labels)), Error);
}

TEST_CASE("2d pca is a rigid motion") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto pts = random_points(30, 2, seed);
    for (std::size_t i = 0; i < pts.rows; ++i) pts(i, 0) *= 3.0;
    const auto out = pca_2d(pts).coords;
    for (std::size_t i = 0; i < pts.rows; ++i)
      for (std::size_t j = i + 1; j < pts.rows; ++j)
        CHECK(std::abs(squared_distance(pts.row(i), pts.row(j)) - squared_distance(out.row(i), out.row(j))) < 1e-9);
  }
}

TEST_CASE("pca components are centred, uncorrelated and ordered") {
  const auto pts = random_points(100, 6, 9);
  const auto pca = pca_2d(pts);
  double m0 = 0, m1 = 0, c01 = 0, v0 = 0, v1 = 0;
  for (std::size_t i = 0; i < pts.rows; ++i) m0 += pca.coords(i, 0), m1 += pca.coords(i, 1);
  CHECK(std::abs(m0) < 1e-9);
  CHECK(std::abs(m1) < 1e-9);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    c01 += pca.coords(i, 0) * pca.coords(i, 1);
    v0 += pca.coords(i, 0) * pca.coords(i, 0);
    v1 += pca.coords(i, 1) * pca.coords(i, 1);
  }
  CHECK(std::abs(c01) < 1e-8);
  CHECK(std::abs(v0 / 99.0 - pca.variances[0]) < 1e-9);
  CHECK(std::abs(v1 / 99.0 - pca.variances[1]) < 1e-9);
  CHECK(pca.variances[0] >= pca.variances[1]);
}

TEST_CASE("2x2 covariance eigenvalues match the closed form") {
  const auto pts = random_points(50, 2, 11);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < pts.rows; ++i) mx += pts(i, 0), my += pts(i, 1);
  mx /= 50, my /= 50;
  double a = 0, b = 0, c = 0;
  for (std::size_t i = 0; i < pts.rows; ++i) {
    a += (pts(i, 0) - mx) * (pts(i, 0) - mx);
    b += (pts(i, 0) - mx) * (pts(i, 1) - my);
    c += (pts(i, 1) - my) * (pts(i, 1) - my);
  }
  a /= 49, b /= 49, c /= 49;
  const double disc = std::sqrt((a - c) * (a - c) / 4 + b * b);
  const auto pca = pca_2d(pts);
  CHECK(std::abs(pca.variances[0] - ((a + c) / 2 + disc)) < 1e-9);
  CHECK(std::abs(pca.variances[1] - ((a + c) / 2 - disc)) < 1e-9);
}

TEST_CASE("plots are deterministic and written to disk") {
  TempDir dir;
  const auto latent = random_points(25, 10, 2);
  std::vector<int> labels(25, 1);
  write_latent_plot(dir / "a.svg", latent, std::span<const int>(labels), {.title = "a < b"});
  write_latent_plot(dir / "b.svg", latent, std::span<const int>(labels), {.title = "a < b"});
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto a = slurp(dir / "a.svg");
  CHECK(a == slurp(dir / "b.svg"));
  CHECK(a.find("a &lt; b") != std::string::npos);
  CHECK(a.rfind("<svg", 0) == 0);
}
