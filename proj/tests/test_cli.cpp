#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "tempoproj/matrix.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tempoproj::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Path printed after "<key>: " in command output.
fs::path printed(const std::string& out, const std::string& key) {
  std::smatch m;
  const std::regex re(key + ": (\\S+)");
  REQUIRE(std::regex_search(out, m, re));
  return m[1].str();
}

struct Fixture {
  TempDir dir;
  std::string data;
  std::string out;

  Fixture() {
    data = (dir / "synth.json").string();
    out = (dir / "runs").string();
    write_text(data, R"({"name": "tiny", "n_per_class": 10, "length": 32, "cycles": 2,
      "classes": [{"waveform": "sine", "noise_std": 0.05},
                  {"waveform": "square", "noise_std": 0.05},
                  {"waveform": "trend", "noise_std": 0.05}]})");
  }
};

json without_timing(json j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [k, v] : j.items()) v = without_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = without_timing(v);
  }
  return j;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  Fixture f;
  CHECK(cli({}).code == 2);
  CHECK(cli({"info"}).code == 2);
  CHECK(cli({"info", "--data", f.data, "--bogus"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"project", "--data", f.data, "--pivots", "abc"}).code == 2);

  const auto zero = cli({"project", "--data", f.data, "--pivots", "0", "--out", f.out});
  CHECK(zero.code == 2);
  CHECK(zero.err.find("--pivots") != std::string::npos);
  CHECK(!fs::exists(f.out));

  CHECK(cli({"project", "--data", f.data, "--pivots", "31", "--out", f.out}).code == 2);
  CHECK(cli({"project", "--data", f.data, "--metric", "cosine", "--out", f.out}).code == 2);
  CHECK(cli({"cluster", "--data", f.data, "--pipeline", "pr", "--algorithm", "kshape", "--out", f.out}).code == 2);
  CHECK(cli({"cluster", "--data", f.data, "--pipeline", "nope", "--out", f.out}).code == 2);
  CHECK(cli({"train", "--data", f.data, "--pipeline", "pr", "--out", f.out}).code == 2);
  CHECK(cli({"benchmark", "--data", f.data, "--runs", "0", "--out", f.out}).code == 2);
  CHECK(cli({"benchmark", "--data", f.data, "--sweep-pivots", "4,x", "--out", f.out}).code == 2);
}

TEST_CASE("help exits with 0") {
  const auto r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("benchmark") != std::string::npos);
}

TEST_CASE("runtime errors exit with 1") {
  Fixture f;
  const auto r = cli({"info", "--data", (f.dir / "missing.tsv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("info describes the dataset") {
  Fixture f;
  const auto r = cli({"info", "--data", f.data});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("samples: 30") != std::string::npos);
  CHECK(r.out.find("length: 32") != std::string::npos);
  CHECK(r.out.find("classes: 3 (0:10, 1:10, 2:10)") != std::string::npos);
}

TEST_CASE("project writes a cache and reuses it") {
  Fixture f;
  const std::vector<std::string> args{"project", "--data", f.data, "--metric", "sbd", "--pivots", "4",
                                      "--seed", "7", "--out", f.out};
  const auto first = cli(args);
  REQUIRE(first.code == 0);
  CHECK(first.out.rfind("computed: N=30 p=4 W=1 metric=sbd", 0) == 0);
  const auto cache = printed(first.out, "cache");
  CHECK(fs::exists(cache));
  const auto second = cli(args);
  REQUIRE(second.code == 0);
  CHECK(second.out.rfind("cached: N=30 p=4 W=1 metric=sbd", 0) == 0);
  CHECK(printed(second.out, "cache") == cache);

  auto other = args;
  other[8] = "8";
  CHECK(cli(other).out.rfind("computed", 0) == 0);
}

TEST_CASE("cluster is idempotent apart from timing") {
  Fixture f;
  const std::vector<std::string> args{"cluster", "--data", f.data, "--pipeline", "pr", "--algorithm", "kmeans",
                                      "--pivots", "6", "--seed", "3", "--out", f.out};
  const auto a = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("accuracy=") != std::string::npos);
  const auto dir = printed(a.out, "run");
  const auto report_a = json::parse(slurp(dir / "report.json"));
  const auto csv_a = slurp(dir / "assignments.csv");
  CHECK(csv_a.rfind("sample_id,cluster\n", 0) == 0);
  CHECK(lines(csv_a) == 31);

  const auto b = cli(args);
  REQUIRE(b.code == 0);
  CHECK(printed(b.out, "run") == dir);
  CHECK(without_timing(json::parse(slurp(dir / "report.json"))) == without_timing(report_a));
  CHECK(slurp(dir / "assignments.csv") == csv_a);

  auto reseeded = args;
  reseeded[10] = "4";
  CHECK(printed(cli(reseeded).out, "run") != dir);
}

TEST_CASE("train exports a checkpoint, losses and latents; plot reads them") {
  Fixture f;
  const auto t = cli({"train", "--data", f.data, "--pipeline", "prls", "--pivots", "5", "--epochs", "2", "--seed",
                      "1", "--out", f.out});
  REQUIRE(t.code == 0);
  const auto dir = printed(t.out, "run");
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(slurp(dir / "loss.csv").rfind("epoch,mean_loss\n", 0) == 0);
  CHECK(lines(slurp(dir / "loss.csv")) == 3);
  const auto latent = tempoproj::read_matrix_csv(dir / "latent.csv");
  CHECK(latent.rows == 30);
  CHECK(latent.cols == 10);

  const auto p1 = cli({"plot", "--latent", (dir / "latent.csv").string(), "--out", f.out});
  REQUIRE(p1.code == 0);
  const auto svg1 = slurp(printed(p1.out, "plot"));
  CHECK(svg1.find("<svg") != std::string::npos);
  CHECK(std::regex_search(svg1, std::regex("data-label")));

  const auto p2 = cli({"plot", "--checkpoint", (dir / "model.ckpt").string(), "--data", f.data, "--pivots", "5",
                       "--seed", "1", "--out", f.out});
  REQUIRE(p2.code == 0);
  const auto svg2 = slurp(printed(p2.out, "plot"));
  std::size_t groups = 0;
  for (auto pos = svg2.find("<g class=\"group\""); pos != std::string::npos; pos = svg2.find("<g class=\"group\"", pos + 1))
    ++groups;
  CHECK(groups == 3);

  CHECK(cli({"plot", "--checkpoint", (dir / "model.ckpt").string(), "--data", f.data, "--pivots", "6", "--out",
             f.out})
            .code == 2);
}

TEST_CASE("plot rejects a one-dimensional latent") {
  Fixture f;
  const auto path = f.dir / "one.csv";
  write_text(path, "1\n2\n3\n");
  const auto r = cli({"plot", "--latent", path.string(), "--out", f.out});
  CHECK(r.code == 2);
  CHECK(cli({"plot", "--out", f.out}).code == 2);
}

TEST_CASE("benchmark emits one row per legal cell") {
  Fixture f;
  const auto r = cli({"benchmark", "--data", f.data, "--runs", "1", "--epochs", "1", "--pivots", "4", "--out",
                      f.out});
  REQUIRE(r.code == 0);
  const auto table = slurp(printed(r.out, "run") / "table.csv");
  CHECK(table.rfind("dataset,pipeline,algorithm,metric,pivots,runs,mean,std,improvement\n", 0) == 0);
  CHECK(lines(table) == 1 + 5 + 3 * 3);
  // One run per cell: every std column is zero.
  std::istringstream rows(table);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    REQUIRE(cols.size() >= 8);
    CHECK(std::stod(cols[7]) == 0.0);
  }
  CHECK(table.find("tiny,pr,kmeans,sbd,4,1,") != std::string::npos);
  CHECK(table.find("tiny,os,kshape,sbd,") != std::string::npos);
}

TEST_CASE("pivot sweep reports one row per pivot count") {
  Fixture f;
  const auto r = cli({"benchmark", "--data", f.data, "--pipeline", "pr", "--runs", "2", "--sweep-pivots", "2,4,8",
                      "--out", f.out});
  REQUIRE(r.code == 0);
  const auto csv = slurp(printed(r.out, "run") / "sweep.csv");
  CHECK(csv.rfind("pivots,runs,mean,std\n", 0) == 0);
  CHECK(lines(csv) == 4);
  CHECK(csv.find("\n8,2,") != std::string::npos);
}
