#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "hybridct/cli_io.hpp"

using namespace hybridct;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
  return p.string();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

const char* kSmokeConfig = R"({
  "seed": 31,
  "replicates": 8,
  "rules": ["separate", "full", "threshold"],
  "methods": ["ttp", "freq_separate"],
  "threshold": 0.2,
  "scenarios": [
    {"family": "exchangeable", "tau": 0.3, "k": 4, "n_hc": 30,
     "n_total": 60, "ratio": 1, "pi_c": 0.2, "rd": 0.2, "hypothesis": "alt"}
  ]
})";

}  // namespace

TEST_CASE("simulate validates configs fail-closed") {
  TempDir dir("hybridct_cli_test_cfg");
  SUBCASE("malformed JSON exits 2 without partial outputs") {
    const std::string cfg = write_file(dir.path / "bad.json", "{ not json");
    const std::string out = (dir.path / "out1").string();
    CHECK(cmd_simulate(cfg, out, 1, std::nullopt, std::nullopt) == kExitConfig);
    CHECK_FALSE(fs::exists(fs::path(out) / "oc_results.csv"));
  }
  SUBCASE("unknown fields are rejected") {
    const std::string cfg = write_file(dir.path / "unknown.json",
                                       R"({"seed": 1, "replicatez": 10,
                                           "scenarios": []})");
    CHECK(cmd_simulate(cfg, (dir.path / "out2").string(), 1, std::nullopt,
                       std::nullopt) == kExitConfig);
  }
  SUBCASE("scenario typos are rejected") {
    const std::string cfg = write_file(
        dir.path / "typo.json",
        R"({"seed": 1, "scenarios": [{"family": "exchangeable", "tau": 0.3,
            "kk": 4}]})");
    CHECK(cmd_simulate(cfg, (dir.path / "out3").string(), 1, std::nullopt,
                       std::nullopt) == kExitConfig);
  }
  SUBCASE("missing scenario block is rejected") {
    const std::string cfg = write_file(dir.path / "none.json", R"({"seed": 1})");
    CHECK(cmd_simulate(cfg, (dir.path / "out4").string(), 1, std::nullopt,
                       std::nullopt) == kExitConfig);
  }
}

TEST_CASE("simulate writes results and a reproducing manifest" *
          doctest::timeout(600)) {
  TempDir dir("hybridct_cli_test_run");
  const std::string cfg = write_file(dir.path / "cfg.json", kSmokeConfig);
  const std::string out_a = (dir.path / "a").string();
  const std::string out_b = (dir.path / "b").string();
  REQUIRE(cmd_simulate(cfg, out_a, 2, std::nullopt, std::nullopt) == kExitOk);
  REQUIRE(fs::exists(fs::path(out_a) / "oc_results.csv"));
  REQUIRE(fs::exists(fs::path(out_a) / "manifest.json"));
  const std::string csv_a = read_file(fs::path(out_a) / "oc_results.csv");
  CHECK(csv_a.find("scenario_id,family,tau,k,n_hc,n_total,ratio,pi_c,"
                   "hypothesis,rule,method,metric,value,mc_se") == 0);
  CHECK(csv_a.find("power") != std::string::npos);
  CHECK(csv_a.find("\r") == std::string::npos);  // LF only

  // Re-running from the manifest reproduces the CSV byte for byte.
  REQUIRE(cmd_simulate((fs::path(out_a) / "manifest.json").string(), out_b, 1,
                       std::nullopt, std::nullopt) == kExitOk);
  CHECK(read_file(fs::path(out_b) / "oc_results.csv") == csv_a);
}

TEST_CASE("case study requires the pinned dataset") {
  TempDir dir("hybridct_cli_test_cs");
  SUBCASE("missing dataset exits 2") {
    CHECK(cmd_case_study((dir.path / "out").string(),
                         (dir.path / "nope.csv").string(), 1) == kExitConfig);
  }
  SUBCASE("corrupted dataset exits 2") {
    const std::string data = write_file(dir.path / "tampered.csv",
                                        "study,responders,size\n1,23,107\n");
    CHECK(cmd_case_study((dir.path / "out").string(), data, 1) == kExitConfig);
  }
}

TEST_CASE("dataset checksum is pinned") {
  const std::string path = std::string(HYBRIDCT_DATA_DIR) + "/as_historical.csv";
  CHECK(file_checksum(path) == 0x1e86b4c2d0324dd1ULL);
}

TEST_CASE("fit-map handles degenerate pools") {
  TempDir dir("hybridct_cli_test_fit");
  const std::string empty =
      write_file(dir.path / "empty.csv", "study,responders,size\n");
  CHECK(cmd_fit_map(empty, std::nullopt, true) == kExitConfig);
  const std::string one =
      write_file(dir.path / "one.csv", "study,responders,size\n1,6,20\n");
  CHECK(cmd_fit_map(one, std::nullopt, true) == kExitOk);
}

TEST_CASE("design-eval with an empty pool emits only the separate curve") {
  TempDir dir("hybridct_cli_test_de");
  const std::string hist =
      write_file(dir.path / "empty.csv", "study,responders,size\n");
  const std::string cfg = write_file(dir.path / "cfg.json", R"({
    "gamma": 0.975, "w_r": 0.2,
    "designs": [{"n_total": 20, "ratio": 1}],
    "rd_alt": 0.2,
    "pi_grid": {"from": 0.1, "to": 0.3, "step": 0.1},
    "pos": false, "worst_case": false
  })");
  const std::string out = (dir.path / "out").string();
  REQUIRE(cmd_design_eval(cfg, hist, out, 1) == kExitOk);
  const std::string curves = read_file(fs::path(out) / "curves.csv");
  CHECK(curves.find("separate") != std::string::npos);
  CHECK(curves.find("full") == std::string::npos);
}
