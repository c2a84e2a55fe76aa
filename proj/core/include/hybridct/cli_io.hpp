#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace hybridct {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Resolves the worker thread count: explicit request, else the
// HYBRIDCT_THREADS environment variable, else hardware concurrency.
int default_threads(int requested);

// Runs the scenario simulations described by a JSON config (either a config
// file or a manifest.json from a previous run) and writes oc_results.csv and
// manifest.json into out_dir.
int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int threads, std::optional<std::uint64_t> seed_override,
                 std::optional<int> replicates_override);

// Exact design-stage operating characteristics for a fixed historical pool:
// writes curves.csv and pos.json per configured design.
int cmd_design_eval(const std::string& config_path,
                    const std::string& historical_csv,
                    const std::string& out_dir, int threads);

// Reproduces the bundled ankylosing-spondylitis case study: writes
// table6.csv (Bayesian robust MAP rows), tableS6.csv (test-then-pool rows)
// and case_study_meta.json.
int cmd_case_study(const std::string& out_dir, const std::string& data_path,
                   int threads);

// Fits a MAP prior to a historical CSV and prints the mixture and its ESS.
int cmd_fit_map(const std::string& historical_csv, std::optional<double> w_r,
                bool coarse);

// FNV-1a checksum of a file's bytes (used to pin the bundled dataset).
std::uint64_t file_checksum(const std::string& path);

}  // namespace hybridct
