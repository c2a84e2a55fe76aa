#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hybridct/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "hybridct - hybrid randomized controlled trials with borrowed external "
      "binary-endpoint controls: selection rules, test-then-pool and robust "
      "MAP analyses, simulated and exact operating characteristics.\n"
      "Note: two-sided Fisher pre-tests use the minimum-likelihood rule (the "
      "p-value sums all tables no more probable than the observed one)."};
  app.require_subcommand(1);

  int threads = 0;

  auto* sim = app.add_subcommand("simulate",
                                 "Run scenario simulations from a JSON config "
                                 "and write oc_results.csv + manifest.json");
  std::string sim_config, sim_out = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<int> replicates_override;
  sim->add_option("--config", sim_config, "JSON config (or a previous manifest.json)")
      ->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--threads", threads, "worker threads (default: HYBRIDCT_THREADS or all cores)");
  sim->add_option("--seed", seed_override, "override the config seed");
  sim->add_option("--replicates", replicates_override, "override the replicate count");

  auto* design = app.add_subcommand("design-eval",
                                    "Exact conditional operating characteristics "
                                    "for a fixed historical pool");
  std::string design_config, design_hist, design_out = "out";
  design->add_option("--config", design_config, "JSON design config")->required();
  design->add_option("--historical", design_hist,
                     "historical CSV (study,responders,size)")
      ->required();
  design->add_option("--out", design_out, "output directory");
  design->add_option("--threads", threads, "worker threads");

  auto* cs = app.add_subcommand("case-study",
                                "Reproduce the bundled ankylosing-spondylitis "
                                "case study (table6.csv, tableS6.csv)");
  std::string cs_out = "out", cs_data = "data/as_historical.csv";
  cs->add_option("--out", cs_out, "output directory");
  cs->add_option("--data", cs_data, "path to the bundled historical CSV");
  cs->add_option("--threads", threads, "worker threads");

  auto* fit = app.add_subcommand("fit-map",
                                 "Fit a MAP prior to a historical CSV and "
                                 "print the mixture and its ESS");
  std::string fit_hist;
  std::optional<double> fit_wr;
  bool fit_coarse = false;
  fit->add_option("--historical", fit_hist, "historical CSV")->required();
  fit->add_option("--w-r", fit_wr, "also print the robustified prior at this weight");
  fit->add_flag("--coarse", fit_coarse, "use the fast coarse fitting grid");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    return hybridct::cmd_simulate(sim_config, sim_out, threads, seed_override,
                                  replicates_override);
  }
  if (design->parsed()) {
    return hybridct::cmd_design_eval(design_config, design_hist, design_out,
                                     threads);
  }
  if (cs->parsed()) {
    return hybridct::cmd_case_study(cs_out, cs_data, threads);
  }
  if (fit->parsed()) {
    return hybridct::cmd_fit_map(fit_hist, fit_wr, fit_coarse);
  }
  return 1;
}
