#pragma once

#include <optional>
#include <utility>

#include "hybridct/beta_mixture.hpp"

namespace hybridct {

struct ArmCounts {
  int responders = 0;
  int size = 1;
};

struct ProspectiveData {
  ArmCounts treatment;
  ArmCounts control;

  void validate() const;
};

struct TtpConfig {
  double alpha_pre = 0.10;  // two-sided pre-test level
  double alpha = 0.025;     // one-sided treatment test level

  void validate() const;
};

struct BayesConfig {
  double w_r = 0.1;
  double gamma = 0.975;
  HierarchicalHyperPrior hyper;
  MapFitOptions fit_options;
  bool compute_interval = false;
  bool compute_ess = true;

  void validate() const;
};

struct AnalysisResult {
  bool success = false;
  double rd_estimate = 0.0;
  std::optional<std::pair<double, double>> interval;
  std::optional<double> posterior_prob;
  std::optional<double> p_value;
  std::optional<bool> pooled;               // test-then-pool only
  std::optional<double> ess;                // Bayesian only: prior ESS (ELIR)
  std::optional<double> rd_prospective_only;  // recorded when pooling was used
};

// Frequentist separate analysis: one-sided Fisher exact test plus the
// continuity-corrected difference interval.
AnalysisResult analyze_freq_separate(const ProspectiveData& data, double alpha);

// Test-then-pool: the selected historical controls are pooled and compared
// with the prospective control by a two-sided Fisher pre-test at alpha_pre
// (pool when p >= alpha_pre), then the treatment is tested one-sided against
// the pooled or prospective-only control. An empty selection reduces exactly
// to the separate analysis.
AnalysisResult analyze_ttp(const HistoricalPool& selected,
                           const ProspectiveData& data, const TtpConfig& cfg);

// Bayesian analysis. separate=true ignores the selection and uses Beta(1,1)
// control priors; otherwise the control prior is the robustified MAP with
// the degenerate-selection fallbacks. The treatment prior is Beta(1,1).
// Success is declared when the posterior superiority probability exceeds
// gamma. The credible interval, when requested, is the equal-tailed interval
// of the posterior risk difference from a 2048-cell numeric convolution.
AnalysisResult analyze_bayes(const HistoricalPool& selected,
                             const ProspectiveData& data, const BayesConfig& cfg,
                             bool separate, MapFitCache* cache = nullptr);

// Equal-tailed credible interval of T - C for independent mixtures.
std::pair<double, double> mixture_difference_interval(const BetaMixture& t,
                                                      const BetaMixture& c,
                                                      double level,
                                                      int grid_cells = 2048);

}  // namespace hybridct
