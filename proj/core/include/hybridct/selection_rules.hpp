#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hybridct/beta_mixture.hpp"
#include "hybridct/rng.hpp"

namespace hybridct {

enum class RuleKind {
  Full,
  Random,
  DropTheBest,
  Threshold,
  OptimalPower,
  Separate,
  MonotoneOptimalPower,
};

// Assumed prospective-trial sampling model used by the optimal-power rules.
struct PlanningAssumptions {
  double pi_t_star = 0.4;
  double pi_c_star = 0.2;
  int n_t = 30;
  int n_c = 30;
  double gamma = 0.975;

  void validate() const;
};

struct SelectionRule {
  RuleKind kind = RuleKind::Full;
  double threshold = 0.20;                        // Threshold rule only
  std::optional<PlanningAssumptions> planning;    // OptimalPower rules only

  std::string name() const;
  static SelectionRule from_name(const std::string& name);
  bool is_optimal_power() const {
    return kind == RuleKind::OptimalPower ||
           kind == RuleKind::MonotoneOptimalPower;
  }
};

struct SelectionResult {
  std::vector<bool> mask;   // one flag per pool trial, order preserved
  HistoricalPool selected;  // pool filtered by mask
  SelectionRule rule;
  std::optional<std::uint64_t> rng_draw;  // dropped index (Random rule)
};

// Applies a selection rule. Random and DropTheBest need a pool of size >= 2;
// the rng stream is consumed only by the Random rule.
SelectionResult select(const HistoricalPool& pool, const SelectionRule& rule,
                       RngStream& rng);

// Exact conditional power of the posterior-superiority decision for a given
// historical subset, under the pooled informative control prior
// Beta(x, n_H - x) (parameters clamped at 0.5 when degenerate) and a
// Beta(1,1) treatment prior. The empty subset is evaluated as the separate
// Bayesian analysis with Beta(1,1) priors on both arms.
double conditional_power_pooled(const HistoricalPool& subset,
                                const PlanningAssumptions& plan,
                                bool* clamped = nullptr);

struct OptimalPowerDiagnostics {
  int subsets_evaluated = 0;
  int clamped_subsets = 0;
  double best_power = 0.0;
};

// Exhaustive subset optimization of the conditional power. With
// monotone=true only the chronological suffixes {i..k} plus the empty set
// are admissible. Ties within 1e-12 prefer more trials, then the smaller
// mask value.
SelectionResult optimal_power_select(const HistoricalPool& pool,
                                     const PlanningAssumptions& plan,
                                     bool monotone,
                                     OptimalPowerDiagnostics* diag = nullptr);

}  // namespace hybridct
