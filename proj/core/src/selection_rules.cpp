#include "hybridct/selection_rules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridct/design_eval.hpp"

namespace hybridct {

void PlanningAssumptions::validate() const {
  if (!(pi_t_star > 0.0 && pi_t_star < 1.0) ||
      !(pi_c_star > 0.0 && pi_c_star < 1.0)) {
    throw std::invalid_argument("PlanningAssumptions: rates must lie in (0,1)");
  }
  if (n_t < 1 || n_c < 1) {
    throw std::invalid_argument("PlanningAssumptions: sample sizes must be >= 1");
  }
  if (!(gamma > 0.5 && gamma < 1.0)) {
    throw std::invalid_argument("PlanningAssumptions: gamma must lie in (0.5,1)");
  }
}

std::string SelectionRule::name() const {
  switch (kind) {
    case RuleKind::Full: return "full";
    case RuleKind::Random: return "random";
    case RuleKind::DropTheBest: return "drop_best";
    case RuleKind::Threshold: return "threshold";
    case RuleKind::OptimalPower: return "optimal_power";
    case RuleKind::Separate: return "separate";
    case RuleKind::MonotoneOptimalPower: return "monotone_optimal_power";
  }
  return "unknown";
}

SelectionRule SelectionRule::from_name(const std::string& name) {
  SelectionRule rule;
  if (name == "full") rule.kind = RuleKind::Full;
  else if (name == "random") rule.kind = RuleKind::Random;
  else if (name == "drop_best") rule.kind = RuleKind::DropTheBest;
  else if (name == "threshold") rule.kind = RuleKind::Threshold;
  else if (name == "optimal_power") rule.kind = RuleKind::OptimalPower;
  else if (name == "separate") rule.kind = RuleKind::Separate;
  else if (name == "monotone_optimal_power") rule.kind = RuleKind::MonotoneOptimalPower;
  else throw std::invalid_argument("unknown selection rule: " + name);
  return rule;
}

namespace {

SelectionResult result_from_mask(const HistoricalPool& pool,
                                 const SelectionRule& rule,
                                 const std::vector<bool>& mask) {
  SelectionResult res;
  res.mask = mask;
  res.rule = rule;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (mask[i]) res.selected.trials.push_back(pool.trials[i]);
  }
  return res;
}

}  // namespace

SelectionResult select(const HistoricalPool& pool, const SelectionRule& rule,
                       RngStream& rng) {
  pool.validate();
  const std::size_t k = pool.size();
  if (k == 0 && rule.kind != RuleKind::Separate) {
    throw std::invalid_argument("select: empty pool (only Separate applies)");
  }
  std::vector<bool> mask(k, false);
  switch (rule.kind) {
    case RuleKind::Full:
      std::fill(mask.begin(), mask.end(), true);
      return result_from_mask(pool, rule, mask);
    case RuleKind::Separate:
      return result_from_mask(pool, rule, mask);
    case RuleKind::Random: {
      if (k < 2) throw std::invalid_argument("select: Random needs >= 2 trials");
      const int drop = rng.next_index(static_cast<int>(k));
      std::fill(mask.begin(), mask.end(), true);
      mask[drop] = false;
      SelectionResult res = result_from_mask(pool, rule, mask);
      res.rng_draw = static_cast<std::uint64_t>(drop);
      return res;
    }
    case RuleKind::DropTheBest: {
      if (k < 2) throw std::invalid_argument("select: DropTheBest needs >= 2 trials");
      // Ties drop the most recent of the tied trials.
      std::size_t best = 0;
      for (std::size_t i = 1; i < k; ++i) {
        if (pool.trials[i].rate() >= pool.trials[best].rate()) best = i;
      }
      std::fill(mask.begin(), mask.end(), true);
      mask[best] = false;
      return result_from_mask(pool, rule, mask);
    }
    case RuleKind::Threshold: {
      if (!(rule.threshold > 0.0 && rule.threshold < 1.0)) {
        throw std::invalid_argument("select: threshold must lie in (0,1)");
      }
      for (std::size_t i = 0; i < k; ++i) {
        mask[i] = pool.trials[i].rate() <= rule.threshold;
      }
      return result_from_mask(pool, rule, mask);
    }
    case RuleKind::OptimalPower:
    case RuleKind::MonotoneOptimalPower: {
      if (!rule.planning) {
        throw std::invalid_argument("select: optimal-power rule needs planning assumptions");
      }
      SelectionResult res = optimal_power_select(
          pool, *rule.planning, rule.kind == RuleKind::MonotoneOptimalPower);
      res.rule = rule;
      return res;
    }
  }
  throw std::invalid_argument("select: unhandled rule");
}

double conditional_power_pooled(const HistoricalPool& subset,
                                const PlanningAssumptions& plan,
                                bool* clamped) {
  plan.validate();
  BetaMixture prior;
  bool was_clamped = false;
  if (subset.empty()) {
    prior = BetaMixture::vague();
  } else {
    const double x = subset.total_responders();
    const double f = subset.total_size() - x;
    was_clamped = (x < 0.5) || (f < 0.5);
    prior = BetaMixture::single(std::max(x, 0.5), std::max(f, 0.5));
  }
  if (clamped) *clamped = was_clamped;
  const DecisionBoundary b = boundary(prior, plan.n_t, plan.n_c, plan.gamma);
  return conditional_success_probability(b, plan.pi_t_star, plan.pi_c_star);
}

SelectionResult optimal_power_select(const HistoricalPool& pool,
                                     const PlanningAssumptions& plan,
                                     bool monotone,
                                     OptimalPowerDiagnostics* diag) {
  pool.validate();
  plan.validate();
  const int k = static_cast<int>(pool.size());
  if (k > 20) {
    throw std::invalid_argument("optimal_power_select: pool too large to enumerate");
  }

  std::vector<std::uint32_t> masks;
  if (monotone) {
    // Chronological suffixes {i..k} plus the empty set.
    masks.push_back(0);
    for (int i = k - 1; i >= 0; --i) {
      std::uint32_t m = 0;
      for (int j = i; j < k; ++j) m |= 1u << j;
      masks.push_back(m);
    }
  } else {
    masks.resize(std::size_t{1} << k);
    for (std::uint32_t m = 0; m < masks.size(); ++m) masks[m] = m;
  }

  double best_power = -1.0;
  std::uint32_t best_mask = 0;
  int best_count = -1;
  int clamped_total = 0;
  for (std::uint32_t m : masks) {
    HistoricalPool subset;
    int count = 0;
    for (int i = 0; i < k; ++i) {
      if (m >> i & 1u) {
        subset.trials.push_back(pool.trials[i]);
        ++count;
      }
    }
    bool clamped = false;
    const double power = conditional_power_pooled(subset, plan, &clamped);
    if (clamped) ++clamped_total;
    const bool better =
        power > best_power + 1e-12 ||
        (std::fabs(power - best_power) <= 1e-12 &&
         (count > best_count ||
          (count == best_count && m < best_mask)));
    if (better) {
      best_power = power;
      best_mask = m;
      best_count = count;
    }
  }

  if (diag) {
    diag->subsets_evaluated = static_cast<int>(masks.size());
    diag->clamped_subsets = clamped_total;
    diag->best_power = best_power;
  }

  SelectionRule rule;
  rule.kind = monotone ? RuleKind::MonotoneOptimalPower : RuleKind::OptimalPower;
  rule.planning = plan;
  std::vector<bool> mask(k, false);
  for (int i = 0; i < k; ++i) mask[i] = (best_mask >> i & 1u) != 0;
  SelectionResult res;
  res.rule = rule;
  res.mask = mask;
  for (int i = 0; i < k; ++i) {
    if (mask[i]) res.selected.trials.push_back(pool.trials[i]);
  }
  return res;
}

}  // namespace hybridct
