#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hybridct/hybrid_analysis.hpp"
#include "hybridct/selection_rules.hpp"

namespace hybridct {

enum class Hypothesis { Null, Alt };
enum class Family { Exchangeable, Shift, TimeTrend, LargeProspective };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct ScenarioConfig {
  std::string id;                 // stable identifier (rng keying + output)
  Family family = Family::Exchangeable;
  double tau = 0.3;               // between-trial sd, logit scale
  int k = 8;                      // historical trial count
  int n_hc = 30;                  // per-trial historical size
  int n_total = 60;               // prospective total size
  int ratio = 1;                  // treatment:control allocation
  double pi_c_target = 0.20;      // prospective control mean response
  double pi_hc_target = 0.20;     // historical anchor (fixed at 0.20 in the grid)
  double rd = 0.20;               // planned risk difference at the anchor
  double drift = 0.0;             // logit drift per chronological step
  Hypothesis hypothesis = Hypothesis::Alt;
  int replicates = 10000;
  std::uint64_t seed = 0;
  bool fixed_rd_probability_scale = false;  // alternative treatment model
  bool extrapolated = false;      // grid factor outside the documented domains

  int n_c() const { return n_total / (ratio + 1); }
  int n_t() const { return n_total - n_c(); }
  double beta1() const;           // treatment logit shift (0 under Null)
  void validate() const;
};

struct Replicate {
  HistoricalPool pool;
  ProspectiveData data;
  double realized_rd = 0.0;
};

// Draws one replicate from the hierarchical data-generating model. Streams
// are keyed by (seed, scenario id, replicate, role), so replicates are
// independent work items and thread count never alters the data.
Replicate generate_replicate(const ScenarioConfig& cfg, int replicate_index);

enum class Method { RobustMap, BayesSeparate, TtpPool, FreqSeparate };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct MetricValue {
  double value = 0.0;
  double mc_se = 0.0;
};

struct OCRecord {
  std::string rule;
  std::string method;
  Hypothesis hypothesis = Hypothesis::Alt;
  int replicates = 0;
  MetricValue rejection;  // type I error under Null, power under Alt
  MetricValue bias;
  MetricValue rmse;
  std::optional<MetricValue> mean_ess;  // Bayesian methods only
};

struct EngineSettings {
  std::vector<SelectionRule> rules;
  std::vector<Method> methods;
  TtpConfig ttp;
  BayesConfig bayes;
  int threads = 0;
  bool startup_self_check = true;

  static EngineSettings defaults();
};

// Runs every rule x method over the scenario's replicates; the same
// replicate data feeds every rule so comparisons share Monte Carlo noise.
std::vector<OCRecord> run_scenario(const ScenarioConfig& cfg,
                                   const EngineSettings& settings);

struct GridSpec {
  Family family = Family::Exchangeable;
  std::vector<double> taus = {0.1, 0.3, 0.5};
  std::vector<int> ks = {4, 8};
  std::vector<int> n_totals = {60, 180};  // n_hc coupled as n_total / 2
  std::vector<int> ratios = {1, 2, 3};
  std::vector<double> pi_cs = {};         // Shift family only
  std::vector<double> rds = {};           // LargeProspective family only
  std::vector<int> n_hcs = {};            // LargeProspective family only
  std::vector<Hypothesis> hypotheses = {Hypothesis::Null, Hypothesis::Alt};
  int replicates = 10000;
  std::uint64_t seed = 0;
};

// Expands a factor grid into scenario configs with the documented couplings
// (n_total = 2 n_hc, time-trend fixed at k=8/n_hc=30, large prospective at
// n_total=500). Inconsistent couplings raise ConfigError; factor levels
// outside the documented domains are flagged extrapolated.
std::vector<ScenarioConfig> scenario_grid(const GridSpec& spec);

}  // namespace hybridct
