#include "hybridct/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "hybridct/design_eval.hpp"
#include "hybridct/errors.hpp"
#include "hybridct/parallel.hpp"
#include "hybridct/sim_engine.hpp"

#ifndef HYBRIDCT_VERSION
#define HYBRIDCT_VERSION "0.0.0"
#endif

namespace hybridct {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Bundled ankylosing-spondylitis historical placebo arms (eight trials) and
// the pinned checksum of the shipped CSV.
constexpr std::uint64_t kAsChecksum = 0x1e86b4c2d0324dd1ULL;
constexpr std::uint64_t kCaseStudyRandomSeed = 10;

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(ctx + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(ctx + ": unknown field '" + it.key() + "'");
  }
}

double get_number(const json& obj, const std::string& ctx, const char* key,
                  double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(ctx + ": missing field '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number()) {
    throw ConfigError(ctx + ": field '" + key + "' must be a number");
  }
  return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& ctx, const char* key,
            int fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(ctx + ": missing field '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number_integer()) {
    throw ConfigError(ctx + ": field '" + key + "' must be an integer");
  }
  return obj[key].get<int>();
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

HierarchicalHyperPrior parse_hyper(const json& obj, const std::string& ctx) {
  HierarchicalHyperPrior h;
  if (obj.is_null()) return h;
  check_keys(obj, ctx, {"mu_mean", "mu_sd", "tau_scale"});
  h.mu_mean = get_number(obj, ctx, "mu_mean", h.mu_mean);
  h.mu_sd = get_number(obj, ctx, "mu_sd", h.mu_sd);
  h.tau_scale = get_number(obj, ctx, "tau_scale", h.tau_scale);
  h.validate();
  return h;
}

struct AnalysisSettings {
  double alpha = 0.025;
  double alpha_pre = 0.10;
  double gamma = 0.975;
  double w_r = 0.1;
  HierarchicalHyperPrior hyper;
};

AnalysisSettings parse_analysis(const json& obj, const std::string& ctx) {
  AnalysisSettings a;
  if (obj.is_null()) return a;
  check_keys(obj, ctx, {"alpha", "alpha_pre", "gamma", "w_r", "hyper"});
  a.alpha = get_number(obj, ctx, "alpha", a.alpha);
  a.alpha_pre = get_number(obj, ctx, "alpha_pre", a.alpha_pre);
  a.gamma = get_number(obj, ctx, "gamma", a.gamma);
  a.w_r = get_number(obj, ctx, "w_r", a.w_r);
  if (obj.contains("hyper")) a.hyper = parse_hyper(obj["hyper"], ctx + ".hyper");
  return a;
}

std::vector<double> parse_number_list(const json& arr, const std::string& ctx) {
  if (!arr.is_array()) throw ConfigError(ctx + ": expected an array");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(ctx + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> parse_int_list(const json& arr, const std::string& ctx) {
  if (!arr.is_array()) throw ConfigError(ctx + ": expected an array");
  std::vector<int> out;
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw ConfigError(ctx + ": expected integers");
    out.push_back(v.get<int>());
  }
  return out;
}

struct SimulateConfig {
  std::uint64_t seed = 0;
  int replicates = 10000;
  std::vector<SelectionRule> rules;
  std::vector<Method> methods;
  AnalysisSettings analysis;
  std::vector<ScenarioConfig> scenarios;
  bool fixed_rd_probability_scale = false;
  json snapshot;
};

ScenarioConfig parse_scenario(const json& obj, const std::string& ctx,
                              Hypothesis hypothesis) {
  ScenarioConfig cfg;
  cfg.family = family_from_name(obj.value("family", "exchangeable"));
  cfg.tau = get_number(obj, ctx, "tau", cfg.tau);
  cfg.k = get_int(obj, ctx, "k", cfg.k);
  cfg.n_hc = get_int(obj, ctx, "n_hc", cfg.n_hc);
  cfg.n_total = get_int(obj, ctx, "n_total", cfg.n_total);
  cfg.ratio = get_int(obj, ctx, "ratio", cfg.ratio);
  cfg.pi_c_target = get_number(obj, ctx, "pi_c", cfg.pi_c_target);
  cfg.rd = get_number(obj, ctx, "rd", cfg.rd);
  cfg.drift = get_number(obj, ctx, "drift",
                         cfg.family == Family::TimeTrend ? -0.05 : 0.0);
  cfg.hypothesis = hypothesis;
  if (obj.contains("id")) {
    cfg.id = obj["id"].get<std::string>() +
             (hypothesis == Hypothesis::Null ? "_null" : "_alt");
  } else {
    std::ostringstream id;
    id << family_name(cfg.family) << "_tau" << cfg.tau << "_k" << cfg.k
       << "_nhc" << cfg.n_hc << "_n" << cfg.n_total << "_r" << cfg.ratio
       << "_pic" << cfg.pi_c_target << "_rd" << cfg.rd
       << (hypothesis == Hypothesis::Null ? "_null" : "_alt");
    cfg.id = id.str();
  }
  return cfg;
}

SimulateConfig parse_simulate_config(json root) {
  // A manifest from a previous run reproduces that run.
  if (root.contains("config")) {
    json inner = root["config"];
    if (root.contains("seed") && !inner.contains("seed")) {
      inner["seed"] = root["seed"];
    }
    root = inner;
  }
  const std::string ctx = "config";
  check_keys(root, ctx,
             {"seed", "replicates", "rules", "threshold", "methods", "analysis",
              "scenarios", "grid", "fixed_rd_probability_scale"});
  SimulateConfig cfg;
  cfg.snapshot = root;
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer()) {
      throw ConfigError("config: 'seed' must be an integer");
    }
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  cfg.replicates = get_int(root, ctx, "replicates", cfg.replicates);
  if (cfg.replicates < 1) throw ConfigError("config: replicates must be >= 1");
  cfg.fixed_rd_probability_scale =
      root.value("fixed_rd_probability_scale", false);

  const double threshold = get_number(root, ctx, "threshold", 0.20);
  if (root.contains("rules")) {
    for (const auto& r : root["rules"]) {
      if (!r.is_string()) throw ConfigError("config.rules: expected rule names");
      SelectionRule rule = SelectionRule::from_name(r.get<std::string>());
      rule.threshold = threshold;
      cfg.rules.push_back(rule);
    }
  } else {
    cfg.rules = EngineSettings::defaults().rules;
    for (auto& r : cfg.rules) r.threshold = threshold;
  }
  if (root.contains("methods")) {
    for (const auto& m : root["methods"]) {
      if (!m.is_string()) throw ConfigError("config.methods: expected method names");
      cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
  } else {
    cfg.methods = {Method::RobustMap};
  }
  if (root.contains("analysis")) {
    cfg.analysis = parse_analysis(root["analysis"], "config.analysis");
  }

  if (root.contains("scenarios") == root.contains("grid")) {
    throw ConfigError("config: provide exactly one of 'scenarios' or 'grid'");
  }
  if (root.contains("scenarios")) {
    if (!root["scenarios"].is_array() || root["scenarios"].empty()) {
      throw ConfigError("config.scenarios: expected a non-empty array");
    }
    int idx = 0;
    for (const auto& s : root["scenarios"]) {
      const std::string sctx = "config.scenarios[" + std::to_string(idx++) + "]";
      check_keys(s, sctx,
                 {"id", "family", "tau", "k", "n_hc", "n_total", "ratio",
                  "pi_c", "rd", "drift", "hypothesis"});
      const std::string hyp = s.value("hypothesis", "both");
      std::vector<Hypothesis> hs;
      if (hyp == "null") hs = {Hypothesis::Null};
      else if (hyp == "alt") hs = {Hypothesis::Alt};
      else if (hyp == "both") hs = {Hypothesis::Null, Hypothesis::Alt};
      else throw ConfigError(sctx + ": hypothesis must be null|alt|both");
      for (Hypothesis h : hs) {
        ScenarioConfig sc = parse_scenario(s, sctx, h);
        sc.replicates = cfg.replicates;
        sc.seed = cfg.seed;
        sc.fixed_rd_probability_scale = cfg.fixed_rd_probability_scale;
        sc.validate();
        cfg.scenarios.push_back(std::move(sc));
      }
    }
  } else {
    const json& g = root["grid"];
    check_keys(g, "config.grid",
               {"family", "taus", "ks", "n_totals", "ratios", "pi_cs", "rds",
                "n_hcs", "hypotheses"});
    GridSpec spec;
    spec.family = family_from_name(g.value("family", "exchangeable"));
    if (g.contains("taus")) spec.taus = parse_number_list(g["taus"], "config.grid.taus");
    if (g.contains("ks")) spec.ks = parse_int_list(g["ks"], "config.grid.ks");
    if (g.contains("n_totals")) spec.n_totals = parse_int_list(g["n_totals"], "config.grid.n_totals");
    if (g.contains("ratios")) spec.ratios = parse_int_list(g["ratios"], "config.grid.ratios");
    if (g.contains("pi_cs")) spec.pi_cs = parse_number_list(g["pi_cs"], "config.grid.pi_cs");
    if (g.contains("rds")) spec.rds = parse_number_list(g["rds"], "config.grid.rds");
    if (g.contains("n_hcs")) spec.n_hcs = parse_int_list(g["n_hcs"], "config.grid.n_hcs");
    if (g.contains("hypotheses")) {
      spec.hypotheses.clear();
      for (const auto& h : g["hypotheses"]) {
        const std::string s = h.get<std::string>();
        if (s == "null") spec.hypotheses.push_back(Hypothesis::Null);
        else if (s == "alt") spec.hypotheses.push_back(Hypothesis::Alt);
        else throw ConfigError("config.grid.hypotheses: expected null|alt");
      }
    }
    spec.replicates = cfg.replicates;
    spec.seed = cfg.seed;
    cfg.scenarios = scenario_grid(spec);
    for (auto& sc : cfg.scenarios) {
      sc.fixed_rd_probability_scale = cfg.fixed_rd_probability_scale;
    }
  }
  return cfg;
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FittingError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int default_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HYBRIDCT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return resolve_threads(0);
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file for checksum: " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int threads, std::optional<std::uint64_t> seed_override,
                 std::optional<int> replicates_override) {
  return run_guarded([&]() -> int {
    SimulateConfig cfg = parse_simulate_config(load_json(config_path));
    if (seed_override) {
      cfg.seed = *seed_override;
      for (auto& sc : cfg.scenarios) sc.seed = *seed_override;
      cfg.snapshot["seed"] = *seed_override;
    }
    if (replicates_override) {
      if (*replicates_override < 1) throw ConfigError("replicates must be >= 1");
      cfg.replicates = *replicates_override;
      for (auto& sc : cfg.scenarios) sc.replicates = *replicates_override;
      cfg.snapshot["replicates"] = *replicates_override;
    }

    EngineSettings settings;
    settings.rules = cfg.rules;
    settings.methods = cfg.methods;
    settings.ttp.alpha = cfg.analysis.alpha;
    settings.ttp.alpha_pre = cfg.analysis.alpha_pre;
    settings.bayes.w_r = cfg.analysis.w_r;
    settings.bayes.gamma = cfg.analysis.gamma;
    settings.bayes.hyper = cfg.analysis.hyper;
    settings.bayes.fit_options = MapFitOptions::coarse();
    settings.threads = default_threads(threads);

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "scenario_id,family,tau,k,n_hc,n_total,ratio,pi_c,hypothesis,rule,"
           "method,metric,value,mc_se\n";
    json runtimes = json::object();
    for (const auto& sc : cfg.scenarios) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<OCRecord> records = run_scenario(sc, settings);
      const auto t1 = std::chrono::steady_clock::now();
      runtimes[sc.id] =
          std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
      const std::string prefix =
          sc.id + "," + family_name(sc.family) + "," + fmt_double(sc.tau) + "," +
          std::to_string(sc.k) + "," + std::to_string(sc.n_hc) + "," +
          std::to_string(sc.n_total) + "," + std::to_string(sc.ratio) + "," +
          fmt_double(sc.pi_c_target) + "," +
          (sc.hypothesis == Hypothesis::Null ? "null" : "alt") + ",";
      for (const auto& rec : records) {
        const std::string row_head = prefix + rec.rule + "," + rec.method + ",";
        const char* rejection_name =
            sc.hypothesis == Hypothesis::Null ? "t1e" : "power";
        csv << row_head << rejection_name << "," << fmt_double(rec.rejection.value)
            << "," << fmt_double(rec.rejection.mc_se) << "\n";
        csv << row_head << "bias," << fmt_double(rec.bias.value) << ","
            << fmt_double(rec.bias.mc_se) << "\n";
        csv << row_head << "rmse," << fmt_double(rec.rmse.value) << ","
            << fmt_double(rec.rmse.mc_se) << "\n";
        if (rec.mean_ess) {
          csv << row_head << "mean_ess," << fmt_double(rec.mean_ess->value)
              << "," << fmt_double(rec.mean_ess->mc_se) << "\n";
        }
      }
    }
    {
      std::ofstream out(fs::path(out_dir) / "oc_results.csv", std::ios::binary);
      out << csv.str();
    }
    json manifest;
    manifest["artifact_version"] = HYBRIDCT_VERSION;
    manifest["timestamp"] = iso_timestamp();
    manifest["seed"] = cfg.seed;
    manifest["threads"] = settings.threads;
    manifest["config"] = cfg.snapshot;
    manifest["scenario_runtime_ms"] = runtimes;
    json extrapolated = json::array();
    for (const auto& sc : cfg.scenarios) {
      if (sc.extrapolated) extrapolated.push_back(sc.id);
    }
    manifest["extrapolated_scenarios"] = extrapolated;
    std::ofstream mout(fs::path(out_dir) / "manifest.json");
    mout << manifest.dump(2) << "\n";
    return kExitOk;
  });
}

namespace {

struct DesignEvalConfig {
  double gamma = 0.975;
  double w_r = 0.2;
  HierarchicalHyperPrior hyper;
  std::vector<SelectionRule> rules;
  double threshold = 0.25;
  PlanningAssumptions planning;
  struct Design {
    int n_total = 30;
    int ratio = 4;
    std::string id() const {
      return "n" + std::to_string(n_total) + "_r" + std::to_string(ratio);
    }
    int n_c() const {
      return static_cast<int>(std::lround(static_cast<double>(n_total) / (ratio + 1)));
    }
    int n_t() const { return n_total - n_c(); }
  };
  std::vector<Design> designs;
  double rd_alt = 0.35;
  double grid_from = 0.01, grid_to = 0.60, grid_step = 0.005;
  bool pos = true;
  std::string pos_design_prior = "map";             // map | rmap
  std::string pos_separate_design_prior = "vague";  // vague | full_map | full_rmap
  bool worst_case = true;
  std::uint64_t seed = 0;
};

DesignEvalConfig parse_design_config(const json& root) {
  const std::string ctx = "config";
  check_keys(root, ctx,
             {"gamma", "w_r", "hyper", "rules", "threshold", "planning",
              "designs", "rd_alt", "pi_grid", "pos", "pos_design_prior",
              "pos_separate_design_prior", "worst_case", "seed"});
  DesignEvalConfig cfg;
  cfg.gamma = get_number(root, ctx, "gamma", cfg.gamma);
  cfg.w_r = get_number(root, ctx, "w_r", cfg.w_r);
  if (root.contains("hyper")) cfg.hyper = parse_hyper(root["hyper"], ctx + ".hyper");
  cfg.threshold = get_number(root, ctx, "threshold", cfg.threshold);
  if (root.contains("rules")) {
    for (const auto& r : root["rules"]) {
      SelectionRule rule = SelectionRule::from_name(r.get<std::string>());
      rule.threshold = cfg.threshold;
      cfg.rules.push_back(rule);
    }
  } else {
    cfg.rules = EngineSettings::defaults().rules;
    for (auto& r : cfg.rules) r.threshold = cfg.threshold;
  }
  if (root.contains("planning")) {
    const json& p = root["planning"];
    check_keys(p, ctx + ".planning", {"pi_t", "pi_c"});
    cfg.planning.pi_t_star = get_number(p, ctx + ".planning", "pi_t", 0.6, true);
    cfg.planning.pi_c_star = get_number(p, ctx + ".planning", "pi_c", 0.25, true);
  }
  if (root.contains("designs")) {
    for (const auto& d : root["designs"]) {
      check_keys(d, ctx + ".designs[]", {"n_total", "ratio"});
      DesignEvalConfig::Design design;
      design.n_total = get_int(d, ctx + ".designs[]", "n_total", 30, true);
      design.ratio = get_int(d, ctx + ".designs[]", "ratio", 4);
      if (design.n_c() < 1 || design.n_t() < 1) {
        throw ConfigError("config.designs[]: allocation leaves an empty arm");
      }
      cfg.designs.push_back(design);
    }
  } else {
    cfg.designs.push_back(DesignEvalConfig::Design{});
  }
  cfg.rd_alt = get_number(root, ctx, "rd_alt", cfg.rd_alt);
  if (root.contains("pi_grid")) {
    const json& g = root["pi_grid"];
    check_keys(g, ctx + ".pi_grid", {"from", "to", "step"});
    cfg.grid_from = get_number(g, ctx + ".pi_grid", "from", cfg.grid_from);
    cfg.grid_to = get_number(g, ctx + ".pi_grid", "to", cfg.grid_to);
    cfg.grid_step = get_number(g, ctx + ".pi_grid", "step", cfg.grid_step);
    if (!(cfg.grid_step > 0.0) || !(cfg.grid_from > 0.0) ||
        !(cfg.grid_to < 1.0) || cfg.grid_from > cfg.grid_to) {
      throw ConfigError("config.pi_grid: invalid range");
    }
  }
  cfg.pos = root.value("pos", cfg.pos);
  cfg.pos_design_prior = root.value("pos_design_prior", cfg.pos_design_prior);
  cfg.pos_separate_design_prior =
      root.value("pos_separate_design_prior", cfg.pos_separate_design_prior);
  if (cfg.pos_design_prior != "map" && cfg.pos_design_prior != "rmap") {
    throw ConfigError("config.pos_design_prior: expected map|rmap");
  }
  if (cfg.pos_separate_design_prior != "vague" &&
      cfg.pos_separate_design_prior != "full_map" &&
      cfg.pos_separate_design_prior != "full_rmap") {
    throw ConfigError("config.pos_separate_design_prior: expected vague|full_map|full_rmap");
  }
  cfg.worst_case = root.value("worst_case", cfg.worst_case);
  if (root.contains("seed")) cfg.seed = root["seed"].get<std::uint64_t>();
  return cfg;
}

std::vector<double> make_pi_grid(double from, double to, double step) {
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double v = from + i * step;
    if (v > to + 1e-12) break;
    grid.push_back(v);
  }
  return grid;
}

// Non-robustified counterpart of a selection's analysis prior, used as the
// control design prior for assurance: the fitted MAP for >= 2 trials, the
// conjugate trial posterior for one, the vague prior for none.
BetaMixture design_prior_for_selection(const HistoricalPool& selected,
                                       const HierarchicalHyperPrior& hyper,
                                       const MapFitOptions& options,
                                       MapFitCache* cache) {
  if (selected.empty()) return BetaMixture::vague();
  if (selected.size() == 1) {
    const auto& t = selected.trials[0];
    return BetaMixture::single(1.0 + t.responders, 1.0 + t.size - t.responders);
  }
  return cache ? cache->fit(selected, hyper, options)
               : fit_map_prior(selected, hyper, options);
}

}  // namespace

int cmd_design_eval(const std::string& config_path,
                    const std::string& historical_csv,
                    const std::string& out_dir, int threads) {
  return run_guarded([&]() -> int {
    const DesignEvalConfig cfg = parse_design_config(load_json(config_path));
    const HistoricalPool pool = load_pool_csv(historical_csv);
    const int nthreads = default_threads(threads);
    const std::vector<double> pi_grid =
        make_pi_grid(cfg.grid_from, cfg.grid_to, cfg.grid_step);
    if (pool.empty()) {
      std::cerr << "warning: empty historical pool, only the separate analysis "
                   "is evaluated\n";
    }

    MapFitCache cache;
    const MapFitOptions fit_options;  // accurate refined grid

    std::vector<SelectionRule> rules = cfg.rules;
    if (pool.empty()) {
      rules.clear();
      rules.push_back(SelectionRule::from_name("separate"));
    }

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "design_id,rule,pi_c,t1e,power\n";
    json pos_json = json::object();
    for (const auto& design : cfg.designs) {
      json pos_for_design = json::object();
      // Selections are design-dependent only through the optimal-power rule.
      std::vector<std::pair<SelectionRule, SelectionResult>> selections;
      for (SelectionRule rule : rules) {
        if (rule.is_optimal_power()) {
          PlanningAssumptions plan = cfg.planning;
          plan.n_t = design.n_t();
          plan.n_c = design.n_c();
          plan.gamma = cfg.gamma;
          rule.planning = plan;
        }
        RngStream rng = RngStream::keyed(cfg.seed,
                                         fnv1a64(rule.name().data(),
                                                 rule.name().size()),
                                         0, 5);
        selections.emplace_back(rule, select(pool, rule, rng));
      }
      std::vector<OCCurve> curves(selections.size());
      parallel_for(selections.size(), nthreads, [&](std::size_t i) {
        const BetaMixture prior = control_prior_for_pool(
            selections[i].second.selected, cfg.w_r, cfg.hyper, fit_options,
            &cache);
        curves[i] = conditional_oc(prior, design.n_t(), design.n_c(), cfg.gamma,
                                   pi_grid, cfg.rd_alt);
      });
      for (std::size_t i = 0; i < selections.size(); ++i) {
        const std::string rule_name = selections[i].first.name();
        for (std::size_t g = 0; g < pi_grid.size(); ++g) {
          csv << design.id() << "," << rule_name << "," << fmt_double(pi_grid[g])
              << "," << fmt_double(curves[i].t1e[g]) << ","
              << fmt_double(curves[i].power[g]) << "\n";
        }
        if (cfg.pos) {
          const HistoricalPool& sel = selections[i].second.selected;
          const BetaMixture analysis_prior =
              control_prior_for_pool(sel, cfg.w_r, cfg.hyper, fit_options, &cache);
          BetaMixture design_c;
          if (selections[i].first.kind == RuleKind::Separate) {
            if (cfg.pos_separate_design_prior == "vague") {
              design_c = BetaMixture::vague();
            } else if (cfg.pos_separate_design_prior == "full_map") {
              design_c = design_prior_for_selection(pool, cfg.hyper, fit_options,
                                                    &cache);
            } else {
              design_c = control_prior_for_pool(pool, cfg.w_r, cfg.hyper,
                                                fit_options, &cache);
            }
          } else if (cfg.pos_design_prior == "map") {
            design_c = design_prior_for_selection(sel, cfg.hyper, fit_options,
                                                  &cache);
          } else {
            design_c = analysis_prior;
          }
          const double pos = probability_of_success(
              analysis_prior, BetaMixture::vague(), design.n_t(), design.n_c(),
              cfg.gamma, &design_c);
          pos_for_design[rule_name] = pos;
        }
      }
      if (cfg.worst_case && !pool.empty()) {
        WorstCaseSettings wc;
        wc.n_t = design.n_t();
        wc.n_c = design.n_c();
        wc.gamma = cfg.gamma;
        wc.w_r = cfg.w_r;
        wc.hyper = cfg.hyper;
        wc.fit_options = fit_options;
        wc.threads = nthreads;
        const WorstCaseSelection wcs = worst_case_selection(pool, wc, pi_grid);
        for (std::size_t g = 0; g < pi_grid.size(); ++g) {
          csv << design.id() << ",worst_case," << fmt_double(pi_grid[g]) << ","
              << fmt_double(wcs.t1e[g]) << ",\n";
        }
      }
      pos_json[design.id()] = pos_for_design;
    }
    {
      std::ofstream out(fs::path(out_dir) / "curves.csv", std::ios::binary);
      out << csv.str();
    }
    json meta;
    meta["gamma"] = cfg.gamma;
    meta["w_r"] = cfg.w_r;
    meta["rd_alt"] = cfg.rd_alt;
    meta["pos_design_prior"] = cfg.pos_design_prior;
    meta["pos_separate_design_prior"] = cfg.pos_separate_design_prior;
    pos_json["_meta"] = meta;
    std::ofstream pout(fs::path(out_dir) / "pos.json");
    pout << pos_json.dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_case_study(const std::string& out_dir, const std::string& data_path,
                   int threads) {
  return run_guarded([&]() -> int {
    if (!fs::exists(data_path)) {
      throw ConfigError("case-study dataset not found: " + data_path);
    }
    if (file_checksum(data_path) != kAsChecksum) {
      throw ConfigError("case-study dataset checksum mismatch: " + data_path);
    }
    const HistoricalPool pool = load_pool_csv(data_path);
    const int nthreads = default_threads(threads);

    // Observed prospective trial: 14/24 responders vs 1/6.
    ProspectiveData data;
    data.treatment = {14, 24};
    data.control = {1, 6};

    const double alpha = 0.025, alpha_pre = 0.10, gamma = 0.975, w_r = 0.2;
    const double threshold = 0.25;
    PlanningAssumptions plan;
    plan.pi_t_star = 0.60;
    plan.pi_c_star = 0.25;
    plan.n_t = 24;
    plan.n_c = 6;
    plan.gamma = gamma;

    // Arithmetic self-check against the pooled full-selection estimate.
    {
      const double pooled_rate =
          static_cast<double>(pool.total_responders() + data.control.responders) /
          (pool.total_size() + data.control.size);
      const double est = 14.0 / 24.0 - pooled_rate;
      if (std::fabs(est - 0.337) > 0.0005) {
        throw ConfigError("case-study dataset failed the pooled-estimate self-check");
      }
    }

    std::vector<SelectionRule> rules;
    for (const char* name :
         {"full", "random", "drop_best", "threshold", "optimal_power",
          "separate"}) {
      SelectionRule rule = SelectionRule::from_name(name);
      rule.threshold = threshold;
      if (rule.is_optimal_power()) rule.planning = plan;
      rules.push_back(rule);
    }

    std::vector<SelectionResult> selections;
    for (const auto& rule : rules) {
      RngStream rng = RngStream::keyed(kCaseStudyRandomSeed,
                                       fnv1a64("case-study-random", 17), 0, 5);
      selections.push_back(select(pool, rule, rng));
    }

    fs::create_directories(out_dir);

    // Frequentist test-then-pool rows.
    {
      TtpConfig ttp;
      ttp.alpha = alpha;
      ttp.alpha_pre = alpha_pre;
      std::ostringstream csv;
      csv << "rule,n_selected,estimate,ci_lower,ci_upper,p_value,pooled\n";
      for (std::size_t i = 0; i < rules.size(); ++i) {
        const AnalysisResult res =
            analyze_ttp(selections[i].selected, data, ttp);
        csv << rules[i].name() << "," << selections[i].selected.size() << ","
            << fmt_double(res.rd_estimate) << ","
            << fmt_double(res.interval->first) << ","
            << fmt_double(res.interval->second) << ","
            << fmt_double(*res.p_value) << ","
            << (res.pooled ? (*res.pooled ? "true" : "false") : "") << "\n";
      }
      std::ofstream out(fs::path(out_dir) / "tableS6.csv", std::ios::binary);
      out << csv.str();
    }

    // Bayesian robust MAP rows with design-stage assurance.
    {
      BayesConfig bayes;
      bayes.w_r = w_r;
      bayes.gamma = gamma;
      bayes.compute_interval = true;
      MapFitCache cache;
      struct Row {
        AnalysisResult res;
        double pos = 0.0;
      };
      std::vector<Row> rows(rules.size());
      parallel_for(rules.size(), nthreads, [&](std::size_t i) {
        const bool separate = rules[i].kind == RuleKind::Separate;
        rows[i].res =
            analyze_bayes(selections[i].selected, data, bayes, separate, &cache);
        const BetaMixture analysis_prior =
            separate ? BetaMixture::vague()
                     : control_prior_for_pool(selections[i].selected, w_r,
                                              bayes.hyper, bayes.fit_options,
                                              &cache);
        const BetaMixture design_c = design_prior_for_selection(
            selections[i].selected, bayes.hyper, bayes.fit_options, &cache);
        rows[i].pos = probability_of_success(analysis_prior,
                                             BetaMixture::vague(), plan.n_t,
                                             plan.n_c, gamma, &design_c);
      });
      std::ostringstream csv;
      csv << "rule,n_selected,pos,estimate,ci_lower,ci_upper,posterior_prob\n";
      for (std::size_t i = 0; i < rules.size(); ++i) {
        csv << rules[i].name() << "," << selections[i].selected.size() << ","
            << fmt_double(rows[i].pos) << "," << fmt_double(rows[i].res.rd_estimate)
            << "," << fmt_double(rows[i].res.interval->first) << ","
            << fmt_double(rows[i].res.interval->second) << ","
            << fmt_double(*rows[i].res.posterior_prob) << "\n";
      }
      std::ofstream out(fs::path(out_dir) / "table6.csv", std::ios::binary);
      out << csv.str();
    }

    json meta;
    meta["artifact_version"] = HYBRIDCT_VERSION;
    meta["data_checksum"] = kAsChecksum;
    meta["w_r"] = w_r;
    meta["gamma"] = gamma;
    meta["alpha"] = alpha;
    meta["alpha_pre"] = alpha_pre;
    meta["threshold"] = threshold;
    meta["planning"] = {{"pi_t", plan.pi_t_star}, {"pi_c", plan.pi_c_star},
                        {"n_t", plan.n_t}, {"n_c", plan.n_c}};
    meta["treatment"] = {{"responders", 14}, {"size", 24}};
    meta["control"] = {{"responders", 1}, {"size", 6}};
    std::ofstream mout(fs::path(out_dir) / "case_study_meta.json");
    mout << meta.dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_fit_map(const std::string& historical_csv, std::optional<double> w_r,
                bool coarse) {
  return run_guarded([&]() -> int {
    const HistoricalPool pool = load_pool_csv(historical_csv);
    const HierarchicalHyperPrior hyper;
    if (pool.empty()) {
      throw ConfigError("fit-map: the historical CSV holds no trials");
    }
    auto print_mixture = [](const char* label, const BetaMixture& mix) {
      std::cout << label << " (mean " << fmt_double(mix.mean()) << "):\n";
      for (std::size_t i = 0; i < mix.size(); ++i) {
        std::cout << "  w=" << fmt_double(mix.weights[i]) << "  Beta("
                  << fmt_double(mix.components[i].a) << ", "
                  << fmt_double(mix.components[i].b) << ")\n";
      }
    };
    if (pool.size() == 1) {
      const double w = w_r.value_or(0.1);
      const BetaMixture prior = robust_single(pool.trials[0], w);
      print_mixture("robust mixture prior (single trial)", prior);
      std::cout << "ESS (ELIR): " << fmt_double(ess_elir(prior)) << "\n";
      return kExitOk;
    }
    const MapFitOptions options =
        coarse ? MapFitOptions::coarse() : MapFitOptions{};
    MapFitDiagnostics diag;
    const BetaMixture map = fit_map_prior(pool, hyper, options, &diag);
    print_mixture("MAP prior", map);
    std::cout << "components: " << diag.n_components
              << "  em_iterations: " << diag.em_iterations
              << "  tv_distance: " << fmt_double(diag.tv_distance) << "\n";
    std::cout << "ESS (ELIR): " << fmt_double(ess_elir(map)) << "\n";
    if (w_r) {
      const BetaMixture robust = robustify(map, *w_r);
      print_mixture("robust MAP prior", robust);
      std::cout << "ESS (ELIR): " << fmt_double(ess_elir(robust)) << "\n";
    }
    return kExitOk;
  });
}

}  // namespace hybridct
