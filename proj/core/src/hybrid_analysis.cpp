#include "hybridct/hybrid_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hybridct {

void ProspectiveData::validate() const {
  if (treatment.size < 1 || control.size < 1 || treatment.responders < 0 ||
      control.responders < 0 || treatment.responders > treatment.size ||
      control.responders > control.size) {
    throw std::invalid_argument("ProspectiveData: counts must fit within sizes");
  }
}

void TtpConfig::validate() const {
  if (!(alpha_pre > 0.0 && alpha_pre < 1.0) || !(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("TtpConfig: levels must lie in (0,1)");
  }
}

void BayesConfig::validate() const {
  if (!(w_r > 0.0 && w_r < 1.0)) {
    throw std::invalid_argument("BayesConfig: w_r must lie in (0,1)");
  }
  if (!(gamma > 0.5 && gamma < 1.0)) {
    throw std::invalid_argument("BayesConfig: gamma must lie in (0.5,1)");
  }
  hyper.validate();
}

AnalysisResult analyze_freq_separate(const ProspectiveData& data, double alpha) {
  data.validate();
  const Counts2x2 tbl{data.treatment.responders, data.treatment.size,
                      data.control.responders, data.control.size};
  AnalysisResult res;
  res.p_value = fisher_exact_one_sided(tbl);
  res.success = *res.p_value <= alpha;
  const PropDiffCi ci = prop_diff_ci_cc(tbl, 1.0 - 2.0 * alpha);
  res.rd_estimate = ci.estimate;
  res.interval = {ci.lower, ci.upper};
  return res;
}

AnalysisResult analyze_ttp(const HistoricalPool& selected,
                           const ProspectiveData& data, const TtpConfig& cfg) {
  data.validate();
  cfg.validate();
  if (selected.empty()) {
    return analyze_freq_separate(data, cfg.alpha);
  }
  selected.validate();
  const int x_h = selected.total_responders();
  const int n_h = selected.total_size();
  const Counts2x2 pre_tbl{x_h, n_h, data.control.responders, data.control.size};
  const double p_pre = fisher_exact_two_sided(pre_tbl);
  const bool pool = p_pre >= cfg.alpha_pre;

  Counts2x2 tbl{data.treatment.responders, data.treatment.size,
                data.control.responders, data.control.size};
  if (pool) {
    tbl.y_c += x_h;
    tbl.n_c += n_h;
  }
  AnalysisResult res;
  res.pooled = pool;
  res.p_value = fisher_exact_one_sided(tbl);
  res.success = *res.p_value <= cfg.alpha;
  const PropDiffCi ci = prop_diff_ci_cc(tbl, 1.0 - 2.0 * cfg.alpha);
  res.rd_estimate = ci.estimate;
  res.interval = {ci.lower, ci.upper};
  if (pool) {
    res.rd_prospective_only =
        static_cast<double>(data.treatment.responders) / data.treatment.size -
        static_cast<double>(data.control.responders) / data.control.size;
  }
  return res;
}

std::pair<double, double> mixture_difference_interval(const BetaMixture& t,
                                                      const BetaMixture& c,
                                                      double level,
                                                      int grid_cells) {
  if (!(level > 0.0 && level < 1.0) || grid_cells < 8) {
    throw std::invalid_argument("mixture_difference_interval: invalid level or grid");
  }
  const int n = grid_cells;
  const double h = 1.0 / n;
  std::vector<double> ft(n), fc(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) * h;
    ft[i] = t.pdf(x);
    fc[i] = c.pdf(x);
  }
  // Mass function of D = T - C on the grid d_k = (k - (n-1)) * h.
  std::vector<double> g(2 * n - 1, 0.0);
  for (int i = 0; i < n; ++i) {
    if (ft[i] <= 0.0) continue;
    const double fti = ft[i] * h * h;
    for (int j = 0; j < n; ++j) {
      g[i - j + (n - 1)] += fti * fc[j];
    }
  }
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    acc += g[k];
    cdf[k] = acc;
  }
  for (double& v : cdf) v /= acc;
  auto quantile = [&](double q) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), q);
    const std::size_t k = static_cast<std::size_t>(it - cdf.begin());
    const double d_k = (static_cast<double>(k) - (n - 1)) * h;
    if (k == 0) return d_k;
    const double c0 = cdf[k - 1], c1 = cdf[k];
    const double d_prev = (static_cast<double>(k - 1) - (n - 1)) * h;
    if (c1 <= c0) return d_k;
    return d_prev + (q - c0) / (c1 - c0) * h;
  };
  const double tail = 0.5 * (1.0 - level);
  return {quantile(tail), quantile(1.0 - tail)};
}

AnalysisResult analyze_bayes(const HistoricalPool& selected,
                             const ProspectiveData& data, const BayesConfig& cfg,
                             bool separate, MapFitCache* cache) {
  data.validate();
  cfg.validate();
  const BetaMixture control_prior =
      separate ? BetaMixture::vague()
               : control_prior_for_pool(selected, cfg.w_r, cfg.hyper,
                                        cfg.fit_options, cache);
  const BetaParams treat_post{1.0 + data.treatment.responders,
                              1.0 + data.treatment.size - data.treatment.responders};
  const BetaMixture control_post =
      posterior_update(control_prior, data.control.responders, data.control.size);

  AnalysisResult res;
  res.posterior_prob = mixture_superiority(treat_post, control_post);
  res.success = *res.posterior_prob > cfg.gamma;
  res.rd_estimate = treat_post.mean() - control_post.mean();
  if (cfg.compute_ess) res.ess = ess_elir(control_prior);
  if (cfg.compute_interval) {
    const BetaMixture treat_mix = BetaMixture::single(treat_post.a, treat_post.b);
    res.interval = mixture_difference_interval(treat_mix, control_post, 0.95);
  }
  return res;
}

}  // namespace hybridct
