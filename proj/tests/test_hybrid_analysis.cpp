#include <doctest.h>

#include <cmath>

#include "hybridct/hybrid_analysis.hpp"

using namespace hybridct;

namespace {

HistoricalPool make_pool(std::initializer_list<std::pair<int, int>> trials) {
  HistoricalPool pool;
  int idx = 0;
  for (const auto& [r, n] : trials) {
    pool.trials.push_back(HistoricalTrial{++idx, r, n});
  }
  return pool;
}

HistoricalPool as_pool() {
  return make_pool({{23, 107}, {12, 44}, {19, 51}, {9, 39},
                    {39, 139}, {6, 20}, {9, 78}, {10, 35}});
}

ProspectiveData as_data() {
  ProspectiveData d;
  d.treatment = {14, 24};
  d.control = {1, 6};
  return d;
}

}  // namespace

TEST_CASE("test-then-pool on the case-study data") {
  TtpConfig cfg;
  SUBCASE("full selection pools and strengthens the comparison") {
    const AnalysisResult res = analyze_ttp(as_pool(), as_data(), cfg);
    REQUIRE(res.pooled.has_value());
    CHECK(*res.pooled);
    CHECK(res.rd_estimate == doctest::Approx(0.337).epsilon(0.003));
    CHECK(res.interval->first == doctest::Approx(0.114).epsilon(0.01));
    CHECK(res.interval->second == doctest::Approx(0.559).epsilon(0.002));
    CHECK(*res.p_value < 0.001);
    CHECK(res.success);
    CHECK(res.rd_prospective_only ==
          doctest::Approx(14.0 / 24.0 - 1.0 / 6.0).epsilon(1e-12));
  }
  SUBCASE("empty selection reduces exactly to the separate analysis") {
    const AnalysisResult ttp = analyze_ttp({}, as_data(), cfg);
    const AnalysisResult sep = analyze_freq_separate(as_data(), cfg.alpha);
    CHECK(ttp.rd_estimate == sep.rd_estimate);
    CHECK(ttp.interval->first == sep.interval->first);
    CHECK(ttp.interval->second == sep.interval->second);
    CHECK(*ttp.p_value == *sep.p_value);
    CHECK(ttp.success == sep.success);
    CHECK_FALSE(ttp.pooled.has_value());
    CHECK(sep.rd_estimate == doctest::Approx(0.417).epsilon(0.0025));
    CHECK(*sep.p_value == doctest::Approx(0.084).epsilon(0.006));
    CHECK_FALSE(sep.success);
  }
  SUBCASE("a conflicting pool fails the pre-test and falls back") {
    const HistoricalPool conflict = make_pool({{27, 30}, {28, 30}});
    const AnalysisResult res = analyze_ttp(conflict, as_data(), cfg);
    REQUIRE(res.pooled.has_value());
    CHECK_FALSE(*res.pooled);
    const AnalysisResult sep = analyze_freq_separate(as_data(), cfg.alpha);
    CHECK(res.rd_estimate == sep.rd_estimate);
    CHECK(*res.p_value == *sep.p_value);
  }
  SUBCASE("pooling decision matches the two-sided pre-test exactly") {
    for (int r = 0; r <= 40; r += 4) {
      const HistoricalPool pool = make_pool({{r, 40}});
      const AnalysisResult res = analyze_ttp(pool, as_data(), cfg);
      const double p =
          fisher_exact_two_sided({r, 40, 1, 6});
      CHECK(*res.pooled == (p >= cfg.alpha_pre));
    }
  }
}

TEST_CASE("Bayesian separate analysis matches the flat-prior posterior") {
  BayesConfig cfg;
  cfg.compute_interval = true;
  const AnalysisResult res = analyze_bayes({}, as_data(), cfg, true);
  CHECK(*res.posterior_prob == doctest::Approx(0.959).epsilon(0.0011));
  CHECK(res.rd_estimate == doctest::Approx(15.0 / 26.0 - 2.0 / 8.0).epsilon(1e-9));
  CHECK_FALSE(res.success);  // 0.9585 < 0.975
  CHECK(res.interval->first == doctest::Approx(-0.047).epsilon(0.3));
  CHECK(res.interval->second == doctest::Approx(0.624).epsilon(0.01));
  CHECK(res.interval->first <= res.rd_estimate);
  CHECK(res.rd_estimate <= res.interval->second);
  // Prior ESS of the flat control prior is zero under ELIR.
  CHECK(*res.ess == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("robust MAP analysis fallbacks and invariances") {
  BayesConfig cfg;
  cfg.fit_options = MapFitOptions::coarse();
  SUBCASE("empty selection equals the separate analysis") {
    const AnalysisResult borrow = analyze_bayes({}, as_data(), cfg, false);
    const AnalysisResult sep = analyze_bayes({}, as_data(), cfg, true);
    CHECK(*borrow.posterior_prob == doctest::Approx(*sep.posterior_prob).epsilon(1e-14));
    CHECK(borrow.rd_estimate == doctest::Approx(sep.rd_estimate).epsilon(1e-14));
  }
  SUBCASE("single selected trial uses the robust mixture prior") {
    const HistoricalPool one = make_pool({{9, 78}});
    const AnalysisResult res = analyze_bayes(one, as_data(), cfg, false);
    CHECK(*res.posterior_prob > 0.975);
    CHECK(res.rd_estimate > 0.40);
  }
  SUBCASE("posterior probability is nondecreasing in y_t") {
    const HistoricalPool pool = make_pool({{5, 30}, {7, 30}});
    cfg.compute_ess = false;
    double prev = -1.0;
    for (int y_t = 0; y_t <= 24; ++y_t) {
      ProspectiveData d;
      d.treatment = {y_t, 24};
      d.control = {1, 6};
      const AnalysisResult res = analyze_bayes(pool, d, cfg, false);
      CHECK(*res.posterior_prob >= prev - 1e-12);
      prev = *res.posterior_prob;
    }
  }
  SUBCASE("success decision ignores component order") {
    BetaMixture prior;
    prior.weights = {0.3, 0.7};
    prior.components = {BetaParams{2, 8}, BetaParams{10, 30}};
    BetaMixture flipped;
    flipped.weights = {0.7, 0.3};
    flipped.components = {BetaParams{10, 30}, BetaParams{2, 8}};
    const BetaParams treat{15, 11};
    const BetaMixture post_a = posterior_update(prior, 1, 6);
    const BetaMixture post_b = posterior_update(flipped, 1, 6);
    CHECK(mixture_superiority(treat, post_a) ==
          doctest::Approx(mixture_superiority(treat, post_b)).epsilon(1e-14));
  }
  SUBCASE("agreeing external data shrinks the vague weight") {
    // Prior centred where the control data lie: the robust component loses
    // weight after updating; conflicting data regain it.
    const BetaMixture map = BetaMixture::single(20, 80);
    const BetaMixture robust = robustify(map, 0.5);
    const BetaMixture agree = posterior_update(robust, 4, 20);
    CHECK(agree.weights[0] < 0.5);
    const BetaMixture conflict = posterior_update(robust, 19, 20);
    CHECK(conflict.weights[0] > 0.5);
  }
}

TEST_CASE("difference interval brackets the posterior mean difference") {
  const BetaMixture t = BetaMixture::single(15, 11);
  BetaMixture c;
  c.weights = {0.4, 0.6};
  c.components = {BetaParams{2, 6}, BetaParams{8, 30}};
  const auto [lo, hi] = mixture_difference_interval(t, c, 0.95);
  double c_mean = 0.4 * (2.0 / 8.0) + 0.6 * (8.0 / 38.0);
  const double diff_mean = 15.0 / 26.0 - c_mean;
  CHECK(lo < diff_mean);
  CHECK(diff_mean < hi);
  CHECK(lo > -1.0);
  CHECK(hi < 1.0);
  // Wider credibility widens the interval.
  const auto [lo99, hi99] = mixture_difference_interval(t, c, 0.99);
  CHECK(lo99 < lo);
  CHECK(hi99 > hi);
}

TEST_CASE("huge agreeing pool approaches the pooled-data analysis") {
  BayesConfig cfg;
  cfg.fit_options = MapFitOptions::coarse();
  cfg.w_r = 0.1;
  // Selected pool with the same rate as the prospective control and a very
  // large size: the robust MAP posterior approaches the pooled conjugate
  // analysis and the vague component loses almost all weight.
  HistoricalPool pool;
  pool.trials = {HistoricalTrial{1, 500, 3000}, HistoricalTrial{2, 500, 3000}};
  ProspectiveData d;
  d.treatment = {14, 24};
  d.control = {1, 6};
  const AnalysisResult res = analyze_bayes(pool, d, cfg, false);
  // Pooled-data oracle: control posterior from all control information.
  const BetaParams treat{15, 11};
  const BetaParams pooled_control{1.0 + 1000.0 + 1.0, 1.0 + 5000.0 + 5.0};
  const double pooled_prob = beta_superiority(treat, pooled_control);
  CHECK(std::fabs(*res.posterior_prob - pooled_prob) < 0.02);
  // Vague-component weight after updating is tiny.
  const BetaMixture prior = control_prior_for_pool(
      pool, cfg.w_r, cfg.hyper, cfg.fit_options, nullptr);
  const BetaMixture post = posterior_update(prior, 1, 6);
  CHECK(post.weights[0] < cfg.w_r);
}
