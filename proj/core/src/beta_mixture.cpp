#include "hybridct/beta_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "hybridct/errors.hpp"
#include "hybridct/quadrature.hpp"

namespace hybridct {

void HistoricalPool::validate() const {
  int last_index = 0;
  for (const auto& t : trials) {
    if (t.size < 1 || t.responders < 0 || t.responders > t.size) {
      throw std::invalid_argument("HistoricalTrial: requires 0 <= responders <= size");
    }
    if (t.index <= last_index) {
      throw std::invalid_argument("HistoricalPool: indices must be strictly increasing");
    }
    last_index = t.index;
  }
}

int HistoricalPool::total_responders() const {
  int s = 0;
  for (const auto& t : trials) s += t.responders;
  return s;
}

int HistoricalPool::total_size() const {
  int s = 0;
  for (const auto& t : trials) s += t.size;
  return s;
}

void BetaMixture::validate() const {
  if (components.empty() || weights.size() != components.size()) {
    throw std::invalid_argument("BetaMixture: needs matching non-empty weights/components");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("BetaMixture: negative weight");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("BetaMixture: weights must sum to 1");
  }
  for (const auto& c : components) c.validate();
}

double BetaMixture::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    m += weights[i] * components[i].mean();
  }
  return m;
}

double BetaMixture::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double mi = components[i].mean();
    v += weights[i] * (components[i].variance() + (mi - m) * (mi - m));
  }
  return v;
}

double BetaMixture::pdf(double x) const {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double lx = std::log(x), l1x = std::log1p(-x);
  double p = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    p += weights[i] * std::exp((c.a - 1.0) * lx + (c.b - 1.0) * l1x -
                               log_beta_fn(c.a, c.b));
  }
  return p;
}

void HierarchicalHyperPrior::validate() const {
  if (!(mu_sd > 0.0) || !(tau_scale > 0.0)) {
    throw std::invalid_argument("HierarchicalHyperPrior: scales must be positive");
  }
}

BetaMixture robustify(const BetaMixture& map, double w_r) {
  map.validate();
  if (!(w_r > 0.0 && w_r < 1.0)) {
    throw std::invalid_argument("robustify: w_r must lie in (0,1)");
  }
  BetaMixture out;
  out.weights.reserve(map.size() + 1);
  out.components.reserve(map.size() + 1);
  out.weights.push_back(w_r);
  out.components.push_back(BetaParams{1.0, 1.0});
  for (std::size_t i = 0; i < map.size(); ++i) {
    out.weights.push_back((1.0 - w_r) * map.weights[i]);
    out.components.push_back(map.components[i]);
  }
  return out;
}

BetaMixture robust_single(const HistoricalTrial& trial, double w_r) {
  if (trial.size < 1 || trial.responders < 0 || trial.responders > trial.size) {
    throw std::invalid_argument("robust_single: invalid trial");
  }
  if (!(w_r > 0.0 && w_r < 1.0)) {
    throw std::invalid_argument("robust_single: w_r must lie in (0,1)");
  }
  BetaMixture out;
  out.weights = {w_r, 1.0 - w_r};
  out.components = {BetaParams{1.0, 1.0},
                    BetaParams{1.0 + trial.responders,
                               1.0 + trial.size - trial.responders}};
  return out;
}

BetaMixture posterior_update(const BetaMixture& prior, int y, int n) {
  prior.validate();
  if (y < 0 || n < 0 || y > n) {
    throw std::invalid_argument("posterior_update: requires 0 <= y <= n");
  }
  BetaMixture post;
  const std::size_t k = prior.size();
  post.components.reserve(k);
  std::vector<double> logw(k);
  double max_logw = -1e308;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = prior.components[i];
    const BetaParams updated{c.a + y, c.b + n - y};
    post.components.push_back(updated);
    logw[i] = std::log(prior.weights[i]) + log_beta_fn(updated.a, updated.b) -
              log_beta_fn(c.a, c.b);
    max_logw = std::max(max_logw, logw[i]);
  }
  double norm = 0.0;
  post.weights.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    post.weights[i] = std::exp(logw[i] - max_logw);
    norm += post.weights[i];
  }
  for (double& w : post.weights) w /= norm;
  return post;
}

double ess_elir(const BetaMixture& prior) {
  prior.validate();
  const std::size_t k = prior.size();
  std::vector<double> log_norm(k);
  for (std::size_t i = 0; i < k; ++i) {
    log_norm[i] = log_beta_fn(prior.components[i].a, prior.components[i].b);
  }
  auto integrand = [&](double x) {
    const double lx = std::log(x), l1x = std::log1p(-x);
    double p = 0.0, p1 = 0.0, p2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& c = prior.components[i];
      const double f =
          prior.weights[i] *
          std::exp((c.a - 1.0) * lx + (c.b - 1.0) * l1x - log_norm[i]);
      const double g = (c.a - 1.0) / x - (c.b - 1.0) / (1.0 - x);
      const double gp =
          -(c.a - 1.0) / (x * x) - (c.b - 1.0) / ((1.0 - x) * (1.0 - x));
      p += f;
      p1 += f * g;
      p2 += f * (g * g + gp);
    }
    if (p <= 0.0) return 0.0;
    // E_p[i_p(pi) pi (1-pi)] with i_p = (p'^2 - p'' p) / p^2.
    return (p1 * p1 - p2 * p) / p * x * (1.0 - x);
  };
  constexpr double eps = 1e-8;
  return adaptive_quad(integrand, eps, 1.0 - eps, 1e-6);
}

double mixture_superiority(const BetaParams& x, const BetaMixture& y) {
  y.validate();
  double p = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    p += y.weights[i] * beta_superiority(x, y.components[i]);
  }
  return p;
}

struct MapFitCache::Impl {
  std::mutex mutex;
  std::map<std::string, BetaMixture> entries;
};

std::shared_ptr<MapFitCache::Impl> MapFitCache::make_impl() {
  return std::make_shared<Impl>();
}

BetaMixture MapFitCache::fit(const HistoricalPool& pool,
                             const HierarchicalHyperPrior& hyper,
                             const MapFitOptions& options) {
  std::ostringstream key;
  for (const auto& t : pool.trials) key << t.responders << '/' << t.size << ';';
  key << '|' << hyper.mu_mean << ',' << hyper.mu_sd << ',' << hyper.tau_scale
      << '|' << options.mu_cells << 'x' << options.tau_cells << ','
      << options.refine << ',' << options.zoom << ',' << options.max_components;
  const std::string k = key.str();
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto it = impl_->entries.find(k);
    if (it != impl_->entries.end()) return it->second;
  }
  BetaMixture fitted = fit_map_prior(pool, hyper, options);
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->entries.emplace(k, std::move(fitted)).first->second;
}

BetaMixture control_prior_for_pool(const HistoricalPool& selected, double w_r,
                                   const HierarchicalHyperPrior& hyper,
                                   const MapFitOptions& options,
                                   MapFitCache* cache) {
  if (selected.empty()) return BetaMixture::vague();
  if (selected.size() == 1) return robust_single(selected.trials[0], w_r);
  const BetaMixture map = cache ? cache->fit(selected, hyper, options)
                                : fit_map_prior(selected, hyper, options);
  return robustify(map, w_r);
}

HistoricalPool load_pool_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open historical CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty historical CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "study,responders,size") {
    throw ConfigError("historical CSV must start with header 'study,responders,size': " + path);
  }
  HistoricalPool pool;
  int index = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string study, responders, size;
    if (!std::getline(ss, study, ',') || !std::getline(ss, responders, ',') ||
        !std::getline(ss, size)) {
      throw ConfigError("historical CSV line " + std::to_string(line_no) +
                        ": expected 3 comma-separated fields");
    }
    HistoricalTrial t;
    t.index = ++index;
    try {
      t.responders = std::stoi(responders);
      t.size = std::stoi(size);
    } catch (const std::exception&) {
      throw ConfigError("historical CSV line " + std::to_string(line_no) +
                        ": non-integer responders/size");
    }
    pool.trials.push_back(t);
  }
  pool.validate();
  return pool;
}

}  // namespace hybridct
