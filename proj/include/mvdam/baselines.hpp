#pragma once

// Non-neural baselines: label-distribution draws and a bag-of-words
// logistic regression over title tokens.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"
#include "mvdam/metrics.hpp"
#include "mvdam/rng.hpp"

namespace mvdam {

inline std::vector<Ideology> chance_baseline(const std::array<double, 3>& dist, std::size_t n, Rng& rng) {
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("chance_baseline: invalid distribution");
    total += p;
  }
  if (!(total > 0.0)) throw ValidationError("chance_baseline: distribution sums to zero");
  std::vector<Ideology> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ideology_from_index(rng.categorical(dist)));
  return out;
}

inline std::array<double, 3> label_distribution(const Corpus& c) {
  std::array<double, 3> d{};
  double n = 0.0;
  for (const Article& a : c)
    if (a.label) {
      d[index_of(*a.label)] += 1.0;
      n += 1.0;
    }
  if (n == 0.0) throw ValidationError("label_distribution: corpus has no labels");
  for (double& v : d) v /= n;
  return d;
}

struct LrOptions {
  double l2 = 1e-4;
  double tol = 1e-6;  // relative objective change
  double step = 1.0;
  std::size_t max_iter = 5000;
};

// Multinomial logistic regression on sparse title counts.
class BowLogisticRegression {
 public:
  void fit(const Corpus& train, const LrOptions& opt = {}) {
    index_.clear();
    for (const Article& a : train)
      for (const auto& t : a.title) index_.emplace(t, index_.size());
    if (index_.empty()) throw ValidationError("lr_baseline: empty vocabulary");
    std::vector<Row> rows;
    std::vector<std::size_t> y;
    for (const Article& a : train) {
      if (!a.label) throw ValidationError("lr_baseline: unlabeled training article " + a.id);
      rows.push_back(featurize(a.title));
      y.push_back(index_of(*a.label));
    }
    const std::size_t F = index_.size();
    w_.assign(3 * (F + 1), 0.0);  // per class: F weights then bias
    std::vector<double> grad(w_.size());
    double step = opt.step;
    double j = objective(rows, y, opt.l2, &grad);
    iterations_ = 0;
    for (; iterations_ < opt.max_iter; ++iterations_) {
      std::vector<double> prev = w_;
      double jn = 0.0;
      for (;;) {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = prev[i] - step * grad[i];
        jn = objective(rows, y, opt.l2, nullptr);
        if (jn <= j || step < 1e-12) break;
        step *= 0.5;
      }
      const double change = std::abs(j - jn);
      j = objective(rows, y, opt.l2, &grad);
      if (change <= opt.tol * std::max(1.0, std::abs(j))) break;
    }
    objective_ = j;
  }

  std::array<double, 3> probs(const Tokens& title) const {
    return softmax3(scores(featurize(title)));
  }

  Ideology predict(const Tokens& title) const {
    auto s = scores(featurize(title));
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (s[k] > s[best]) best = k;
    return ideology_from_index(best);
  }

  double objective() const { return objective_; }
  std::size_t iterations() const { return iterations_; }

 private:
  using Row = std::vector<std::pair<std::size_t, double>>;

  Row featurize(const Tokens& title) const {
    std::map<std::size_t, double> c;
    for (const auto& t : title)
      if (auto it = index_.find(t); it != index_.end()) c[it->second] += 1.0;
    return Row(c.begin(), c.end());
  }

  std::array<double, 3> scores(const Row& r) const {
    const std::size_t F = index_.size();
    std::array<double, 3> s{};
    for (std::size_t k = 0; k < 3; ++k) {
      const double* wk = &w_[k * (F + 1)];
      s[k] = wk[F];
      for (const auto& [f, v] : r) s[k] += wk[f] * v;
    }
    return s;
  }

  static std::array<double, 3> softmax3(std::array<double, 3> s) {
    const double m = std::max({s[0], s[1], s[2]});
    double z = 0.0;
    for (double& v : s) z += (v = std::exp(v - m));
    for (double& v : s) v /= z;
    return s;
  }

  // Mean NLL + l2/2 |W|^2 (biases unpenalised).
  double objective(const std::vector<Row>& rows, const std::vector<std::size_t>& y, double l2,
                   std::vector<double>* grad) const {
    const std::size_t F = index_.size();
    const double inv = 1.0 / static_cast<double>(rows.size());
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    double j = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto p = softmax3(scores(rows[i]));
      j -= std::log(std::max(p[y[i]], 1e-300)) * inv;
      if (!grad) continue;
      for (std::size_t k = 0; k < 3; ++k) {
        const double g = (p[k] - (k == y[i] ? 1.0 : 0.0)) * inv;
        double* gk = &(*grad)[k * (F + 1)];
        gk[F] += g;
        for (const auto& [f, v] : rows[i]) gk[f] += g * v;
      }
    }
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t f = 0; f < F; ++f) {
        const double w = w_[k * (F + 1) + f];
        j += 0.5 * l2 * w * w;
        if (grad) (*grad)[k * (F + 1) + f] += l2 * w;
      }
    return j;
  }

  std::map<std::string, std::size_t> index_;
  std::vector<double> w_;
  double objective_ = 0.0;
  std::size_t iterations_ = 0;
};

struct LrResult {
  MetricsReport metrics;
  std::vector<Ideology> predicted;
};

inline LrResult lr_baseline(const Corpus& train, const Corpus& test, const LrOptions& opt = {}) {
  BowLogisticRegression lr;
  lr.fit(train, opt);
  LrResult r;
  std::vector<Ideology> gold;
  for (const Article& a : test) {
    if (!a.label) throw ValidationError("lr_baseline: unlabeled test article " + a.id);
    r.predicted.push_back(lr.predict(a.title));
    gold.push_back(*a.label);
  }
  r.metrics = eval_metrics(r.predicted, gold);
  return r;
}

}  // namespace mvdam
