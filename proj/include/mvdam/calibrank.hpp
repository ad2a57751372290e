#pragma once

// Isotonic calibration (one-vs-rest, pool adjacent violators), expected
// calibration error, and per-source ideology proportions.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"
#include "mvdam/model.hpp"

namespace mvdam {

// Stepwise-constant non-decreasing map. x holds the distinct training scores
// in ascending order, y the fitted value at each.
struct IsotonicModel {
  std::vector<double> x;
  std::vector<double> y;
  bool passthrough = false;

  static IsotonicModel identity() { return {{}, {}, true}; }

  // Value of the last breakpoint <= s; clamped outside [x.front(), x.back()].
  // The identity model passes scores through unchanged.
  double operator()(double s) const {
    if (passthrough) return s;
    if (x.empty()) throw ValidationError("IsotonicModel: not fitted");
    if (s <= x.front()) return y.front();
    if (s >= x.back()) return y.back();
    auto it = std::upper_bound(x.begin(), x.end(), s);
    return y[static_cast<std::size_t>(it - x.begin()) - 1];
  }
};

// Weighted PAV over values already ordered by score. Returns the fitted
// value per input position.
inline std::vector<double> pav(std::span<const double> values, std::span<const double> weights) {
  struct Block {
    double sum, weight;
    std::size_t len;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> st;
  for (std::size_t i = 0; i < values.size(); ++i) {
    st.push_back({values[i] * weights[i], weights[i], 1});
    while (st.size() > 1 && st[st.size() - 2].mean() > st.back().mean()) {
      Block b = st.back();
      st.pop_back();
      st.back().sum += b.sum;
      st.back().weight += b.weight;
      st.back().len += b.len;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : st) out.insert(out.end(), b.len, b.mean());
  return out;
}

inline IsotonicModel fit_isotonic(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size()) throw ValidationError("fit_isotonic: length mismatch");
  if (scores.size() < 2) throw ValidationError("fit_isotonic: need at least two points");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError("fit_isotonic: non-finite score");
  for (double t : targets)
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("fit_isotonic: targets must lie in [0,1]");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Pool ties first: one weighted point per distinct score.
  IsotonicModel m;
  std::vector<double> means, weights;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) sum += targets[order[j++]];
    m.x.push_back(scores[order[i]]);
    means.push_back(sum / static_cast<double>(j - i));
    weights.push_back(static_cast<double>(j - i));
    i = j;
  }
  m.y = pav(means, weights);
  return m;
}

using Calibrator = std::array<IsotonicModel, 3>;

inline Calibrator identity_calibrator() {
  return {IsotonicModel::identity(), IsotonicModel::identity(), IsotonicModel::identity()};
}

inline constexpr double kCalibrationFloor = 1e-9;

inline std::array<double, 3> calibrate(const Calibrator& models, const std::array<double, 3>& raw) {
  std::array<double, 3> out{};
  double z = 0.0;
  for (std::size_t k = 0; k < 3; ++k) z += (out[k] = std::max(models[k](raw[k]), kCalibrationFloor));
  for (double& v : out) v /= z;
  return out;
}

// One-vs-rest fit on labelled predictions (normally the validation split).
inline Calibrator fit_calibrator(const std::vector<PredictionRecord>& preds) {
  Calibrator c;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> s, t;
    for (const auto& r : preds) {
      if (!r.gold) throw ValidationError("fit_calibrator: prediction " + r.article_id + " has no gold label");
      s.push_back(r.probs[k]);
      t.push_back(index_of(*r.gold) == k ? 1.0 : 0.0);
    }
    c[k] = fit_isotonic(s, t);
  }
  return c;
}

inline void apply_calibrator(const Calibrator& c, std::vector<PredictionRecord>& preds) {
  for (auto& r : preds) r.calibrated = calibrate(c, r.probs);
}

// Serialised as {"left": {"x": [...], "y": [...]}, ...}.
inline nlohmann::json calibrator_to_json(const Calibrator& c) {
  nlohmann::json j;
  for (std::size_t k = 0; k < 3; ++k)
    j[to_string(ideology_from_index(k))] = {{"x", c[k].x}, {"y", c[k].y}, {"identity", c[k].passthrough}};
  return j;
}

inline Calibrator calibrator_from_json(const nlohmann::json& j) {
  Calibrator c;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string name = to_string(ideology_from_index(k));
    if (!j.contains(name)) throw ValidationError("calibrator: missing class " + name);
    c[k].x = j.at(name).at("x").get<std::vector<double>>();
    c[k].y = j.at(name).at("y").get<std::vector<double>>();
    c[k].passthrough = j.at(name).value("identity", false);
    if (c[k].x.size() != c[k].y.size() || (c[k].x.empty() && !c[k].passthrough))
      throw ValidationError("calibrator: malformed model for " + name);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Top-label reliability and ECE.

struct ReliabilityBin {
  double low = 0.0, high = 0.0;
  double mean_score = 0.0, empirical_freq = 0.0;
  std::size_t count = 0;
};

// Bins by the top-label confidence; bin i covers [i/B, (i+1)/B), the last
// bin is closed.
inline std::vector<ReliabilityBin> reliability(std::span<const std::array<double, 3>> probs,
                                               std::span<const Ideology> gold, std::size_t bins = 10) {
  if (probs.size() != gold.size()) throw ValidationError("reliability: length mismatch");
  if (bins == 0) throw ValidationError("reliability: bins must be positive");
  std::vector<ReliabilityBin> out(bins);
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].low = static_cast<double>(b) / static_cast<double>(bins);
    out[b].high = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Ideology top = argmax_class(probs[i]);
    const double c = probs[i][index_of(top)];
    const std::size_t b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    conf_sum[b] += c;
    hit_sum[b] += top == gold[i] ? 1.0 : 0.0;
    ++out[b].count;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (!out[b].count) continue;
    out[b].mean_score = conf_sum[b] / static_cast<double>(out[b].count);
    out[b].empirical_freq = hit_sum[b] / static_cast<double>(out[b].count);
  }
  return out;
}

inline double expected_calibration_error(const std::vector<ReliabilityBin>& bins) {
  std::size_t n = 0;
  double e = 0.0;
  for (const auto& b : bins) {
    n += b.count;
    e += static_cast<double>(b.count) * std::abs(b.mean_score - b.empirical_freq);
  }
  return n ? e / static_cast<double>(n) : 0.0;
}

inline double expected_calibration_error(std::span<const std::array<double, 3>> probs,
                                         std::span<const Ideology> gold, std::size_t bins = 10) {
  return expected_calibration_error(reliability(probs, gold, bins));
}

inline void write_reliability_csv(std::ostream& os, const std::vector<ReliabilityBin>& bins) {
  os << "bin_low,bin_high,mean_score,empirical_freq,count\n" << std::setprecision(17);
  for (const auto& b : bins)
    os << b.low << ',' << b.high << ',' << b.mean_score << ',' << b.empirical_freq << ',' << b.count << '\n';
}

// ---------------------------------------------------------------------------
// Source proportions and ranking.

struct SourceProportions {
  std::map<std::string, std::array<double, 3>> mean;
  std::map<std::string, std::size_t> count;
};

inline SourceProportions source_proportions(const std::vector<PredictionRecord>& preds) {
  if (preds.empty()) throw ValidationError("source_proportions: no predictions");
  SourceProportions sp;
  for (const auto& r : preds) {
    if (r.source.empty()) throw ValidationError("source_proportions: prediction " + r.article_id + " has no source");
    if (!r.calibrated) throw ValidationError("source_proportions: prediction " + r.article_id + " is uncalibrated");
    auto& m = sp.mean[r.source];
    for (std::size_t k = 0; k < 3; ++k) m[k] += (*r.calibrated)[k];
    ++sp.count[r.source];
  }
  for (auto& [s, m] : sp.mean)
    for (double& v : m) v /= static_cast<double>(sp.count[s]);
  return sp;
}

struct RankedSource {
  std::string source;
  double proportion = 0.0;
  std::size_t article_count = 0;
};

struct Ranking {
  Ideology ideology = Ideology::kLeft;
  std::vector<RankedSource> entries;
  bool truncated_request = false;  // k exceeded the number of sources
};

inline Ranking rank_sources(const SourceProportions& sp, Ideology ideology, std::size_t k) {
  if (k < 1) throw ValidationError("rank_sources: k must be >= 1");
  Ranking r;
  r.ideology = ideology;
  for (const auto& [s, m] : sp.mean) r.entries.push_back({s, m[index_of(ideology)], sp.count.at(s)});
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedSource& a, const RankedSource& b) {
    if (a.proportion != b.proportion) return a.proportion > b.proportion;
    return a.source < b.source;
  });
  if (k > r.entries.size()) r.truncated_request = true;
  else r.entries.resize(k);
  return r;
}

inline void write_ranking_csv(std::ostream& os, const Ranking& r) {
  os << "rank,source,proportion,article_count\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.entries.size(); ++i)
    os << i + 1 << ',' << r.entries[i].source << ',' << r.entries[i].proportion << ','
       << r.entries[i].article_count << '\n';
}

// Side-by-side table, one column per ideology.
inline void write_ranking_table(std::ostream& os, const std::array<Ranking, 3>& cols) {
  std::size_t width = 12, rows = 0;
  for (const auto& c : cols) {
    rows = std::max(rows, c.entries.size());
    for (const auto& e : c.entries) width = std::max(width, e.source.size() + 2);
  }
  os << std::left << std::setw(6) << "rank";
  for (const auto& c : cols) os << std::setw(static_cast<int>(width)) << to_string(c.ideology);
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << std::setw(6) << i + 1;
    for (const auto& c : cols) os << std::setw(static_cast<int>(width)) << (i < c.entries.size() ? c.entries[i].source : "");
    os << '\n';
  }
  os << std::right;
}

}  // namespace mvdam
