#pragma once

#include <array>
#include <iomanip>
#include <ostream>
#include <span>
#include <vector>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"

namespace mvdam {

struct ClassScores {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsReport {
  std::array<ClassScores, 3> per_class{};
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][predicted]
  std::size_t n = 0;
};

// Per-class P/R/F1 (0/0 := 0) and their unweighted means.
inline MetricsReport metrics_from_confusion(const std::array<std::array<std::size_t, 3>, 3>& cm) {
  MetricsReport r;
  r.confusion = cm;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t tp = cm[k][k], gold = 0, pred = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      gold += cm[k][j];
      pred += cm[j][k];
    }
    r.n += gold;
    correct += tp;
    ClassScores& c = r.per_class[k];
    c.precision = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    c.recall = gold ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    r.macro_precision += c.precision / 3.0;
    r.macro_recall += c.recall / 3.0;
    r.macro_f1 += c.f1 / 3.0;
  }
  r.accuracy = r.n ? static_cast<double>(correct) / static_cast<double>(r.n) : 0.0;
  return r;
}

inline MetricsReport eval_metrics(std::span<const Ideology> predicted, std::span<const Ideology> gold) {
  if (predicted.size() != gold.size()) throw ValidationError("eval_metrics: length mismatch");
  if (predicted.empty()) throw ValidationError("eval_metrics: no predictions");
  std::array<std::array<std::size_t, 3>, 3> cm{};
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm[index_of(gold[i])][index_of(predicted[i])];
  return metrics_from_confusion(cm);
}

// CSV: class,precision,recall,f1 rows followed by the macro row.
inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  os << "class,precision,recall,f1\n" << std::setprecision(17);
  for (std::size_t k = 0; k < 3; ++k)
    os << to_string(ideology_from_index(k)) << ',' << r.per_class[k].precision << ','
       << r.per_class[k].recall << ',' << r.per_class[k].f1 << '\n';
  os << "macro," << r.macro_precision << ',' << r.macro_recall << ',' << r.macro_f1 << '\n';
}

inline void write_confusion_csv(std::ostream& os, const MetricsReport& r) {
  os << "gold\\predicted,left,center,right\n";
  for (std::size_t k = 0; k < 3; ++k)
    os << to_string(ideology_from_index(k)) << ',' << r.confusion[k][0] << ',' << r.confusion[k][1] << ','
       << r.confusion[k][2] << '\n';
}

}  // namespace mvdam
