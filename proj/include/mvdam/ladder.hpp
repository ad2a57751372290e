#pragma once

// Baseline-to-full comparison: every preset trained and scored on the same
// splits for each seed.

#include <algorithm>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "mvdam/baselines.hpp"
#include "mvdam/calibrank.hpp"
#include "mvdam/report.hpp"
#include "mvdam/train.hpp"

namespace mvdam {

enum class PresetKind { kChance, kLr, kNeural };

struct Preset {
  std::string name;
  PresetKind kind = PresetKind::kNeural;
  ViewMask views;
  bool direct = false;
  AttentionKind attention = AttentionKind::kLinear;
  bool stochastic_sentences = true;

  TrainingConfig apply(TrainingConfig cfg) const {
    cfg.views = views;
    cfg.direct = direct;
    cfg.attention = attention;
    cfg.stochastic_sentences = stochastic_sentences;
    return cfg;
  }
};

inline std::vector<Preset> ladder_presets() {
  const ViewMask t{true, false, false}, n{false, true, false}, c{false, false, true};
  return {
      {"Chance", PresetKind::kChance, {}, false, AttentionKind::kLinear, true},
      {"LR", PresetKind::kLr, t, false, AttentionKind::kLinear, true},
      {"CNN", PresetKind::kNeural, t, true, AttentionKind::kLinear, false},
      {"FNN", PresetKind::kNeural, n, true, AttentionKind::kLinear, false},
      {"HDAM", PresetKind::kNeural, c, true, AttentionKind::kTanhContext, false},
      {"MVDAM(T+N)", PresetKind::kNeural, {true, true, false}, false, AttentionKind::kLinear, true},
      {"MVDAM(T+C)", PresetKind::kNeural, {true, false, true}, false, AttentionKind::kLinear, true},
      {"MVDAM(full)", PresetKind::kNeural, {true, true, true}, false, AttentionKind::kLinear, true},
  };
}

inline const Preset& find_preset(const std::string& name) {
  static const std::vector<Preset> all = ladder_presets();
  for (const auto& p : all)
    if (p.name == name) return p;
  throw ValidationError("unknown preset " + name);
}

struct SeedRun {
  std::string preset;
  std::uint64_t seed = 0;
  MetricsReport test;
  std::vector<PredictionRecord> valid_predictions;  // neural presets only
  std::vector<PredictionRecord> test_predictions;
  std::vector<EpochLog> log;
  RunManifest manifest;
};

struct LadderReport {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> presets;  // table order
  std::vector<SeedRun> runs;

  std::vector<const SeedRun*> runs_of(const std::string& preset) const {
    std::vector<const SeedRun*> out;
    for (const auto& r : runs)
      if (r.preset == preset) out.push_back(&r);
    return out;
  }

  std::vector<double> scores(const std::string& preset, double MetricsReport::*field = &MetricsReport::macro_f1) const {
    std::vector<double> s;
    for (const SeedRun* r : runs_of(preset)) s.push_back(r->test.*field);
    return s;
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct LadderOptions {
  std::array<double, 3> fractions{0.75, 0.125, 0.125};
  std::vector<std::string> presets;  // empty = all
  std::function<void(const SeedRun&, double seconds)> on_run;
};

// Runs one preset on fixed splits. `seed` drives initialisation, batching and
// sampling; the splits come from the caller.
inline SeedRun run_preset(const Preset& preset, const Splits& s, const TrainingConfig& base, std::uint64_t seed) {
  Stopwatch clock;
  SeedRun run;
  run.preset = preset.name;
  run.seed = seed;
  std::vector<Ideology> gold;
  for (const Article& a : s.test) {
    if (!a.label) throw ValidationError("ladder: unlabeled test article " + a.id);
    gold.push_back(*a.label);
  }
  TrainingConfig cfg = preset.apply(base);
  cfg.seed = seed;
  switch (preset.kind) {
    case PresetKind::kChance: {
      Rng rng = Rng(seed).fork(505);
      run.test = eval_metrics(chance_baseline(label_distribution(s.train), gold.size(), rng), gold);
      break;
    }
    case PresetKind::kLr:
      run.test = lr_baseline(s.train, s.test).metrics;
      break;
    case PresetKind::kNeural: {
      FitResult fit_res = fit(s.train, s.valid, cfg);
      const ModelConfig mcfg = fit_res.model.model_config();
      run.valid_predictions = predict_all(fit_res.model.encode(s.valid), fit_res.model.params, mcfg);
      run.test_predictions = predict_all(fit_res.model.encode(s.test), fit_res.model.params, mcfg);
      run.test = evaluate(run.test_predictions);
      run.log = std::move(fit_res.training.log);
      break;
    }
  }
  run.manifest.command = "ladder:" + preset.name;
  run.manifest.config = cfg.str();
  run.manifest.seeds = {seed};
  run.manifest.split_digest = corpus_digest(s.train) + ":" + corpus_digest(s.valid) + ":" + corpus_digest(s.test);
  run.manifest.metrics = run.test;
  run.manifest.wall_clock_seconds = clock.seconds();
  return run;
}

inline LadderReport run_ladder(const Corpus& corpus, const std::vector<std::uint64_t>& seeds,
                               const TrainingConfig& base, const LadderOptions& opt = {}) {
  if (seeds.empty()) throw ValidationError("ladder: no seeds");
  LadderReport rep;
  rep.seeds = seeds;
  std::vector<Preset> presets;
  for (const auto& p : ladder_presets())
    if (opt.presets.empty() || std::find(opt.presets.begin(), opt.presets.end(), p.name) != opt.presets.end())
      presets.push_back(p);
  if (presets.empty()) throw ValidationError("ladder: no presets selected");
  for (const auto& p : presets) rep.presets.push_back(p.name);
  const std::string digest = corpus_digest(corpus);
  for (std::uint64_t seed : seeds) {
    const Splits s = split(corpus, opt.fractions, seed);
    for (const auto& p : presets) {
      Stopwatch clock;
      SeedRun run = run_preset(p, s, base, seed);
      run.manifest.corpus_digest = digest;
      if (opt.on_run) opt.on_run(run, clock.seconds());
      rep.runs.push_back(std::move(run));
    }
  }
  return rep;
}

// Median over seeds of macro P/R/F1 per preset.
inline void write_ladder_table(std::ostream& os, const LadderReport& rep) {
  os << std::left << std::setw(14) << "preset" << std::right << std::setw(10) << "precision" << std::setw(10)
     << "recall" << std::setw(10) << "f1" << '\n'
     << std::fixed << std::setprecision(2);
  for (const auto& name : rep.presets) {
    os << std::left << std::setw(14) << name << std::right << std::setw(10)
       << 100.0 * median(rep.scores(name, &MetricsReport::macro_precision)) << std::setw(10)
       << 100.0 * median(rep.scores(name, &MetricsReport::macro_recall)) << std::setw(10)
       << 100.0 * median(rep.scores(name)) << '\n';
  }
  os.unsetf(std::ios::floatfield);
  os << std::setprecision(6);
}

// One row per (preset, seed).
inline void write_ladder_raw_csv(std::ostream& os, const LadderReport& rep) {
  os << "preset,seed,macro_precision,macro_recall,macro_f1,accuracy\n" << std::setprecision(17);
  for (const auto& r : rep.runs)
    os << r.preset << ',' << r.seed << ',' << r.test.macro_precision << ',' << r.test.macro_recall << ','
       << r.test.macro_f1 << ',' << r.test.accuracy << '\n';
}

}  // namespace mvdam
