// mvdam: command-line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "mvdam/mvdam.hpp"

using namespace mvdam;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile = "desk";
  std::string views;
  std::vector<std::string> overrides;  // key=value

  TrainingConfig resolve() const {
    TrainingConfig c = TrainingConfig::for_profile(profile);
    if (!config.empty()) c = TrainingConfig::load(config, c);
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) c.seed = *seed;
    if (!views.empty()) c.views = ViewMask::parse(views);
    c.validate();
    return c;
  }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  return os;
}

template <typename F>
void write_file(const std::string& path, F&& body) {
  std::ofstream os = open_out(path);
  body(os);
}

void print_metrics(std::ostream& os, const MetricsReport& r) {
  os << std::left << std::setw(8) << "class" << std::right << std::setw(11) << "precision" << std::setw(9)
     << "recall" << std::setw(9) << "f1" << '\n'
     << std::fixed << std::setprecision(4);
  for (std::size_t k = 0; k < 3; ++k)
    os << std::left << std::setw(8) << to_string(ideology_from_index(k)) << std::right << std::setw(11)
       << r.per_class[k].precision << std::setw(9) << r.per_class[k].recall << std::setw(9) << r.per_class[k].f1
       << '\n';
  os << std::left << std::setw(8) << "macro" << std::right << std::setw(11) << r.macro_precision << std::setw(9)
     << r.macro_recall << std::setw(9) << r.macro_f1 << '\n'
     << "accuracy " << r.accuracy << "  n " << r.n << '\n';
  os.unsetf(std::ios::floatfield);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto dash = item.find('-');
    try {
      if (dash != std::string::npos) {
        const std::uint64_t lo = std::stoull(item.substr(0, dash)), hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw ValidationError("bad seed range " + item);
        for (std::uint64_t x = lo; x <= hi; ++x) out.push_back(x);
      } else if (!item.empty()) {
        out.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw ValidationError("bad seed list '" + s + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty seed list");
  return out;
}

std::array<double, 3> parse_fractions(const std::string& s) {
  std::array<double, 3> f{};
  std::stringstream ss(s);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 3) throw ValidationError("--fractions takes three values");
    try {
      f[i++] = std::stod(item);
    } catch (const std::logic_error&) {
      throw ValidationError("bad fraction '" + item + "'");
    }
  }
  if (i != 3) throw ValidationError("--fractions takes three values");
  return f;
}

std::vector<PredictionRecord> predict_corpus(const ModelBundle& m, const Corpus& c) {
  return predict_all(m.encode(c), m.params, m.model_config());
}

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g, std::size_t articles, std::size_t per_block, double title, double content,
              double link, double p_in, bool no_boilerplate, const std::string& out, const std::string& sources_out) {
  SynthSpec spec;
  spec.num_articles = articles;
  spec.sources_per_block = per_block;
  spec.title_signal = title;
  spec.content_signal = content;
  spec.link_signal = link;
  spec.p_in = p_in;
  spec.boilerplate = !no_boilerplate;
  spec.seed = g.seed_or(spec.seed);
  Corpus c = synth_corpus(spec);
  save_corpus(out, c);
  if (!sources_out.empty()) {
    SynthSources s = synth_sources(spec);
    write_file(sources_out, [&s](std::ostream& os) {
      os << "source,block\n";
      for (std::size_t i = 0; i < s.names.size(); ++i) os << s.names[i] << ',' << to_string(s.block[i]) << '\n';
    });
  }
  std::cout << "wrote " << c.size() << " articles from " << 3 * per_block << " sources to " << out << '\n';
  return 0;
}

int cmd_ingest(const Globals& g, const std::string& in, bool raw, bool no_clean, const std::string& out,
               const std::string& split_dir, const std::string& fractions) {
  Corpus c = load_corpus(in, raw);
  std::size_t links_before = 0, lines_before = 0, links_after = 0, lines_after = 0;
  for (const Article& a : c) {
    links_before += a.links.size();
    lines_before += a.sentences.size();
  }
  if (!no_clean) c = clean_corpus(c);
  for (const Article& a : c) {
    links_after += a.links.size();
    lines_after += a.sentences.size();
  }
  save_corpus(out, c);
  std::array<std::size_t, 4> labels{};
  for (const Article& a : c) ++labels[a.label ? index_of(*a.label) : 3];
  std::cout << "articles   " << c.size() << "\nleft       " << labels[0] << "\ncenter     " << labels[1]
            << "\nright      " << labels[2] << "\nunlabeled  " << labels[3] << "\nsentences  " << lines_before
            << " -> " << lines_after << "\nlinks      " << links_before << " -> " << links_after << '\n';
  if (!split_dir.empty()) {
    Splits s = split(c, parse_fractions(fractions), g.seed_or(1));
    fs::create_directories(split_dir);
    save_corpus(split_dir + "/train.jsonl", s.train);
    save_corpus(split_dir + "/valid.jsonl", s.valid);
    save_corpus(split_dir + "/test.jsonl", s.test);
    std::cout << "splits     " << s.train.size() << '/' << s.valid.size() << '/' << s.test.size() << " -> "
              << split_dir << '\n';
  }
  return 0;
}

int cmd_embed_graph(const Globals& g, const std::string& corpus, const std::string& out) {
  TrainingConfig cfg = g.resolve();
  Corpus c = load_corpus(corpus);
  SourceGraph graph = build_graph(c);
  EmbeddingMatrix f = embed_graph(graph, cfg.walk_options(), cfg.embed_options(), Rng(cfg.seed).fork(303));
  fs::create_directories(out);
  write_file(out + "/graph.tsv", [&graph](std::ostream& os) { graph.save_tsv(os); });
  f.save(out + "/embeddings.ckpt", out + "/nodes.txt");
  std::cout << "graph: " << graph.num_nodes() << " sources, " << graph.num_edges() << " edges; embeddings d="
            << f.dim() << " -> " << out << '\n';
  return 0;
}

int cmd_train(const Globals& g, const std::string& train_path, const std::string& valid_path,
              const std::string& model_dir, const std::string& embeddings) {
  Stopwatch clock;
  TrainingConfig cfg = g.resolve();
  Corpus tr = load_corpus(train_path), va = valid_path.empty() ? Corpus() : load_corpus(valid_path);
  std::optional<EmbeddingMatrix> net;
  if (!embeddings.empty()) net = EmbeddingMatrix::load(embeddings + "/embeddings.ckpt", embeddings + "/nodes.txt");
  FitResult r = fit(tr, va, cfg, net ? &*net : nullptr);
  r.model.save(model_dir);
  write_file(model_dir + "/training_log.csv", [&r](std::ostream& os) { write_training_log(os, r.training.log); });
  RunManifest m;
  m.command = "train";
  m.config = cfg.str();
  m.seeds = {cfg.seed};
  m.corpus_digest = corpus_digest(tr);
  m.split_digest = corpus_digest(tr) + ":" + corpus_digest(va);
  m.checkpoint = model_dir + "/model.ckpt";
  m.wall_clock_seconds = clock.seconds();
  m.save(model_dir + "/manifest.json");
  std::cout << "epoch       loss        nll         kl     val_f1\n" << std::fixed << std::setprecision(4);
  for (const auto& e : r.training.log)
    std::cout << std::setw(5) << e.epoch << std::setw(11) << e.loss << std::setw(11) << e.nll << std::setw(11) << e.kl
              << std::setw(11) << e.val_f1 << '\n';
  std::cout << "best epoch " << r.training.best_epoch << " (val macro-F1 " << r.training.best_val_f1 << ") -> "
            << model_dir << '\n';
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& data, const std::string& metrics_csv,
             const std::string& confusion_csv, const std::string& preds_out) {
  ModelBundle m = ModelBundle::load(model_dir);
  std::vector<PredictionRecord> preds = predict_corpus(m, load_corpus(data));
  MetricsReport r = evaluate(preds);
  if (r.n == 0) throw ValidationError("eval: no labeled articles in " + data);
  print_metrics(std::cout, r);
  if (!metrics_csv.empty()) write_file(metrics_csv, [&r](std::ostream& os) { write_metrics_csv(os, r); });
  if (!confusion_csv.empty()) write_file(confusion_csv, [&r](std::ostream& os) { write_confusion_csv(os, r); });
  if (!preds_out.empty()) save_predictions(preds_out, preds);
  return 0;
}

Calibrator load_calibrator(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open calibrator " + path);
  try {
    return calibrator_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

int cmd_predict(const std::string& model_dir, const std::string& data, const std::string& out,
                const std::string& calibrator) {
  ModelBundle m = ModelBundle::load(model_dir);
  std::vector<PredictionRecord> preds = predict_corpus(m, load_corpus(data));
  if (!calibrator.empty()) apply_calibrator(load_calibrator(calibrator), preds);
  save_predictions(out, preds);
  std::cout << "wrote " << preds.size() << " predictions to " << out << '\n';
  return 0;
}

std::pair<std::vector<std::array<double, 3>>, std::vector<Ideology>> labeled(const std::vector<PredictionRecord>& p,
                                                                             bool calibrated) {
  std::vector<std::array<double, 3>> probs;
  std::vector<Ideology> gold;
  for (const auto& r : p) {
    if (!r.gold) continue;
    probs.push_back(calibrated ? *r.calibrated : r.probs);
    gold.push_back(*r.gold);
  }
  return {probs, gold};
}

int cmd_calibrate(const std::string& fit_path, const std::string& out, const std::string& apply_path,
                  const std::string& apply_out, const std::string& reliability_csv) {
  std::vector<PredictionRecord> fit_preds = load_predictions(fit_path);
  Calibrator c = fit_calibrator(fit_preds);
  write_file(out, [&c](std::ostream& os) { os << calibrator_to_json(c).dump(2) << '\n'; });
  std::cout << "calibrator fitted on " << fit_preds.size() << " predictions -> " << out << '\n';
  if (apply_path.empty()) return 0;
  std::vector<PredictionRecord> preds = load_predictions(apply_path);
  apply_calibrator(c, preds);
  if (!apply_out.empty()) save_predictions(apply_out, preds);
  auto [raw, gold] = labeled(preds, false);
  if (gold.empty()) return 0;
  auto [cal, gold2] = labeled(preds, true);
  std::cout << std::fixed << std::setprecision(4) << "ECE before " << expected_calibration_error(raw, gold)
            << "  after " << expected_calibration_error(cal, gold2) << "  (10 bins, " << gold.size()
            << " labeled)\n";
  if (!reliability_csv.empty())
    write_file(reliability_csv, [&](std::ostream& os) { write_reliability_csv(os, reliability(cal, gold2)); });
  return 0;
}

int cmd_rank(const std::string& preds_path, const std::string& calibrator, std::size_t k, const std::string& which,
             const std::string& out) {
  std::vector<PredictionRecord> preds = load_predictions(preds_path);
  if (!calibrator.empty()) apply_calibrator(load_calibrator(calibrator), preds);
  SourceProportions sp = source_proportions(preds);
  std::array<Ranking, 3> cols;
  for (std::size_t i = 0; i < 3; ++i) cols[i] = rank_sources(sp, ideology_from_index(i), k);
  if (cols[0].truncated_request)
    std::cerr << "note: only " << sp.mean.size() << " sources available, fewer than k=" << k << '\n';
  if (which == "all") {
    write_ranking_table(std::cout, cols);
  } else {
    const Ranking& r = cols[index_of(parse_ideology(which))];
    write_ranking_csv(std::cout, r);
    if (!out.empty()) write_file(out, [&r](std::ostream& os) { write_ranking_csv(os, r); });
    return 0;
  }
  if (!out.empty())
    write_file(out, [&cols](std::ostream& os) {
      os << "ideology,rank,source,proportion,article_count\n" << std::setprecision(17);
      for (const auto& c : cols)
        for (std::size_t i = 0; i < c.entries.size(); ++i)
          os << to_string(c.ideology) << ',' << i + 1 << ',' << c.entries[i].source << ','
             << c.entries[i].proportion << ',' << c.entries[i].article_count << '\n';
    });
  return 0;
}

int cmd_export_attention(const std::string& model_dir, const std::string& data, const std::string& out,
                         const std::vector<std::string>& ids) {
  ModelBundle m = ModelBundle::load(model_dir);
  if (!m.config.views.content) throw ValidationError("export-attention: model has no content view");
  Corpus c = load_corpus(data);
  std::vector<Article> keep;
  for (const Article& a : c)
    if (ids.empty() || std::find(ids.begin(), ids.end(), a.id) != ids.end()) keep.push_back(a);
  if (keep.empty()) throw ValidationError("export-attention: no matching articles");
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : predict_corpus(m, Corpus(std::move(keep)))) arr.push_back(attention_json(r));
  write_file(out, [&arr](std::ostream& os) { os << arr.dump(2) << '\n'; });
  std::cout << "wrote attention for " << arr.size() << " articles to " << out << '\n';
  return 0;
}

int cmd_ladder(const Globals& g, const std::string& corpus, const std::string& seeds, const std::string& presets,
               const std::string& fractions, const std::string& out) {
  TrainingConfig cfg = g.resolve();
  Corpus c = load_corpus(corpus);
  LadderOptions opt;
  opt.fractions = parse_fractions(fractions);
  if (!presets.empty()) {
    std::stringstream ss(presets);
    std::string p;
    while (std::getline(ss, p, ',')) {
      find_preset(p);
      opt.presets.push_back(p);
    }
  }
  opt.on_run = [](const SeedRun& r, double s) {
    std::cerr << "seed " << r.seed << "  " << std::left << std::setw(12) << r.preset << std::right << " F1 "
              << std::fixed << std::setprecision(4) << r.test.macro_f1 << "  (" << std::setprecision(1) << s
              << " s)\n";
  };
  LadderReport rep = run_ladder(c, parse_seeds(seeds), cfg, opt);
  write_ladder_table(std::cout, rep);
  if (!out.empty()) {
    fs::create_directories(out);
    write_file(out + "/ladder_table.txt", [&rep](std::ostream& os) { write_ladder_table(os, rep); });
    write_file(out + "/ladder_raw.csv", [&rep](std::ostream& os) { write_ladder_raw_csv(os, rep); });
    nlohmann::ordered_json manifests = nlohmann::ordered_json::array();
    for (const auto& r : rep.runs) manifests.push_back(r.manifest.to_json());
    write_file(out + "/manifests.json", [&manifests](std::ostream& os) { os << manifests.dump(2) << '\n'; });
  }
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  std::cout << std::left << std::setw(30) << "module" << std::right << std::setw(9) << "entries" << std::setw(14)
            << "max_rel_err" << std::setw(8) << "result" << '\n';
  for (const auto& r : selfcheck::gradcheck_suite()) {
    const bool pass = r.report.max_rel_error < selfcheck::kGradTolerance;
    ok = ok && pass;
    std::cout << std::left << std::setw(30) << r.module << std::right << std::setw(9) << r.report.checked
              << std::setw(14) << std::scientific << std::setprecision(2) << r.report.max_rel_error
              << std::defaultfloat << std::setw(8) << (pass ? "PASS" : "FAIL") << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view variational ideology classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key = value config file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--profile", g.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--views", g.views, "comma list of title,network,content");
  app.add_option("--set", g.overrides, "override a config key (key=value); repeatable");

  std::function<int()> run;

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  std::string synth_out, sources_out;
  std::size_t articles = 4000, per_block = 10;
  double title = 0.10, content = 0.035, link = 1.0, p_in = 0.7;
  bool no_boiler = false;
  synth->add_option("--out", synth_out, "output JSONL")->required();
  synth->add_option("--articles", articles);
  synth->add_option("--sources-per-block", per_block);
  synth->add_option("--title-signal", title);
  synth->add_option("--content-signal", content);
  synth->add_option("--link-signal", link);
  synth->add_option("--p-in", p_in);
  synth->add_flag("--no-boilerplate", no_boiler);
  synth->add_option("--sources-out", sources_out, "CSV of planted source blocks");
  synth->callback([&] {
    run = [&] { return cmd_synth(g, articles, per_block, title, content, link, p_in, no_boiler, synth_out, sources_out); };
  });

  auto* ingest = app.add_subcommand("ingest", "validate, clean and optionally split a corpus");
  std::string in_path, ingest_out, split_dir, fractions = "0.8,0.1,0.1";
  bool raw = false, no_clean = false;
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--out", ingest_out)->required();
  ingest->add_flag("--raw", raw, "title/body are untokenized strings");
  ingest->add_flag("--no-clean", no_clean);
  ingest->add_option("--split-dir", split_dir, "write train/valid/test.jsonl here");
  ingest->add_option("--fractions", fractions);
  ingest->callback([&] { run = [&] { return cmd_ingest(g, in_path, raw, no_clean, ingest_out, split_dir, fractions); }; });

  auto* embed = app.add_subcommand("embed-graph", "node2vec embeddings of the source link graph");
  std::string embed_corpus, embed_out;
  embed->add_option("--corpus", embed_corpus)->required();
  embed->add_option("--out", embed_out, "output directory")->required();
  embed->callback([&] { run = [&] { return cmd_embed_graph(g, embed_corpus, embed_out); }; });

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_path, valid_path, model_dir, embeddings;
  train->add_option("--train", train_path)->required();
  train->add_option("--valid", valid_path);
  train->add_option("--model", model_dir, "output model directory")->required();
  train->add_option("--embeddings", embeddings, "directory written by embed-graph");
  train->callback([&] { run = [&] { return cmd_train(g, train_path, valid_path, model_dir, embeddings); }; });

  auto* eval = app.add_subcommand("eval", "score a model on labeled data");
  std::string eval_model, eval_data, metrics_csv, confusion_csv, eval_preds;
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--metrics", metrics_csv, "CSV output");
  eval->add_option("--confusion", confusion_csv, "CSV output");
  eval->add_option("--predictions", eval_preds, "JSON output");
  eval->callback([&] { run = [&] { return cmd_eval(eval_model, eval_data, metrics_csv, confusion_csv, eval_preds); }; });

  auto* predict = app.add_subcommand("predict", "class probabilities for articles");
  std::string pred_model, pred_data, pred_out, pred_cal;
  predict->add_option("--model", pred_model)->required();
  predict->add_option("--data", pred_data)->required();
  predict->add_option("--out", pred_out, "JSON output")->required();
  predict->add_option("--calibrator", pred_cal);
  predict->callback([&] { run = [&] { return cmd_predict(pred_model, pred_data, pred_out, pred_cal); }; });

  auto* calib = app.add_subcommand("calibrate", "fit isotonic calibration on labeled predictions");
  std::string cal_fit, cal_out, cal_apply, cal_apply_out, cal_rel;
  calib->add_option("--predictions", cal_fit, "labeled predictions, normally the validation split")->required();
  calib->add_option("--out", cal_out, "calibrator JSON")->required();
  calib->add_option("--apply", cal_apply, "predictions to calibrate");
  calib->add_option("--apply-out", cal_apply_out);
  calib->add_option("--reliability", cal_rel, "reliability CSV of the calibrated --apply set");
  calib->callback([&] { run = [&] { return cmd_calibrate(cal_fit, cal_out, cal_apply, cal_apply_out, cal_rel); }; });

  auto* rank = app.add_subcommand("rank-sources", "rank sources by mean calibrated probability");
  std::string rank_preds, rank_cal, rank_which = "all", rank_out;
  std::size_t k = 10;
  rank->add_option("--predictions", rank_preds)->required();
  rank->add_option("--calibrator", rank_cal, "apply before ranking");
  rank->add_option("--k", k);
  rank->add_option("--ideology", rank_which)->check(CLI::IsMember({"all", "left", "center", "right"}));
  rank->add_option("--out", rank_out, "CSV output");
  rank->callback([&] { run = [&] { return cmd_rank(rank_preds, rank_cal, k, rank_which, rank_out); }; });

  auto* attn = app.add_subcommand("export-attention", "word and sentence attention as JSON");
  std::string attn_model, attn_data, attn_out;
  std::vector<std::string> attn_ids;
  attn->add_option("--model", attn_model)->required();
  attn->add_option("--data", attn_data)->required();
  attn->add_option("--out", attn_out)->required();
  attn->add_option("--ids", attn_ids, "article ids")->delimiter(',');
  attn->callback([&] { run = [&] { return cmd_export_attention(attn_model, attn_data, attn_out, attn_ids); }; });

  auto* ladder = app.add_subcommand("ladder", "baseline-to-full comparison over seeds");
  std::string lad_corpus, lad_seeds = "1-5", lad_presets, lad_frac = "0.75,0.125,0.125", lad_out;
  ladder->add_option("--corpus", lad_corpus)->required();
  ladder->add_option("--seeds", lad_seeds, "e.g. 1-5 or 1,3,7");
  ladder->add_option("--presets", lad_presets, "comma-separated subset, e.g. LR,MVDAM(full)");
  ladder->add_option("--fractions", lad_frac);
  ladder->add_option("--out", lad_out, "output directory");
  ladder->callback([&] { run = [&] { return cmd_ladder(g, lad_corpus, lad_seeds, lad_presets, lad_frac, lad_out); }; });

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every module");
  grad->callback([&] { run = [] { return cmd_gradcheck(); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    g.resolve();  // reject bad global flags for every command
    return run();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
