#pragma once

// Training configuration, the AdaDelta training loop with validation-based
// early stopping, and model bundles on disk.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvdam/adadelta.hpp"
#include "mvdam/checkpoint.hpp"
#include "mvdam/corpus.hpp"
#include "mvdam/graphembed.hpp"
#include "mvdam/metrics.hpp"
#include "mvdam/model.hpp"
#include "mvdam/vocab.hpp"

namespace mvdam {

struct TrainingConfig {
  // objective / optimiser
  double lambda = 1e-3;
  std::size_t warmup_steps = 500;  // linear KL warm-up
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  double rho = 0.95;
  double epsilon = 1e-6;
  double lr = 1.0;

  // architecture
  ViewMask views;
  bool direct = false;
  bool stochastic_sentences = true;
  AttentionKind attention = AttentionKind::kLinear;
  std::size_t embed_dim = 32;
  std::size_t d = 32;
  std::size_t maps = 16;
  std::vector<std::size_t> windows{3, 4, 5};
  double dropout = 0.5;

  // vocabulary
  std::size_t min_count = 2;
  std::size_t max_vocab = 5000;

  // graph embedding
  std::size_t num_walks = 10;
  std::size_t walk_len = 20;
  std::size_t walk_window = 5;
  std::size_t negatives = 5;
  std::size_t embed_epochs = 5;
  double p = 1.0;
  double q = 1.0;

  std::string profile = "desk";

  static TrainingConfig desk() { return TrainingConfig{}; }

  static TrainingConfig paper() {
    TrainingConfig c;
    c.profile = "paper";
    c.embed_dim = 128;
    c.d = 128;
    c.maps = 100;
    c.max_vocab = 0;
    return c;
  }

  static TrainingConfig for_profile(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ValidationError("unknown profile '" + name + "' (expected desk or paper)");
  }

  ModelConfig model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.dims.vocab = vocab_size;
    m.dims.embed = embed_dim;
    m.dims.d = d;
    m.dims.maps = maps;
    m.dims.windows = windows;
    m.dims.dropout = dropout;
    m.dims.attention = attention;
    m.views = views;
    m.direct = direct;
    m.stochastic_sentences = stochastic_sentences;
    return m;
  }

  WalkOptions walk_options() const { return WalkOptions{num_walks, walk_len, p, q, 1}; }
  EmbedOptions embed_options() const {
    EmbedOptions e;
    e.dim = d;
    e.window = walk_window;
    e.negatives = negatives;
    e.epochs = embed_epochs;
    return e;
  }

  void validate() const {
    if (lambda < 0.0) throw ValidationError("config: lambda must be >= 0");
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (views.count() == 0) throw ValidationError("config: views must be non-empty");
    model_config(2).validate();
  }

  // Flat "key = value" form; round-trips through set().
  std::vector<std::pair<std::string, std::string>> items() const {
    auto num = [](double v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    std::string win;
    for (std::size_t w : windows) win += (win.empty() ? "" : ",") + std::to_string(w);
    return {
        {"profile", profile},
        {"lambda", num(lambda)},
        {"warmup_steps", std::to_string(warmup_steps)},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"patience", std::to_string(patience)},
        {"seed", std::to_string(seed)},
        {"rho", num(rho)},
        {"epsilon", num(epsilon)},
        {"lr", num(lr)},
        {"views", views.str()},
        {"direct", direct ? "true" : "false"},
        {"stochastic_sentences", stochastic_sentences ? "true" : "false"},
        {"attention", attention == AttentionKind::kLinear ? "linear" : "tanh_context"},
        {"embed_dim", std::to_string(embed_dim)},
        {"d", std::to_string(d)},
        {"maps", std::to_string(maps)},
        {"windows", win},
        {"dropout", num(dropout)},
        {"min_count", std::to_string(min_count)},
        {"max_vocab", std::to_string(max_vocab)},
        {"num_walks", std::to_string(num_walks)},
        {"walk_len", std::to_string(walk_len)},
        {"walk_window", std::to_string(walk_window)},
        {"negatives", std::to_string(negatives)},
        {"embed_epochs", std::to_string(embed_epochs)},
        {"p", num(p)},
        {"q", num(q)},
    };
  }

  void set(const std::string& key, const std::string& value) {
    auto size_of = [&key](const std::string& text) -> std::size_t {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(text, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != text.size() || text[0] == '-')
        throw ValidationError("config: " + key + " expects a non-negative integer, got '" + text + "'");
      return static_cast<std::size_t>(v);
    };
    auto as_size = [&]() { return size_of(value); };
    auto as_double = [&]() {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != value.size()) throw ValidationError("config: " + key + " expects a number");
      return v;
    };
    auto as_bool = [&]() {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ValidationError("config: " + key + " expects true/false");
    };
    if (key == "profile") {
      if (value != "desk" && value != "paper") throw ValidationError("config: unknown profile " + value);
      profile = value;
    } else if (key == "lambda") lambda = as_double();
    else if (key == "warmup_steps") warmup_steps = as_size();
    else if (key == "batch_size") batch_size = as_size();
    else if (key == "epochs") epochs = as_size();
    else if (key == "patience") patience = as_size();
    else if (key == "seed") seed = as_size();
    else if (key == "rho") rho = as_double();
    else if (key == "epsilon") epsilon = as_double();
    else if (key == "lr") lr = as_double();
    else if (key == "views") views = ViewMask::parse(value);
    else if (key == "direct") direct = as_bool();
    else if (key == "stochastic_sentences") stochastic_sentences = as_bool();
    else if (key == "attention") {
      if (value == "linear") attention = AttentionKind::kLinear;
      else if (value == "tanh_context") attention = AttentionKind::kTanhContext;
      else throw ValidationError("config: attention must be linear or tanh_context");
    } else if (key == "embed_dim") embed_dim = as_size();
    else if (key == "d") d = as_size();
    else if (key == "maps") maps = as_size();
    else if (key == "windows") {
      windows.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) windows.push_back(size_of(item));
      if (windows.empty()) throw ValidationError("config: windows must be non-empty");
    } else if (key == "dropout") dropout = as_double();
    else if (key == "min_count") min_count = as_size();
    else if (key == "max_vocab") max_vocab = as_size();
    else if (key == "num_walks") num_walks = as_size();
    else if (key == "walk_len") walk_len = as_size();
    else if (key == "walk_window") walk_window = as_size();
    else if (key == "negatives") negatives = as_size();
    else if (key == "embed_epochs") embed_epochs = as_size();
    else if (key == "p") p = as_double();
    else if (key == "q") q = as_double();
    else throw ValidationError("config: unknown key '" + key + "'");
  }

  void write(std::ostream& os) const {
    for (const auto& [k, v] : items()) os << k << " = " << v << '\n';
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  // Applies every "key = value" line of `is` on top of the current values.
  void read(std::istream& is) {
    std::string line;
    std::size_t n = 0;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
      ++n;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(n) + ": expected key = value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  static TrainingConfig load(const std::string& path) { return load(path, TrainingConfig{}); }
  static TrainingConfig load(const std::string& path, TrainingConfig base) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config " + path);
    base.read(is);
    return base;
  }
};

// ---------------------------------------------------------------------------
// Training loop.

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0, nll = 0.0, kl = 0.0, val_f1 = 0.0;
};

inline void write_training_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,loss,nll,kl,val_f1\n" << std::setprecision(17);
  for (const auto& e : log) os << e.epoch << ',' << e.loss << ',' << e.nll << ',' << e.kl << ',' << e.val_f1 << '\n';
}

inline std::vector<PredictionRecord> predict_all(const std::vector<EncodedArticle>& data, const ParamStore& p,
                                                 const ModelConfig& cfg) {
  std::vector<PredictionRecord> out;
  out.reserve(data.size());
  for (const auto& a : data) out.push_back(predict(a, p, cfg));
  return out;
}

inline MetricsReport evaluate(const std::vector<PredictionRecord>& preds) {
  std::vector<Ideology> pred, gold;
  for (const auto& r : preds) {
    if (!r.gold) continue;
    pred.push_back(r.predicted);
    gold.push_back(*r.gold);
  }
  return eval_metrics(pred, gold);
}

struct TrainResult {
  ParamStore params;  // best by validation macro-F1
  std::vector<EpochLog> log;
  double best_val_f1 = 0.0;
  std::size_t best_epoch = 0;
};

inline TrainResult train(const ModelConfig& mcfg, ParamStore params, const std::vector<EncodedArticle>& train_set,
                         const std::vector<EncodedArticle>& valid_set, const TrainingConfig& cfg) {
  if (train_set.empty()) throw ValidationError("train: empty training split");
  for (const auto& a : train_set)
    if (!a.label) throw ValidationError("train: article " + a.id + " is unlabeled");
  TrainResult res;
  res.params = params;
  if (cfg.epochs == 0) return res;

  const AdaDeltaOptions opt{cfg.rho, cfg.epsilon, cfg.lr};
  Rng order_rng = Rng(cfg.seed).fork(101);
  Rng noise_rng = Rng(cfg.seed).fork(202);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0, stale = 0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0, nll_sum = 0.0, kl_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::vector<const EncodedArticle*> batch;
      for (std::size_t i = b; i < e; ++i) batch.push_back(&train_set[order[i]]);
      const double lambda =
          cfg.warmup_steps ? cfg.lambda * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps))
                           : cfg.lambda;
      Graph g;
      LossParts lp = batch_loss(g, params, mcfg, batch, lambda, noise_rng);
      TensorMap grads = grad(g, lp.total, params);
      if (auto it = grads.find("embed.words"); it != grads.end())
        for (std::size_t c = 0; c < it->second.cols(); ++c) it->second.at(Vocabulary::kPad, c) = 0.0;
      adadelta_step(params, grads, opt);
      const double w = static_cast<double>(batch.size());
      loss_sum += lp.total.item() * w;
      nll_sum += lp.nll * w;
      kl_sum += lp.kl * w;
      ++step;
    }
    const double n = static_cast<double>(order.size());
    EpochLog row{epoch, loss_sum / n, nll_sum / n, kl_sum / n, 0.0};
    if (!valid_set.empty()) row.val_f1 = evaluate(predict_all(valid_set, params, mcfg)).macro_f1;
    res.log.push_back(row);
    if (valid_set.empty() || !have_best || row.val_f1 > res.best_val_f1) {
      have_best = true;
      res.best_val_f1 = row.val_f1;
      res.best_epoch = epoch;
      res.params = params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Model bundle: everything needed to predict on new articles.

struct ModelBundle {
  TrainingConfig config;
  Vocabulary vocab;
  EmbeddingMatrix net;  // empty when the network view is off
  ParamStore params;

  ModelConfig model_config() const { return config.model_config(vocab.size()); }
  bool has_network() const { return net.rows() > 0; }

  std::vector<EncodedArticle> encode(const Corpus& c) const {
    return encode_corpus(c, vocab, has_network() ? &net : nullptr, config.d);
  }

  // Directory layout: config.txt, vocab.txt, model.ckpt (parameters and
  // net.F), nodes.txt.
  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream cfg(dir + "/config.txt");
    if (!cfg) throw Error("cannot write " + dir + "/config.txt");
    config.write(cfg);
    vocab.save(dir + "/vocab.txt");
    TensorMap all = params.values();
    if (has_network()) all.emplace("net.F", net.table);
    save_checkpoint(dir + "/model.ckpt", all);
    std::ofstream nodes(dir + "/nodes.txt");
    for (const auto& n : net.names) nodes << n << '\n';
  }

  static ModelBundle load(const std::string& dir) {
    ModelBundle b;
    b.config = TrainingConfig::load(dir + "/config.txt");
    b.vocab = Vocabulary::load(dir + "/vocab.txt");
    TensorMap all = load_checkpoint(dir + "/model.ckpt");
    if (auto it = all.find("net.F"); it != all.end()) {
      std::ifstream is(dir + "/nodes.txt");
      std::vector<std::string> names;
      std::string line;
      while (std::getline(is, line))
        if (!line.empty()) names.push_back(line);
      b.net = EmbeddingMatrix(std::move(names), it->second);
    }
    Rng rng(0);
    b.params = init_params(b.model_config(), rng);
    b.params.load_values(all);
    return b;
  }
};

struct FitResult {
  ModelBundle model;
  TrainResult training;
};

// Vocabulary from the training split, graph embeddings from the training
// split's links (when the network view is on), then training.
inline FitResult fit(const Corpus& train_split, const Corpus& valid_split, const TrainingConfig& cfg,
                     const EmbeddingMatrix* pretrained_net = nullptr) {
  cfg.validate();
  FitResult r;
  r.model.config = cfg;
  r.model.vocab = build_vocab(train_split, cfg.min_count, cfg.max_vocab);
  if (cfg.views.network) {
    if (pretrained_net) {
      if (pretrained_net->dim() != cfg.d) throw ValidationError("fit: embedding width differs from d");
      r.model.net = *pretrained_net;
    } else {
      SourceGraph g = build_graph(train_split);
      r.model.net = embed_graph(g, cfg.walk_options(), cfg.embed_options(), Rng(cfg.seed).fork(303));
    }
  }
  const ModelConfig mcfg = r.model.model_config();
  Rng init_rng = Rng(cfg.seed).fork(404);
  ParamStore init = init_params(mcfg, init_rng);
  r.training = train(mcfg, std::move(init), r.model.encode(train_split), r.model.encode(valid_split), cfg);
  r.model.params = r.training.params;
  return r;
}

}  // namespace mvdam
