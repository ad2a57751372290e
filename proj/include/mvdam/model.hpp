#pragma once

// Multi-view variational classifier.
//
//   views -> concat [3d] -> ReLU(W1 .) -> W2 . -> (mu, logvar)   inference net
//   h = mu + exp(logvar / 2) * eps                                 latent
//   p(y | h) = softmax(W4 ReLU(W3 h))                              discriminator
//   J = mean NLL + lambda * mean KL(q(h) || N(0, I))
//
// "direct" configurations skip the latent layer and feed a single view
// straight to the discriminator (the single-view baselines).

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvdam/autodiff.hpp"
#include "mvdam/corpus.hpp"
#include "mvdam/encoders.hpp"
#include "mvdam/error.hpp"
#include "mvdam/graphembed.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/vocab.hpp"

namespace mvdam {

struct GaussianDiag {
  Tensor mean;
  Tensor logvar;

  std::size_t dim() const { return mean.size(); }
  static GaussianDiag standard(std::size_t d) { return {Tensor(Shape{d}), Tensor(Shape{d})}; }
};

struct ViewMask {
  bool title = true;
  bool network = true;
  bool content = true;

  std::size_t count() const { return title + network + content; }
  friend bool operator==(const ViewMask&, const ViewMask&) = default;

  std::string str() const {
    std::string s;
    auto add = [&s](bool on, const char* n) {
      if (!on) return;
      if (!s.empty()) s += ',';
      s += n;
    };
    add(title, "title");
    add(network, "network");
    add(content, "content");
    return s;
  }

  static ViewMask parse(const std::string& spec) {
    ViewMask m{false, false, false};
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "title") m.title = true;
      else if (item == "network") m.network = true;
      else if (item == "content") m.content = true;
      else if (!item.empty()) throw ValidationError("unknown view '" + item + "'");
    }
    if (m.count() == 0) throw ValidationError("view mask must name at least one view");
    return m;
  }
};

// An article mapped to ids, with its network vector precomputed.
struct EncodedArticle {
  std::string id;
  std::string source;
  std::vector<std::size_t> title;
  std::vector<std::vector<std::size_t>> sentences;
  Tensor z_network;
  std::optional<Ideology> label;
};

inline EncodedArticle encode_article(const Article& a, const Vocabulary& vocab, const EmbeddingMatrix* net,
                                     std::size_t d) {
  EncodedArticle e;
  e.id = a.id;
  e.source = a.source;
  e.title = vocab.encode(a.title);
  for (const auto& s : a.sentences)
    if (!s.empty()) e.sentences.push_back(vocab.encode(s));
  e.z_network = net ? article_network_repr(a, *net) : Tensor(Shape{d});
  e.label = a.label;
  return e;
}

inline std::vector<EncodedArticle> encode_corpus(const Corpus& c, const Vocabulary& vocab,
                                                 const EmbeddingMatrix* net, std::size_t d) {
  std::vector<EncodedArticle> out;
  out.reserve(c.size());
  for (const Article& a : c) out.push_back(encode_article(a, vocab, net, d));
  return out;
}

struct ModelConfig {
  EncoderDims dims;
  ViewMask views;
  bool direct = false;               // single view straight into the discriminator
  bool stochastic_sentences = true;  // sample sentence units while training

  void validate() const {
    dims.validate();
    if (views.count() == 0) throw ValidationError("model: view mask is empty");
    if (direct && views.count() != 1) throw ValidationError("model: direct mode needs exactly one view");
  }
};

// ---------------------------------------------------------------------------
// Parameter initialisation for the fusion and classifier heads.

inline void init_inference_net(ParamStore& p, std::size_t d, Rng& rng) {
  p.add_glorot("fuse.l1.W", Shape{3 * d, d}, rng);
  p.add_zeros("fuse.l1.b", Shape{d});
  p.add_glorot("fuse.l2.W", Shape{d, d}, rng);
  p.add_zeros("fuse.l2.b", Shape{d});
  p.add_glorot("fuse.mu.W", Shape{d, d}, rng);
  p.add_zeros("fuse.mu.b", Shape{d});
  p.add_glorot("fuse.logvar.W", Shape{d, d}, rng);
  p.add_zeros("fuse.logvar.b", Shape{d}).fill(kLogvarInit);
}

inline void init_discriminator(ParamStore& p, std::size_t d, Rng& rng) {
  p.add_glorot("disc.l1.W", Shape{d, d}, rng);
  p.add_zeros("disc.l1.b", Shape{d});
  p.add_glorot("disc.out.W", Shape{d, kNumClasses}, rng);
  p.add_zeros("disc.out.b", Shape{kNumClasses});
}

inline ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore p;
  if (cfg.views.title || cfg.views.content) init_word_embedding(p, cfg.dims, rng);
  if (cfg.views.title) init_title_encoder(p, cfg.dims, rng);
  if (cfg.views.content) init_content_encoder(p, cfg.dims, rng);
  if (!cfg.direct) init_inference_net(p, cfg.dims.d, rng);
  init_discriminator(p, cfg.dims.d, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Graph-level pieces.

struct LatentVars {
  Var mu, logvar;
};

// Views absent from the mask must be passed as zero vectors of width d.
inline LatentVars infer_posterior(Graph& g, const ParamStore& p, Var z_title, Var z_network, Var z_content) {
  Var z = concat({z_title, z_network, z_content});
  Var a1 = relu(affine(z, g.param(p, "fuse.l1.W"), g.param(p, "fuse.l1.b")));
  Var a2 = affine(a1, g.param(p, "fuse.l2.W"), g.param(p, "fuse.l2.b"));
  Var mu = affine(a2, g.param(p, "fuse.mu.W"), g.param(p, "fuse.mu.b"));
  Var lv = clamp(affine(a2, g.param(p, "fuse.logvar.W"), g.param(p, "fuse.logvar.b")), kLogvarMin, kLogvarMax);
  return {mu, lv};
}

inline Var discriminator_logits(Graph& g, const ParamStore& p, Var h) {
  Var a = relu(affine(h, g.param(p, "disc.l1.W"), g.param(p, "disc.l1.b")));
  return affine(a, g.param(p, "disc.out.W"), g.param(p, "disc.out.b"));
}

// KL(A || B) for diagonal Gaussians given by means and log-variances:
//   -1/2 sum_j (1 + log(kA/kB) - kA/kB - (muA - muB)^2 / kB)
inline Var kl_diag_gauss(Var mu_a, Var lv_a, Var mu_b, Var lv_b) {
  Graph& g = *mu_a.graph();
  Var dlv = sub(lv_a, lv_b);
  Var diff = sub(mu_a, mu_b);
  Var inv_kb = exp(scale(lv_b, -1.0));
  Var one = g.constant(Tensor::scalar(1.0));
  Var terms = sub(sub(add(dlv, one), exp(dlv)), mul(mul(diff, diff), inv_kb));
  return scale(sum(terms), -0.5);
}

// KL(q || N(0, I)).
inline Var kl_to_standard_normal(Var mu, Var logvar) {
  Graph& g = *mu.graph();
  Var zeros = g.constant(Tensor(mu.shape()));
  return kl_diag_gauss(mu, logvar, zeros, zeros);
}

// ---------------------------------------------------------------------------
// Value-level API.

inline double kl_diag_gauss(const GaussianDiag& a, const GaussianDiag& b) {
  if (a.dim() != b.dim() || a.logvar.size() != a.dim() || b.logvar.size() != b.dim())
    throw ValidationError("kl_diag_gauss: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.dim(); ++j) {
    const double dlv = a.logvar[j] - b.logvar[j];
    const double diff = a.mean[j] - b.mean[j];
    s += 1.0 + dlv - std::exp(dlv) - diff * diff * std::exp(-b.logvar[j]);
  }
  return -0.5 * s;
}

// h = mu + exp(logvar / 2) * eps
inline Tensor sample_latent(const GaussianDiag& q, const Tensor& eps) {
  q.mean.check_same(eps, "sample_latent");
  Tensor h(q.mean.shape());
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = q.mean[j] + std::exp(0.5 * q.logvar[j]) * eps[j];
  return h;
}

struct ViewVectors {
  Tensor title, network, content;
};

inline GaussianDiag infer_posterior(const ViewVectors& v, const ParamStore& p, const ViewMask& mask) {
  const std::size_t d = p.value("fuse.l2.b").size();
  auto pick_view = [d](const Tensor& t, bool on, const char* name) {
    if (!on) return Tensor(Shape{d});
    if (t.rank() != 1 || t.size() != d)
      throw ValidationError(std::string("infer_posterior: ") + name + " vector must have length " +
                            std::to_string(d));
    return t;
  };
  Graph g(false);
  LatentVars q = infer_posterior(g, p, g.constant(pick_view(v.title, mask.title, "title")),
                                 g.constant(pick_view(v.network, mask.network, "network")),
                                 g.constant(pick_view(v.content, mask.content, "content")));
  return {q.mu.value(), q.logvar.value()};
}

inline std::array<double, 3> discriminate(const Tensor& h, const ParamStore& p) {
  Graph g(false);
  Var probs = softmax(discriminator_logits(g, p, g.constant(h)));
  return {probs.value()[0], probs.value()[1], probs.value()[2]};
}

// ---------------------------------------------------------------------------
// Whole-article forward pass.

struct Forward {
  Var log_probs;  // [3]
  std::optional<LatentVars> posterior;
  AttentionRecord attention;
};

// kTrain: dropout on, one reparameterised sample per sentence and for h.
// kEval: dropout off, means everywhere.
inline Forward forward(Graph& g, const ParamStore& p, const ModelConfig& cfg, const EncodedArticle& a,
                       Mode mode, Rng* rng) {
  const std::size_t d = cfg.dims.d;
  if (mode == Mode::kTrain && !rng) throw ValidationError("forward: training mode needs an rng");
  Forward f;
  Var zeros = g.constant(Tensor(Shape{d}));
  Var zt = zeros, zn = zeros, zc = zeros;
  if (cfg.views.title) {
    if (a.title.empty()) throw ValidationError("article " + a.id + ": title view has no tokens");
    zt = encode_title(g, p, cfg.dims, a.title, mode, rng).z;
  }
  if (cfg.views.network) {
    if (a.z_network.size() != d)
      throw ValidationError("article " + a.id + ": network vector has wrong width");
    zn = g.constant(a.z_network);
  }
  if (cfg.views.content) {
    if (a.sentences.empty()) throw ValidationError("article " + a.id + ": content view has no sentences");
    const bool sample = mode == Mode::kTrain && cfg.stochastic_sentences;
    ContentEncoding ce = encode_content(g, p, a.sentences, sample ? LatentMode::kSample : LatentMode::kMean,
                                        sample ? Noise(*rng) : Noise());
    zc = ce.z;
    f.attention = std::move(ce.attention);
  }
  Var h;
  if (cfg.direct) {
    h = cfg.views.title ? zt : (cfg.views.network ? zn : zc);
  } else {
    LatentVars q = infer_posterior(g, p, zt, zn, zc);
    f.posterior = q;
    h = mode == Mode::kTrain ? reparameterize(q.mu, q.logvar, Noise(*rng).draw(q.mu.shape())) : q.mu;
  }
  f.log_probs = log_softmax(discriminator_logits(g, p, h));
  return f;
}

struct LossParts {
  Var total;  // J
  double nll = 0.0;
  double kl = 0.0;
};

// J = mean NLL + lambda * mean KL over the batch.
inline LossParts batch_loss(Graph& g, const ParamStore& p, const ModelConfig& cfg,
                            std::span<const EncodedArticle* const> batch, double lambda, Rng& rng) {
  if (batch.empty()) throw ValidationError("loss: empty batch");
  std::vector<Var> nll, kl;
  for (const EncodedArticle* a : batch) {
    if (!a->label) throw ValidationError("loss: article " + a->id + " is unlabeled");
    Forward f = forward(g, p, cfg, *a, Mode::kTrain, &rng);
    nll.push_back(scale(pick(f.log_probs, index_of(*a->label)), -1.0));
    if (f.posterior) kl.push_back(kl_to_standard_normal(f.posterior->mu, f.posterior->logvar));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  Var mean_nll = scale(sum(stack(nll)), inv);
  LossParts out;
  out.nll = mean_nll.item();
  if (kl.empty()) {
    out.total = mean_nll;
    return out;
  }
  Var mean_kl = scale(sum(stack(kl)), inv);
  out.kl = mean_kl.item();
  out.total = add(mean_nll, scale(mean_kl, lambda));
  return out;
}

// ---------------------------------------------------------------------------
// Prediction.

struct PredictionRecord {
  std::string article_id;
  std::string source;
  std::array<double, 3> probs{};
  Ideology predicted = Ideology::kLeft;
  std::string latent_mode = "mean";
  AttentionRecord attention;
  std::optional<std::array<double, 3>> calibrated;
  std::optional<Ideology> gold;
};

inline Ideology argmax_class(const std::array<double, 3>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k)
    if (p[k] > p[best]) best = k;
  return ideology_from_index(best);
}

// Posterior-mean prediction; deterministic.
inline PredictionRecord predict(const EncodedArticle& a, const ParamStore& p, const ModelConfig& cfg) {
  Graph g(false);
  Forward f = forward(g, p, cfg, a, Mode::kEval, nullptr);
  PredictionRecord r;
  r.article_id = a.id;
  r.source = a.source;
  const Tensor& lp = f.log_probs.value();
  double z = 0.0;
  for (std::size_t k = 0; k < 3; ++k) z += (r.probs[k] = std::exp(lp[k]));
  for (double& x : r.probs) x /= z;
  r.predicted = argmax_class(r.probs);
  r.attention = std::move(f.attention);
  r.gold = a.label;
  return r;
}

}  // namespace mvdam
