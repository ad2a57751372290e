#pragma once

// View encoders built from autodiff primitives:
//   - title: Kim-style CNN (windows x feature maps, ReLU, max-over-time,
//     dropout, fully connected to d);
//   - content: word bi-GRU + word attention -> stochastic sentence unit ->
//     sentence bi-GRU + sentence attention.
//
// Parameter names:
//   embed.words                                  shared word table [V, e]
//   title.conv<w>.W / .b, title.fc.W / .b
//   content.word_gru.{fwd,bwd}.*, content.word_attn.*
//   content.sent_mu.*, content.sent_logvar.*
//   content.sent_gru.{fwd,bwd}.*, content.sent_attn.*

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mvdam/autodiff.hpp"
#include "mvdam/error.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/rng.hpp"
#include "mvdam/vocab.hpp"

namespace mvdam {

enum class AttentionKind { kLinear, kTanhContext };

struct EncoderDims {
  std::size_t vocab = 2;
  std::size_t embed = 128;
  std::size_t d = 128;  // view width; each GRU direction has d / 2 units
  std::size_t maps = 100;
  std::vector<std::size_t> windows{3, 4, 5};
  double dropout = 0.5;
  AttentionKind attention = AttentionKind::kLinear;

  std::size_t max_window() const {
    std::size_t m = 0;
    for (std::size_t w : windows) m = std::max(m, w);
    return m;
  }
  void validate() const {
    if (d < 2 || d % 2) throw ValidationError("encoder: d must be even and >= 2");
    if (embed < 1 || maps < 1 || windows.empty()) throw ValidationError("encoder: empty dimension");
    if (vocab < 2) throw ValidationError("encoder: vocabulary too small");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("encoder: dropout must lie in [0,1)");
  }
};

enum class Mode { kTrain, kEval };

// Initial bias of every log-variance head: sampled units start close to
// their means.
inline constexpr double kLogvarInit = -6.0;
inline constexpr double kEmbedInit = 0.5;  // uniform range of the word table
enum class LatentMode { kSample, kMean };

// Standard-normal draws for the reparameterisation nodes; a null source
// yields zeros.
class Noise {
 public:
  Noise() = default;
  explicit Noise(Rng& rng) : rng_(&rng) {}
  Tensor draw(Shape s) {
    Tensor t(s);
    if (rng_)
      for (double& x : t.data()) x = rng_->normal();
    return t;
  }

 private:
  Rng* rng_ = nullptr;
};

// ---------------------------------------------------------------------------
// Parameter initialisation.

inline void init_word_embedding(ParamStore& p, const EncoderDims& dims, Rng& rng) {
  Tensor& w = p.add("embed.words", Tensor::uniform(Shape{dims.vocab, dims.embed}, kEmbedInit, rng));
  for (std::size_t c = 0; c < dims.embed; ++c) w.at(Vocabulary::kPad, c) = 0.0;
}

inline void init_title_encoder(ParamStore& p, const EncoderDims& dims, Rng& rng) {
  for (std::size_t w : dims.windows) {
    const std::string pre = "title.conv" + std::to_string(w);
    p.add_glorot(pre + ".W", Shape{w * dims.embed, dims.maps}, rng);
    p.add_zeros(pre + ".b", Shape{dims.maps});
  }
  p.add_glorot("title.fc.W", Shape{dims.windows.size() * dims.maps, dims.d}, rng);
  p.add_zeros("title.fc.b", Shape{dims.d});
}

inline void init_gru(ParamStore& p, const std::string& pre, std::size_t in, std::size_t hidden, Rng& rng) {
  p.add_glorot(pre + ".Wx", Shape{in, 3 * hidden}, rng);
  p.add_zeros(pre + ".bx", Shape{3 * hidden});
  p.add_glorot(pre + ".Uzr", Shape{hidden, 2 * hidden}, rng);
  p.add_glorot(pre + ".Un", Shape{hidden, hidden}, rng);
}

inline void init_attention(ParamStore& p, const std::string& pre, std::size_t width, AttentionKind kind,
                           Rng& rng) {
  if (kind == AttentionKind::kLinear) {
    p.add_glorot(pre + ".w", Shape{width}, rng);
  } else {
    p.add_glorot(pre + ".proj.W", Shape{width, width}, rng);
    p.add_zeros(pre + ".proj.b", Shape{width});
    p.add_glorot(pre + ".ctx", Shape{width}, rng);
  }
}

inline void init_content_encoder(ParamStore& p, const EncoderDims& dims, Rng& rng) {
  const std::size_t h = dims.d / 2;
  init_gru(p, "content.word_gru.fwd", dims.embed, h, rng);
  init_gru(p, "content.word_gru.bwd", dims.embed, h, rng);
  init_attention(p, "content.word_attn", dims.d, dims.attention, rng);
  p.add_glorot("content.sent_mu.W", Shape{dims.d, dims.d}, rng);
  p.add_zeros("content.sent_mu.b", Shape{dims.d});
  p.add_glorot("content.sent_logvar.W", Shape{dims.d, dims.d}, rng);
  p.add_zeros("content.sent_logvar.b", Shape{dims.d}).fill(kLogvarInit);
  init_gru(p, "content.sent_gru.fwd", dims.d, h, rng);
  init_gru(p, "content.sent_gru.bwd", dims.d, h, rng);
  init_attention(p, "content.sent_attn", dims.d, dims.attention, rng);
}

// ---------------------------------------------------------------------------
// Title CNN.

// Trailing padding is stripped and the title re-padded to the widest window,
// so the encoding does not depend on how much padding the caller appended.
inline std::vector<std::size_t> canonical_title(const std::vector<std::size_t>& ids, std::size_t min_len) {
  std::vector<std::size_t> t = ids;
  while (!t.empty() && t.back() == Vocabulary::kPad) t.pop_back();
  if (t.empty()) throw ValidationError("title view: empty title");
  if (t.size() < min_len) t.resize(min_len, Vocabulary::kPad);
  return t;
}

struct TitleFeatures {
  Var pooled;  // [windows * maps], before dropout
  Var z;       // [d]
};

inline TitleFeatures encode_title(Graph& g, const ParamStore& p, const EncoderDims& dims,
                                  const std::vector<std::size_t>& ids, Mode mode, Rng* rng) {
  const std::vector<std::size_t> t = canonical_title(ids, dims.max_window());
  Var table = g.param(p, "embed.words");
  Var x = embedding(table, t);  // [T, e]
  std::vector<Var> pooled;
  for (std::size_t w : dims.windows) {
    const std::string pre = "title.conv" + std::to_string(w);
    Var maps = relu(affine(unfold(x, w), g.param(p, pre + ".W"), g.param(p, pre + ".b")));
    pooled.push_back(max(maps, 0));
  }
  Var feat = concat(pooled);
  Var h = feat;
  if (mode == Mode::kTrain && dims.dropout > 0.0) {
    if (!rng) throw ValidationError("encode_title: training mode needs an rng for dropout");
    const double keep = 1.0 - dims.dropout;
    Tensor mask(feat.shape());
    for (double& m : mask.data()) m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    h = mul(feat, g.constant(std::move(mask)));
  }
  Var z = affine(h, g.param(p, "title.fc.W"), g.param(p, "title.fc.b"));
  return {feat, z};
}

// ---------------------------------------------------------------------------
// GRU layers; the recurrence itself is the gru_scan primitive.

inline Var gru_layer(Graph& g, const ParamStore& p, const std::string& pre, Var xs, bool reverse) {
  Var proj = affine(xs, g.param(p, pre + ".Wx"), g.param(p, pre + ".bx"));  // [T, 3h]
  return gru_scan(proj, g.param(p, pre + ".Uzr"), g.param(p, pre + ".Un"), reverse);
}

// Forward and backward states concatenated per position: [T, 2h].
inline Var bigru(Graph& g, const ParamStore& p, const std::string& pre, Var xs) {
  return concat({gru_layer(g, p, pre + ".fwd", xs, false), gru_layer(g, p, pre + ".bwd", xs, true)}, 1);
}

// ---------------------------------------------------------------------------
// Attention pooling over the rows of H: alpha = softmax(score(H)),
// context = sum_t alpha_t H_t. Linear scoring is w.H_t (a scalar bias would
// cancel in the softmax); the tanh-context variant scores u.tanh(H_t P + c).

struct Attended {
  Var weights;  // [T]
  Var context;  // [width]
};

inline Var attention_scores(Graph& g, const ParamStore& p, const std::string& pre, Var H) {
  if (p.contains(pre + ".w")) return matmul(H, g.param(p, pre + ".w"));
  Var u = tanh(affine(H, g.param(p, pre + ".proj.W"), g.param(p, pre + ".proj.b")));
  return matmul(u, g.param(p, pre + ".ctx"));
}

inline Attended attend(Graph& g, const ParamStore& p, const std::string& pre, Var H) {
  Var alpha = softmax(attention_scores(g, p, pre, H));
  return {alpha, matmul(alpha, H)};
}

// Plain softmax of attention scores, exposed for inspection and tests.
inline std::vector<double> attention_weights(const std::vector<double>& scores) {
  Graph g(false);
  Var a = softmax(g.constant(Tensor::vector(scores)));
  return a.value().values();
}

// ---------------------------------------------------------------------------
// Content encoder.

struct AttentionRecord {
  std::vector<std::vector<double>> word_attn;  // per sentence
  std::vector<double> sentence_attn;
};

struct SentenceEncoding {
  Var mu, logvar;       // Gaussian over s_i, [d] each
  Var word_attention;   // [T]
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

inline SentenceEncoding encode_sentence(Graph& g, const ParamStore& p, const std::vector<std::size_t>& words) {
  if (words.empty()) throw ValidationError("content view: empty sentence");
  Var x = embedding(g.param(p, "embed.words"), words);
  Var H = bigru(g, p, "content.word_gru", x);
  Attended a = attend(g, p, "content.word_attn", H);
  Var mu = affine(a.context, g.param(p, "content.sent_mu.W"), g.param(p, "content.sent_mu.b"));
  Var lv = clamp(affine(a.context, g.param(p, "content.sent_logvar.W"), g.param(p, "content.sent_logvar.b")),
                 kLogvarMin, kLogvarMax);
  return {mu, lv, a.weights};
}

struct ContentEncoding {
  Var z;  // [d]
  AttentionRecord attention;
};

inline ContentEncoding encode_content(Graph& g, const ParamStore& p,
                                      const std::vector<std::vector<std::size_t>>& sentences,
                                      LatentMode mode, Noise noise) {
  if (sentences.empty()) throw ValidationError("content view: article has no sentences");
  ContentEncoding out;
  std::vector<Var> units;
  units.reserve(sentences.size());
  for (const auto& s : sentences) {
    SentenceEncoding se = encode_sentence(g, p, s);
    out.attention.word_attn.push_back(se.word_attention.value().values());
    if (mode == LatentMode::kSample)
      units.push_back(reparameterize(se.mu, se.logvar, noise.draw(se.mu.shape())));
    else
      units.push_back(se.mu);
  }
  Var H = bigru(g, p, "content.sent_gru", stack(units));
  Attended a = attend(g, p, "content.sent_attn", H);
  out.attention.sentence_attn = a.weights.value().values();
  out.z = a.context;
  return out;
}

}  // namespace mvdam
