#include <gtest/gtest.h>

#include <cmath>

#include "mvdam/encoders.hpp"
#include "mvdam/gradcheck.hpp"

using namespace mvdam;

namespace {

EncoderDims small_dims(AttentionKind kind = AttentionKind::kLinear) {
  EncoderDims d;
  d.vocab = 12;
  d.embed = 4;
  d.d = 6;
  d.maps = 3;
  d.attention = kind;
  return d;
}

ParamStore content_params(const EncoderDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  init_word_embedding(p, dims, rng);
  init_content_encoder(p, dims, rng);
  return p;
}

ParamStore title_params(const EncoderDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  init_word_embedding(p, dims, rng);
  init_title_encoder(p, dims, rng);
  return p;
}

// Parameters redrawn from N(0, s^2). Around s = 0.4 the gates are neither
// saturated nor near-linear, so no gradient entry sinks to roundoff level.
void rescale(ParamStore& p, double s, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, slot] : p)
    for (double& x : slot.value.data()) x = s * rng.normal();
}

void expect_simplex(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) {
    EXPECT_GE(x, 0.0);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-6);
}

std::vector<std::vector<std::size_t>> random_article(Rng& rng, std::size_t vocab) {
  std::vector<std::vector<std::size_t>> s(1 + rng.below(4));
  for (auto& sent : s) {
    sent.resize(1 + rng.below(6));
    for (auto& w : sent) w = 1 + rng.below(vocab - 1);
  }
  return s;
}

}  // namespace

TEST(Attention, HandSoftmax) {
  std::vector<double> a = attention_weights({std::log(2.0), 0.0});
  EXPECT_NEAR(a[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(attention_weights({4.2}), (std::vector<double>{1.0}));
}

TEST(Attention, IdenticalRowsShareWeightAndContext) {
  ParamStore p = content_params(small_dims(), 1);
  Graph g;
  Tensor row = Tensor::vector({0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  Var H = stack({g.constant(row), g.constant(row)});
  Attended a = attend(g, p, "content.word_attn", H);
  EXPECT_NEAR(a.weights.value()[0], 0.5, 1e-15);
  EXPECT_NEAR(a.weights.value()[1], 0.5, 1e-15);
  for (std::size_t k = 0; k < row.size(); ++k) EXPECT_NEAR(a.context.value()[k], row[k], 1e-15);
}

TEST(TitleEncoder, PaperShapes) {
  EncoderDims dims;
  dims.vocab = 20;
  ParamStore p = title_params(dims, 2);
  Graph g;
  const std::vector<std::size_t> title = {2, 3, 4, 5, 6, 7, 8};
  Var x = embedding(g.param(p, "embed.words"), title);
  EXPECT_EQ(unfold(x, 3).value().dim(0), 5u);
  EXPECT_EQ(unfold(x, 4).value().dim(0), 4u);
  EXPECT_EQ(unfold(x, 5).value().dim(0), 3u);
  TitleFeatures f = encode_title(g, p, dims, title, Mode::kEval, nullptr);
  EXPECT_EQ(f.pooled.size(), 300u);
  EXPECT_EQ(f.z.size(), 128u);
}

TEST(TitleEncoder, ZeroFiltersGiveFcBias) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 3);
  for (std::size_t w : dims.windows) {
    p.value("title.conv" + std::to_string(w) + ".W").fill(0.0);
    p.value("title.conv" + std::to_string(w) + ".b").fill(0.0);
  }
  Rng rng(1);
  p.value("title.fc.b") = Tensor::uniform(Shape{dims.d}, 1.0, rng);
  Graph g;
  TitleFeatures f = encode_title(g, p, dims, {2, 3, 4, 5}, Mode::kEval, nullptr);
  for (double x : f.pooled.value().data()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(f.z.value(), p.value("title.fc.b"));
}

TEST(TitleEncoder, ShortTitleIsPadded) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 4);
  EXPECT_EQ(canonical_title({5, 6}, 5), (std::vector<std::size_t>{5, 6, 0, 0, 0}));
  Graph g;
  TitleFeatures f = encode_title(g, p, dims, {5, 6}, Mode::kEval, nullptr);
  EXPECT_TRUE(f.z.value().all_finite());
  EXPECT_EQ(f.z.size(), dims.d);
}

TEST(TitleEncoder, EmptyTitleIsAnError) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 4);
  Graph g;
  EXPECT_THROW(encode_title(g, p, dims, {}, Mode::kEval, nullptr), ValidationError);
  EXPECT_THROW(encode_title(g, p, dims, {0, 0}, Mode::kEval, nullptr), ValidationError);
}

TEST(TitleEncoder, TrailingPaddingDoesNotChangeOutput) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 5);
  for (const std::vector<std::size_t>& base : {std::vector<std::size_t>{2, 3}, std::vector<std::size_t>{2, 3, 4, 5, 6, 7, 8}}) {
    Graph g;
    Tensor ref = encode_title(g, p, dims, base, Mode::kEval, nullptr).z.value();
    for (std::size_t extra = 1; extra <= 6; ++extra) {
      std::vector<std::size_t> padded = base;
      padded.resize(base.size() + extra, Vocabulary::kPad);
      Graph h;
      EXPECT_EQ(encode_title(h, p, dims, padded, Mode::kEval, nullptr).z.value(), ref);
    }
  }
}

TEST(TitleEncoder, DropoutOnlyInTraining) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 6);
  Graph g;
  Tensor a = encode_title(g, p, dims, {2, 3, 4}, Mode::kEval, nullptr).z.value();
  Tensor b = encode_title(g, p, dims, {2, 3, 4}, Mode::kEval, nullptr).z.value();
  EXPECT_EQ(a, b);
  EXPECT_THROW(encode_title(g, p, dims, {2, 3, 4}, Mode::kTrain, nullptr), ValidationError);
}

TEST(ContentEncoder, SingleSentence) {
  EncoderDims dims = small_dims();
  ParamStore p = content_params(dims, 7);
  Graph g;
  ContentEncoding c = encode_content(g, p, {{2, 3, 4}}, LatentMode::kMean, Noise());
  EXPECT_EQ(c.attention.sentence_attn, (std::vector<double>{1.0}));
  Graph h;
  SentenceEncoding s = encode_sentence(h, p, {2, 3, 4});
  Var H = bigru(h, p, "content.sent_gru", stack({s.mu}));
  for (std::size_t k = 0; k < dims.d; ++k) EXPECT_EQ(c.z.value()[k], H.value()[k]);
}

TEST(ContentEncoder, SingleWordAttentionIsOne) {
  ParamStore p = content_params(small_dims(), 8);
  Graph g;
  ContentEncoding c = encode_content(g, p, {{5}, {6, 7}}, LatentMode::kMean, Noise());
  EXPECT_EQ(c.attention.word_attn[0], (std::vector<double>{1.0}));
}

TEST(ContentEncoder, ZeroNoiseSampleEqualsMean) {
  ParamStore p = content_params(small_dims(), 9);
  const std::vector<std::vector<std::size_t>> doc = {{2, 3}, {4, 5, 6}, {7}};
  Graph g1, g2;
  Tensor a = encode_content(g1, p, doc, LatentMode::kSample, Noise()).z.value();
  Tensor b = encode_content(g2, p, doc, LatentMode::kMean, Noise()).z.value();
  EXPECT_EQ(a, b);
}

TEST(ContentEncoder, MeanModeIsDeterministicAndSamplingIsNot) {
  ParamStore p = content_params(small_dims(), 10);
  rescale(p, 0.5, 3);
  const std::vector<std::vector<std::size_t>> doc = {{2, 3}, {4, 5, 6}};
  Graph g;
  EXPECT_EQ(encode_content(g, p, doc, LatentMode::kMean, Noise()).z.value(),
            encode_content(g, p, doc, LatentMode::kMean, Noise()).z.value());
  Rng r1(1), r2(2);
  EXPECT_NE(encode_content(g, p, doc, LatentMode::kSample, Noise(r1)).z.value(),
            encode_content(g, p, doc, LatentMode::kSample, Noise(r2)).z.value());
}

TEST(ContentEncoder, GruHalvesHaveEqualWidth) {
  EncoderDims dims = small_dims();
  ParamStore p = content_params(dims, 11);
  EXPECT_EQ(p.value("content.word_gru.fwd.Un").dim(0), dims.d / 2);
  EXPECT_EQ(p.value("content.word_gru.bwd.Un").dim(0), dims.d / 2);
  Graph g;
  Var H = bigru(g, p, "content.word_gru", embedding(g.param(p, "embed.words"), std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(H.value().dim(1), dims.d);
}

TEST(ContentEncoder, AttentionVectorsLieOnTheSimplex) {
  for (AttentionKind kind : {AttentionKind::kLinear, AttentionKind::kTanhContext}) {
    EncoderDims dims = small_dims(kind);
    ParamStore p = content_params(dims, 12);
    rescale(p, 1.0, 4);
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
      Graph g;
      ContentEncoding c = encode_content(g, p, random_article(rng, dims.vocab), LatentMode::kSample, Noise(rng));
      expect_simplex(c.attention.sentence_attn);
      for (const auto& w : c.attention.word_attn) expect_simplex(w);
    }
  }
}

TEST(ContentEncoder, GradientMatchesFiniteDifferences) {
  for (AttentionKind kind : {AttentionKind::kLinear, AttentionKind::kTanhContext}) {
    EncoderDims dims = small_dims(kind);
    ParamStore p = content_params(dims, 14);
    rescale(p, 0.4, 5);
    const std::vector<std::vector<std::size_t>> doc = {{2, 3, 4}, {5, 6, 7}};
    GraphFn fn = [&doc](Graph& g, const ParamStore& ps) {
      Rng rng(21);
      ContentEncoding c = encode_content(g, ps, doc, LatentMode::kSample, Noise(rng));
      Rng wr(22);
      return sum(mul(c.z, g.constant(Tensor::uniform(c.z.shape(), 1.0, wr))));
    };
    FdReport r = fd_check(fn, p);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric;
  }
}

TEST(TitleEncoder, GradientMatchesFiniteDifferences) {
  EncoderDims dims = small_dims();
  ParamStore p = title_params(dims, 15);
  rescale(p, 0.5, 6);
  GraphFn fn = [&dims](Graph& g, const ParamStore& ps) {
    Rng rng(23);
    TitleFeatures f = encode_title(g, ps, dims, {2, 3, 4, 5, 6, 7}, Mode::kTrain, &rng);
    Rng wr(24);
    return sum(mul(f.z, g.constant(Tensor::uniform(f.z.shape(), 1.0, wr))));
  };
  FdReport r = fd_check(fn, p);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric;
}
