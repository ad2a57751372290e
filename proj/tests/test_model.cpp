#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mvdam/selfcheck.hpp"
#include "mvdam/synth.hpp"
#include "mvdam/train.hpp"

using namespace mvdam;

namespace {

GaussianDiag gauss(std::vector<double> mu, std::vector<double> lv) {
  return {Tensor::vector(std::move(mu)), Tensor::vector(std::move(lv))};
}

GaussianDiag random_gauss(Rng& rng, std::size_t d) {
  GaussianDiag g{Tensor(Shape{d}), Tensor(Shape{d})};
  for (std::size_t j = 0; j < d; ++j) {
    g.mean[j] = rng.uniform(-2.0, 2.0);
    g.logvar[j] = rng.uniform(-1.5, 1.5);
  }
  return g;
}

double log_density(const GaussianDiag& g, const Tensor& x) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - g.mean[j];
    s += -0.5 * (std::log(2.0 * M_PI) + g.logvar[j] + diff * diff * std::exp(-g.logvar[j]));
  }
  return s;
}

ParamStore zero_discriminator(std::size_t d) {
  ParamStore p;
  p.add_zeros("disc.l1.W", Shape{d, d});
  p.add_zeros("disc.l1.b", Shape{d});
  p.add_zeros("disc.out.W", Shape{d, kNumClasses});
  p.add_zeros("disc.out.b", Shape{kNumClasses});
  return p;
}

std::vector<const EncodedArticle*> pointers(const std::vector<EncodedArticle>& v) {
  std::vector<const EncodedArticle*> out;
  for (const auto& a : v) out.push_back(&a);
  return out;
}

TrainingConfig tiny_training() {
  TrainingConfig c;
  c.embed_dim = 8;
  c.d = 8;
  c.maps = 4;
  c.epochs = 4;
  c.batch_size = 16;
  c.warmup_steps = 20;
  c.num_walks = 4;
  c.walk_len = 10;
  c.embed_epochs = 2;
  return c;
}

Corpus tiny_corpus(std::size_t n) {
  SynthSpec spec;
  spec.num_articles = n;
  spec.title_signal = 0.5;
  spec.content_signal = 0.3;
  spec.boilerplate = false;
  return synth_corpus(spec);
}

}  // namespace

TEST(Kl, HandCases) {
  EXPECT_NEAR(kl_diag_gauss(gauss({1.0}, {0.0}), GaussianDiag::standard(1)), 0.5, 1e-12);
  EXPECT_NEAR(kl_diag_gauss(gauss({0.0}, {std::log(4.0)}), GaussianDiag::standard(1)), 0.5 * (3.0 - std::log(4.0)),
              1e-12);
  EXPECT_NEAR(kl_diag_gauss(gauss({0.0}, {std::log(4.0)}), GaussianDiag::standard(1)), 0.80685, 1e-5);
  // Sum over independent coordinates.
  EXPECT_NEAR(kl_diag_gauss(gauss({1.0, 0.0}, {0.0, std::log(4.0)}), GaussianDiag::standard(2)),
              0.5 + 0.5 * (3.0 - std::log(4.0)), 1e-12);
}

TEST(Kl, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    GaussianDiag a = random_gauss(rng, 4), b = random_gauss(rng, 4);
    EXPECT_GE(kl_diag_gauss(a, b), 0.0);
    EXPECT_NEAR(kl_diag_gauss(a, a), 0.0, 1e-12);
  }
}

TEST(Kl, MatchesMonteCarlo) {
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    GaussianDiag a = random_gauss(rng, 3), b = random_gauss(rng, 3);
    Rng mc = Rng(3).fork(i);
    const int n = 200000;
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
      Tensor eps(Shape{3});
      for (double& e : eps.data()) e = mc.normal();
      Tensor x = sample_latent(a, eps);
      s += log_density(a, x) - log_density(b, x);
    }
    const double exact = kl_diag_gauss(a, b);
    EXPECT_NEAR(s / n, exact, 0.01 * exact + 1e-3);
  }
}

TEST(Kl, DimensionMismatchIsAnError) {
  EXPECT_THROW(kl_diag_gauss(GaussianDiag::standard(2), GaussianDiag::standard(3)), ValidationError);
}

TEST(Kl, GraphFormMatchesValuesAndClosedFormGradient) {
  Rng rng(4);
  ParamStore p;
  p.add("mu", Tensor::uniform(Shape{5}, 1.5, rng));
  p.add("lv", Tensor::uniform(Shape{5}, 1.5, rng));
  Graph g;
  Var kl = kl_to_standard_normal(g.param(p, "mu"), g.param(p, "lv"));
  EXPECT_NEAR(kl.item(), kl_diag_gauss({p.value("mu"), p.value("lv")}, GaussianDiag::standard(5)), 1e-12);
  TensorMap gr = grad(g, kl, p);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(gr["mu"][j], p.value("mu")[j], 1e-12);
    EXPECT_NEAR(gr["lv"][j], 0.5 * (std::exp(p.value("lv")[j]) - 1.0), 1e-12);
  }
}

TEST(Latent, Reparameterization) {
  GaussianDiag q = gauss({1.0, 2.0}, {0.0, std::log(4.0)});
  Tensor h = sample_latent(q, Tensor::vector({1.0, 0.0}));
  EXPECT_NEAR(h[0], 2.0, 1e-15);
  EXPECT_NEAR(h[1], 2.0, 1e-15);
  EXPECT_EQ(sample_latent(q, Tensor::vector({0.0, 0.0})), q.mean);
  Tensor h2 = sample_latent(q, Tensor::vector({0.0, -1.5}));
  EXPECT_NEAR(h2[1], 2.0 - 2.0 * 1.5, 1e-15);
}

TEST(Latent, ShapeMismatchIsAnError) {
  EXPECT_THROW(sample_latent(GaussianDiag::standard(2), Tensor::vector({1.0})), Error);
}

TEST(Discriminator, ZeroWeightsGiveUniform) {
  ParamStore p = zero_discriminator(4);
  for (double x : discriminate(Tensor::vector({1, -2, 3, 0.5}), p)) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Discriminator, OutputBiasSetsTheOdds) {
  ParamStore p = zero_discriminator(4);
  p.value("disc.out.b") = Tensor::vector({std::log(2.0), 0.0, 0.0});
  std::array<double, 3> pr = discriminate(Tensor::vector({1, 2, 3, 4}), p);
  EXPECT_NEAR(pr[0], 0.5, 1e-15);
  EXPECT_NEAR(pr[1], 0.25, 1e-15);
  EXPECT_NEAR(pr[2], 0.25, 1e-15);
}

TEST(InferenceNet, WidthsAndMaskedViewsAreZero) {
  ModelConfig cfg = selfcheck::micro_config();
  const std::size_t d = cfg.dims.d;
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 1);
  EXPECT_EQ(p.value("fuse.l1.W").dim(0), 3 * d);
  EXPECT_EQ(p.value("fuse.l1.W").dim(1), d);
  for (const char* n : {"fuse.l2.W", "fuse.mu.W", "fuse.logvar.W", "disc.l1.W"}) {
    EXPECT_EQ(p.value(n).dim(0), d) << n;
    EXPECT_EQ(p.value(n).dim(1), d) << n;
  }
  Rng rng(2);
  ViewVectors v{Tensor::uniform(Shape{d}, 1.0, rng), Tensor::uniform(Shape{d}, 1.0, rng),
                Tensor::uniform(Shape{d}, 1.0, rng)};
  ViewVectors blanked = v;
  blanked.network = Tensor(Shape{d});
  const ViewMask no_net{true, false, true};
  GaussianDiag a = infer_posterior(v, p, no_net), b = infer_posterior(blanked, p, ViewMask{});
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.logvar, b.logvar);
  EXPECT_EQ(a.dim(), d);
  EXPECT_THROW(infer_posterior(ViewVectors{Tensor(Shape{d + 1}), v.network, v.content}, p, ViewMask{}),
               ValidationError);
}

TEST(Loss, ZeroDiscriminatorGivesLogThree) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 2);
  for (const char* n : {"disc.l1.W", "disc.l1.b", "disc.out.W", "disc.out.b"}) p.value(n).fill(0.0);
  const std::vector<EncodedArticle> batch = selfcheck::micro_batch(cfg.dims.d);
  Rng r1(3), r2(3);
  Graph g1, g2;
  LossParts plain = batch_loss(g1, p, cfg, pointers(batch), 0.0, r1);
  EXPECT_NEAR(plain.nll, std::log(3.0), 1e-12);
  EXPECT_NEAR(plain.total.item(), plain.nll, 1e-15);
  LossParts reg = batch_loss(g2, p, cfg, pointers(batch), 0.25, r2);
  EXPECT_GT(reg.kl, 0.0);
  EXPECT_NEAR(reg.total.item(), reg.nll + 0.25 * reg.kl, 1e-12);
}

TEST(Loss, DirectModeHasNoKlTerm) {
  ModelConfig cfg = selfcheck::micro_config({false, true, false});
  cfg.direct = true;
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 3);
  EXPECT_FALSE(p.contains("fuse.l1.W"));
  const std::vector<EncodedArticle> batch = selfcheck::micro_batch(cfg.dims.d);
  Rng rng(4);
  Graph g;
  LossParts lp = batch_loss(g, p, cfg, pointers(batch), 1.0, rng);
  EXPECT_EQ(lp.kl, 0.0);
  EXPECT_NEAR(lp.total.item(), lp.nll, 1e-15);
}

TEST(Loss, MaskedViewGetsNoGradient) {
  ModelConfig cfg = selfcheck::micro_config({true, true, false});
  const std::size_t d = cfg.dims.d;
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 4);
  EXPECT_FALSE(p.contains("content.sent_gru.fwd.Un"));
  const std::vector<EncodedArticle> batch = selfcheck::micro_batch(d);
  Rng rng(5);
  Graph g;
  TensorMap gr = grad(g, batch_loss(g, p, cfg, pointers(batch), 1.0, rng).total, p);
  const Tensor& w = gr.at("fuse.l1.W");
  double title_block = 0.0;
  for (std::size_t r = 0; r < 3 * d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      if (r >= 2 * d) EXPECT_EQ(w.at(r, c), 0.0);
      else if (r < d) title_block += std::abs(w.at(r, c));
    }
  EXPECT_GT(title_block, 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.4, 5);
  FdReport r = selfcheck::loss_check(cfg, p, 1.0);
  EXPECT_EQ(r.checked, p.num_scalars());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs "
                                   << r.worst_numeric;
}

TEST(Loss, UnlabeledOrEmptyBatchIsAnError) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 6);
  std::vector<EncodedArticle> batch = selfcheck::micro_batch(cfg.dims.d);
  batch[1].label.reset();
  Rng rng(1);
  Graph g;
  EXPECT_THROW(batch_loss(g, p, cfg, pointers(batch), 1.0, rng), ValidationError);
  EXPECT_THROW(batch_loss(g, p, cfg, {}, 1.0, rng), ValidationError);
}

TEST(Forward, TrainingNeedsAnRng) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 7);
  Graph g;
  EXPECT_THROW(forward(g, p, cfg, selfcheck::micro_batch(cfg.dims.d)[0], Mode::kTrain, nullptr), ValidationError);
}

TEST(Forward, MissingViewInputIsAnError) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 8);
  EncodedArticle a = selfcheck::micro_batch(cfg.dims.d)[0];
  a.sentences.clear();
  EXPECT_THROW(predict(a, p, cfg), ValidationError);
  a = selfcheck::micro_batch(cfg.dims.d)[0];
  a.z_network = Tensor(Shape{cfg.dims.d + 2});
  EXPECT_THROW(predict(a, p, cfg), ValidationError);
}

TEST(Predict, DeterministicAndNormalized) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 9);
  for (const EncodedArticle& a : selfcheck::micro_batch(cfg.dims.d)) {
    PredictionRecord r1 = predict(a, p, cfg), r2 = predict(a, p, cfg);
    EXPECT_EQ(r1.probs, r2.probs);
    EXPECT_NEAR(r1.probs[0] + r1.probs[1] + r1.probs[2], 1.0, 1e-12);
    EXPECT_EQ(r1.predicted, argmax_class(r1.probs));
    EXPECT_EQ(r1.attention.sentence_attn.size(), a.sentences.size());
    EXPECT_EQ(r1.gold, a.label);
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg = selfcheck::micro_config();
  cfg.direct = true;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = selfcheck::micro_config();
  cfg.dims.d = 5;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(ViewMask, ParseAndPrint) {
  EXPECT_EQ(ViewMask::parse("title,network,content"), ViewMask{});
  EXPECT_EQ(ViewMask::parse("content,title"), (ViewMask{true, false, true}));
  EXPECT_EQ(ViewMask::parse("network").str(), "network");
  EXPECT_EQ(ViewMask::parse(ViewMask{true, false, true}.str()), (ViewMask{true, false, true}));
  EXPECT_THROW(ViewMask::parse("title,image"), ValidationError);
  EXPECT_THROW(ViewMask::parse(""), ValidationError);
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 10);
  TrainingConfig tc;
  tc.epochs = 0;
  const auto data = selfcheck::micro_batch(cfg.dims.d);
  TrainResult r = train(cfg, p, data, data, tc);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.params.values(), p.values());
}

TEST(Train, RejectsEmptyOrUnlabeledTrainingData) {
  ModelConfig cfg = selfcheck::micro_config();
  ParamStore p = selfcheck::micro_params(cfg, 0.5, 11);
  TrainingConfig tc;
  EXPECT_THROW(train(cfg, p, {}, {}, tc), ValidationError);
  auto data = selfcheck::micro_batch(cfg.dims.d);
  data[0].label.reset();
  EXPECT_THROW(train(cfg, p, data, {}, tc), ValidationError);
}

TEST(Train, LossDecreasesOnPlantedData) {
  Splits s = split(tiny_corpus(360), {0.75, 0.125, 0.125}, 1);
  FitResult r = fit(s.train, s.valid, tiny_training());
  ASSERT_GE(r.training.log.size(), 2u);
  EXPECT_LT(r.training.log.back().loss, r.training.log.front().loss);
  EXPECT_GT(r.training.best_val_f1, 0.5);
  EXPECT_GE(r.training.best_epoch, 1u);
}

TEST(Train, SameSeedSameLog) {
  Splits s = split(tiny_corpus(240), {0.75, 0.125, 0.125}, 2);
  TrainingConfig tc = tiny_training();
  tc.epochs = 2;
  FitResult a = fit(s.train, s.valid, tc), b = fit(s.train, s.valid, tc);
  std::ostringstream la, lb;
  write_training_log(la, a.training.log);
  write_training_log(lb, b.training.log);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.model.params.values(), b.model.params.values());
}

TEST(Bundle, SaveLoadGivesIdenticalPredictions) {
  Splits s = split(tiny_corpus(240), {0.75, 0.125, 0.125}, 3);
  TrainingConfig tc = tiny_training();
  tc.epochs = 1;
  FitResult r = fit(s.train, s.valid, tc);
  const std::string dir = (std::filesystem::temp_directory_path() / "mvdam_bundle_test").string();
  std::filesystem::remove_all(dir);
  r.model.save(dir);
  ModelBundle back = ModelBundle::load(dir);
  EXPECT_EQ(back.config.str(), r.model.config.str());
  EXPECT_EQ(back.params.values(), r.model.params.values());
  auto pa = predict_all(r.model.encode(s.test), r.model.params, r.model.model_config());
  auto pb = predict_all(back.encode(s.test), back.params, back.model_config());
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].probs, pb[i].probs);
  std::filesystem::remove_all(dir);
}

TEST(Gradcheck, EveryModulePasses) {
  auto results = selfcheck::gradcheck_suite();
  EXPECT_EQ(results.size(), 6u);
  for (const auto& r : results) {
    EXPECT_GT(r.report.checked, 0u) << r.module;
    EXPECT_LT(r.report.max_rel_error, selfcheck::kGradTolerance) << r.module << " " << r.report.worst_param;
  }
}
