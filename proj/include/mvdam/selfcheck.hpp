#pragma once

// Finite-difference checks of every trainable piece on tiny inputs. Shared by
// the `gradcheck` command and the test suite.

#include <string>
#include <vector>

#include "mvdam/gradcheck.hpp"
#include "mvdam/graphembed.hpp"
#include "mvdam/model.hpp"
#include "mvdam/report.hpp"

namespace mvdam::selfcheck {

inline ModelConfig micro_config(ViewMask views = {}, AttentionKind attention = AttentionKind::kLinear) {
  ModelConfig m;
  m.dims.vocab = 12;
  m.dims.embed = 4;
  m.dims.d = 6;
  m.dims.maps = 3;
  m.dims.attention = attention;
  m.views = views;
  return m;
}

inline std::vector<EncodedArticle> micro_batch(std::size_t d) {
  Rng rng(31);
  std::vector<EncodedArticle> out;
  for (std::size_t i = 0; i < 3; ++i) {
    EncodedArticle a;
    a.id = "m" + std::to_string(i);
    a.source = "s" + std::to_string(i);
    a.title = {2 + i, 3 + i, 4 + i, 5 + i, 6 + i};
    a.sentences = {{2 + i, 7, 8}, {9, 10 - i}};
    a.z_network = Tensor::uniform(Shape{d}, 1.0, rng);
    a.label = ideology_from_index(i);
    out.push_back(std::move(a));
  }
  return out;
}

// Every parameter redrawn from N(0, s^2).
inline void redraw(ParamStore& p, double s, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(9);
  for (auto& [name, slot] : p)
    for (double& x : slot.value.data()) x = s * rng.normal();
}

inline ParamStore micro_params(const ModelConfig& cfg, double s, std::uint64_t seed) {
  Rng init(seed);
  ParamStore p = init_params(cfg, init);
  redraw(p, s, seed);
  return p;
}

// J on the micro batch with fixed dropout masks and noise.
inline FdReport loss_check(const ModelConfig& cfg, ParamStore& p, double lambda) {
  const std::vector<EncodedArticle> batch = micro_batch(cfg.dims.d);
  std::vector<const EncodedArticle*> ptrs;
  for (const auto& a : batch) ptrs.push_back(&a);
  GraphFn fn = [&](Graph& g, const ParamStore& ps) {
    Rng rng(41);
    return batch_loss(g, ps, cfg, ptrs, lambda, rng).total;
  };
  return fd_check(fn, p);
}

// Random projection of an encoder output, so every output unit matters.
inline Var project(Graph& g, Var z, std::uint64_t seed) {
  Rng wr(seed);
  return sum(mul(z, g.constant(Tensor::uniform(z.shape(), 1.0, wr))));
}

inline FdReport title_check(double s, std::uint64_t seed) {
  const ModelConfig cfg = micro_config({true, false, false});
  ParamStore p;
  Rng init(seed);
  init_word_embedding(p, cfg.dims, init);
  init_title_encoder(p, cfg.dims, init);
  redraw(p, s, seed);
  GraphFn fn = [&cfg](Graph& g, const ParamStore& ps) {
    Rng rng(23);
    return project(g, encode_title(g, ps, cfg.dims, {2, 3, 4, 5, 6, 7}, Mode::kTrain, &rng).z, 24);
  };
  return fd_check(fn, p);
}

inline FdReport content_check(AttentionKind kind, double s, std::uint64_t seed) {
  const ModelConfig cfg = micro_config({false, false, true}, kind);
  ParamStore p;
  Rng init(seed);
  init_word_embedding(p, cfg.dims, init);
  init_content_encoder(p, cfg.dims, init);
  redraw(p, s, seed);
  GraphFn fn = [](Graph& g, const ParamStore& ps) {
    Rng rng(21);
    ContentEncoding c = encode_content(g, ps, {{2, 3, 4}, {5, 6, 7}}, LatentMode::kSample, Noise(rng));
    return project(g, c.z, 22);
  };
  return fd_check(fn, p);
}

// Negative-sampling pair objective against its hand-written gradient.
inline FdReport skipgram_check(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  p.add("sgns.in", Tensor::uniform(Shape{5, 4}, 1.0, rng));
  p.add("sgns.out", Tensor::uniform(Shape{5, 4}, 1.0, rng));
  const std::vector<std::size_t> negs = {2, 4, 2};
  const std::size_t center = 0, context = 1;
  PairObjective obj = neg_sampling_objective(p.value("sgns.in"), p.value("sgns.out"), center, context, negs);
  TensorMap analytic{{"sgns.in", Tensor(Shape{5, 4})}, {"sgns.out", Tensor(Shape{5, 4})}};
  for (std::size_t j = 0; j < 4; ++j) analytic["sgns.in"].at(center, j) = obj.grad_in[j];
  std::vector<std::size_t> targets{context};
  targets.insert(targets.end(), negs.begin(), negs.end());
  for (std::size_t k = 0; k < targets.size(); ++k)
    for (std::size_t j = 0; j < 4; ++j) analytic["sgns.out"].at(targets[k], j) += obj.grad_out[k][j];
  ValueFn fn = [&](const ParamStore& ps) {
    return neg_sampling_objective(ps.value("sgns.in"), ps.value("sgns.out"), center, context, negs).value;
  };
  return fd_compare(analytic, fn, p);
}

struct CheckResult {
  std::string module;
  FdReport report;
  double seconds = 0.0;
};

inline constexpr double kGradTolerance = 1e-4;

// Micro-inputs sit where no gradient entry is small enough for roundoff in
// the central difference to dominate the relative error.
inline std::vector<CheckResult> gradcheck_suite() {
  std::vector<CheckResult> out;
  auto run = [&out](std::string name, auto&& fn) {
    Stopwatch clock;
    FdReport r = fn();
    out.push_back({std::move(name), r, clock.seconds()});
  };
  run("title_encoder", [] { return title_check(0.5, 3); });
  run("content_encoder/linear", [] { return content_check(AttentionKind::kLinear, 0.4, 2); });
  run("content_encoder/tanh_context", [] { return content_check(AttentionKind::kTanhContext, 0.4, 2); });
  run("skipgram", [] { return skipgram_check(4); });
  run("loss/direct_network", [] {
    ModelConfig cfg = micro_config({false, true, false});
    cfg.direct = true;
    ParamStore p = micro_params(cfg, 0.5, 2);
    return loss_check(cfg, p, 1.0);
  });
  run("loss/full", [] {
    ModelConfig cfg = micro_config();
    ParamStore p = micro_params(cfg, 0.4, 5);
    return loss_check(cfg, p, 1.0);
  });
  return out;
}

}  // namespace mvdam::selfcheck
