#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "homophily.hpp"
#include "mvdam/corpus.hpp"
#include "mvdam/graphembed.hpp"

using namespace mvdam;

namespace {

Article linking(std::string id, std::string source, std::vector<std::string> links) {
  Article a;
  a.id = std::move(id);
  a.source = std::move(source);
  a.title = {"t"};
  a.sentences = {{"s"}};
  a.links = std::move(links);
  return a;
}

SourceGraph path_abc() {
  SourceGraph g;
  g.add_node("a");
  g.add_node("b");
  g.add_node("c");
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 1.0);
  return g;
}

EmbeddingMatrix two_rows(std::vector<double> a, std::vector<double> b) {
  std::vector<double> v = a;
  v.insert(v.end(), b.begin(), b.end());
  return EmbeddingMatrix({"x.com", "y.com"}, Tensor::matrix(2, a.size(), v));
}

}  // namespace

TEST(BuildGraph, CountsArticlesPerEdge) {
  Corpus c({linking("1", "a", {"b"}), linking("2", "a", {"b", "b"}), linking("3", "b", {})});
  SourceGraph g = build_graph(c);
  EXPECT_DOUBLE_EQ(g.weight(*g.find("a"), *g.find("b")), 2.0);
  EXPECT_EQ(g.num_edges(), 1u);
}

TEST(BuildGraph, NoLinksMeansNoEdges) {
  SourceGraph g = build_graph(Corpus({linking("1", "a", {}), linking("2", "b", {})}));
  EXPECT_EQ(g.num_nodes(), 2u);
  EXPECT_EQ(g.num_edges(), 0u);
}

TEST(BuildGraph, SelfLinksNeverBecomeEdges) {
  SourceGraph g = build_graph(Corpus({linking("1", "a", {"a", "x.org"})}));
  EXPECT_FALSE(g.has_edge(*g.find("a"), *g.find("a")));
  EXPECT_TRUE(g.has_edge(*g.find("a"), *g.find("x.org")));
}

TEST(BuildGraph, TsvRoundTrip) {
  SourceGraph g = build_graph(Corpus({linking("1", "a", {"b", "c"}), linking("2", "b", {"c"})}));
  std::stringstream ss;
  g.save_tsv(ss);
  SourceGraph back = SourceGraph::load_tsv(ss);
  EXPECT_EQ(back.num_edges(), g.num_edges());
  EXPECT_DOUBLE_EQ(back.weight(*back.find("a"), *back.find("c")), 1.0);
}

TEST(Walks, ForcedPath) {
  SourceGraph g = path_abc();
  Rng rng(1);
  EXPECT_EQ(walk_from(g, 0, 3, 1.0, 1.0, rng), (Walk{0, 1, 2}));
}

TEST(Walks, IsolatedNodeStops) {
  SourceGraph g;
  g.add_node("solo");
  Rng rng(1);
  EXPECT_EQ(walk_from(g, 0, 10, 1.0, 1.0, rng), (Walk{0}));
}

TEST(Walks, StepsFollowEdgesAndRespectLength) {
  fixtures::BlockGraph b = fixtures::two_cliques(5);
  WalkSet ws = random_walks(b.graph, {.num_walks = 3, .walk_len = 7}, Rng(3));
  EXPECT_EQ(ws.size(), 30u);
  for (const Walk& w : ws) {
    EXPECT_LE(w.size(), 7u);
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_TRUE(b.graph.has_edge(w[i - 1], w[i]));
  }
}

TEST(Walks, EmptyGraphIsAnError) { EXPECT_THROW(random_walks(SourceGraph{}, {}, Rng(0)), ValidationError); }

TEST(Walks, TransitionProbabilitiesMatchHandWeights) {
  // prev = 0, cur = 1; 1 -> {0, 2, 3}; 0 -> 2 exists, 0 -> 3 does not.
  SourceGraph g;
  for (const char* n : {"0", "1", "2", "3"}) g.add_node(n);
  g.add_edge(0, 1, 1.0);
  g.add_edge(0, 2, 1.0);
  g.add_edge(1, 0, 1.0);
  g.add_edge(1, 2, 2.0);
  g.add_edge(1, 3, 1.0);
  const double p = 0.5, q = 4.0;
  std::vector<double> pr = transition_probs(g, 0, 1, p, q);
  const double w0 = 1.0 / p, w2 = 2.0, w3 = 1.0 / q, z = w0 + w2 + w3;
  EXPECT_NEAR(pr[0], w0 / z, 1e-15);
  EXPECT_NEAR(pr[1], w2 / z, 1e-15);
  EXPECT_NEAR(pr[2], w3 / z, 1e-15);
  for (std::size_t u = 0; u < 4; ++u) {
    if (g.out_edges(u).empty()) continue;
    for (std::optional<std::size_t> prev : {std::optional<std::size_t>{}, std::optional<std::size_t>{0}}) {
      double s = 0.0;
      for (double x : transition_probs(g, prev, u, p, q)) s += x;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Walks, DeterministicAndThreadIndependent) {
  fixtures::BlockGraph b = fixtures::two_cliques(6);
  WalkSet a = random_walks(b.graph, {.threads = 1}, Rng(9));
  WalkSet c = random_walks(b.graph, {.threads = 4}, Rng(9));
  EXPECT_EQ(a, c);
  EXPECT_EQ(train_embeddings(b.graph, a, {.dim = 8}, Rng(2)).table,
            train_embeddings(b.graph, c, {.dim = 8}, Rng(2)).table);
}

TEST(SkipGram, NegativeSamplingGradientMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor in = Tensor::uniform(Shape{4, 3}, 1.0, rng), out = Tensor::uniform(Shape{4, 3}, 1.0, rng);
  const std::vector<std::size_t> negs = {2, 3, 2};
  PairObjective obj = neg_sampling_objective(in, out, 0, 1, negs);
  const double h = 1e-6;
  auto value = [&] { return neg_sampling_objective(in, out, 0, 1, negs).value; };
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-12}); };
  double worst = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double x = in.at(0, j);
    in.at(0, j) = x + h;
    const double fp = value();
    in.at(0, j) = x - h;
    const double fm = value();
    in.at(0, j) = x;
    worst = std::max(worst, rel(obj.grad_in[j], (fp - fm) / (2 * h)));
  }
  // Output rows: context 1 and negatives {2, 3}; row 2 appears twice.
  std::map<std::size_t, std::vector<double>> total;
  const std::vector<std::size_t> targets = {1, 2, 3, 2};
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto& t = total[targets[k]];
    t.resize(3, 0.0);
    for (std::size_t j = 0; j < 3; ++j) t[j] += obj.grad_out[k][j];
  }
  for (const auto& [row, g] : total)
    for (std::size_t j = 0; j < 3; ++j) {
      const double x = out.at(row, j);
      out.at(row, j) = x + h;
      const double fp = value();
      out.at(row, j) = x - h;
      const double fm = value();
      out.at(row, j) = x;
      worst = std::max(worst, rel(g[j], (fp - fm) / (2 * h)));
    }
  EXPECT_LT(worst, 1e-6);
}

TEST(SkipGram, RepeatedPairProbabilityIncreases) {
  WalkSet walks(20, Walk{0, 1});
  std::vector<double> trace;
  EmbedOptions opt{.dim = 4, .window = 1, .negatives = 0, .epochs = 10};
  train_skipgram(walks, 2, opt, Rng(1), [&trace](std::size_t, const SkipGramModel& m) {
    double dot = 0.0;
    for (std::size_t j = 0; j < m.in.dim(1); ++j) dot += m.in.at(0, j) * m.out.at(1, j);
    trace.push_back(sigmoid(dot));
  });
  ASSERT_EQ(trace.size(), 10u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GT(trace[i], trace[i - 1]);
}

TEST(SkipGram, ZeroWindowIsAnError) {
  EXPECT_THROW(train_skipgram(WalkSet{{0, 1}}, 2, {.window = 0}, Rng(1)), ValidationError);
}

TEST(SkipGram, TwoCliquesSeparate) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    fixtures::CosineSplit s = fixtures::embed_and_compare(fixtures::two_cliques(15), 16, seed);
    wins += s.intra > s.inter;
  }
  EXPECT_GE(wins, 4);
}

TEST(NetworkRepr, MeanOfLinkEmbeddings) {
  EmbeddingMatrix f = two_rows({1, 0}, {0, 1});
  Tensor one = article_network_repr(linking("1", "s", {"x.com"}), f);
  EXPECT_EQ(one.values(), (std::vector<double>{1, 0}));
  Tensor two = article_network_repr(linking("1", "s", {"x.com", "y.com"}), f);
  EXPECT_EQ(two.values(), (std::vector<double>{0.5, 0.5}));
  Tensor none = article_network_repr(linking("1", "s", {}), f);
  EXPECT_EQ(none.values(), (std::vector<double>{0, 0}));
  Tensor unknown = article_network_repr(linking("1", "s", {"z.com"}), f);
  EXPECT_EQ(unknown.values(), (std::vector<double>{0, 0}));
}

TEST(NetworkRepr, PermutationInvariantAndInsideTheHull) {
  Rng rng(5);
  std::vector<std::string> names;
  for (int i = 0; i < 6; ++i) names.push_back("d" + std::to_string(i));
  EmbeddingMatrix f(names, Tensor::uniform(Shape{6, 3}, 1.0, rng));
  std::vector<std::string> links = {"d0", "d3", "d5", "d1"};
  Tensor a = article_network_repr(linking("1", "s", links), f);
  std::reverse(links.begin(), links.end());
  Tensor b = article_network_repr(linking("1", "s", links), f);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(a[k], b[k], 1e-15);
    double lo = 1e9, hi = -1e9;
    for (const auto& l : links) {
      lo = std::min(lo, f.table.at(*f.find(l), k));
      hi = std::max(hi, f.table.at(*f.find(l), k));
    }
    EXPECT_GE(a[k], lo - 1e-15);
    EXPECT_LE(a[k], hi + 1e-15);
  }
}
