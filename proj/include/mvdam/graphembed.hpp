#pragma once

// Inter-source hyperlink graph, node2vec walks and skip-gram embeddings.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mvdam/checkpoint.hpp"
#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"
#include "mvdam/tensor.hpp"

namespace mvdam {

// Weighted directed graph over domains. Edge (u, v) counts the u-articles
// linking to v.
class SourceGraph {
 public:
  struct Edge {
    std::size_t to;
    double weight;
  };

  std::size_t add_node(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    index_.emplace(name, names_.size());
    names_.push_back(name);
    out_.emplace_back();
    return names_.size() - 1;
  }

  void add_edge(std::size_t u, std::size_t v, double w) {
    if (u == v) throw ValidationError("SourceGraph: self-loop on " + names_[u]);
    for (Edge& e : out_[u])
      if (e.to == v) {
        e.weight += w;
        return;
      }
    out_[u].push_back({v, w});
  }

  std::size_t num_nodes() const { return names_.size(); }
  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& o : out_) n += o.size();
    return n;
  }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::vector<Edge>& out_edges(std::size_t u) const { return out_[u]; }

  double weight(std::size_t u, std::size_t v) const {
    for (const Edge& e : out_[u])
      if (e.to == v) return e.weight;
    return 0.0;
  }
  bool has_edge(std::size_t u, std::size_t v) const { return weight(u, v) > 0.0; }

  // TSV edge list: src<TAB>dst<TAB>weight, sorted by (src, dst) name.
  void save_tsv(std::ostream& os) const {
    std::vector<std::tuple<std::string, std::string, double>> rows;
    for (std::size_t u = 0; u < names_.size(); ++u)
      for (const Edge& e : out_[u]) rows.emplace_back(names_[u], names_[e.to], e.weight);
    std::sort(rows.begin(), rows.end());
    for (const auto& [s, d, w] : rows) os << s << '\t' << d << '\t' << w << '\n';
  }

  static SourceGraph load_tsv(std::istream& is) {
    SourceGraph g;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string s, d, w;
      if (!std::getline(ls, s, '\t') || !std::getline(ls, d, '\t') || !std::getline(ls, w))
        throw ValidationError("graph TSV line " + std::to_string(n) + ": expected 3 fields");
      double weight = std::stod(w);
      if (!(weight >= 1.0)) throw ValidationError("graph TSV line " + std::to_string(n) + ": weight < 1");
      std::size_t u = g.add_node(s), v = g.add_node(d);
      g.add_edge(u, v, weight);
    }
    return g;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<Edge>> out_;
};

// Nodes: every corpus source (sorted) followed by every other linked domain
// (sorted). Self-links are ignored; cleaning normally removes them already.
inline SourceGraph build_graph(const Corpus& corpus) {
  SourceGraph g;
  for (const auto& s : corpus.sources()) g.add_node(s);
  std::set<std::string> external;
  for (const Article& a : corpus)
    for (const auto& l : a.links)
      if (!corpus.sources().count(l)) external.insert(l);
  for (const auto& e : external) g.add_node(e);
  for (const Article& a : corpus) {
    const std::size_t u = *g.find(a.source);
    std::set<std::string> targets(a.links.begin(), a.links.end());
    for (const auto& l : targets) {
      if (l == a.source) continue;
      g.add_edge(u, *g.find(l), 1.0);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// node2vec walks.

using Walk = std::vector<std::size_t>;
using WalkSet = std::vector<Walk>;

struct WalkOptions {
  std::size_t num_walks = 10;
  std::size_t walk_len = 20;
  double p = 1.0;  // return parameter
  double q = 1.0;  // in-out parameter
  std::size_t threads = 1;
};

// Unnormalised second-order transition weights out of `cur`, having arrived
// from `prev` (nullopt for the first step): edge weight times 1/p for a
// return to prev, 1 for a node prev links to, 1/q otherwise.
inline std::vector<double> transition_weights(const SourceGraph& g, std::optional<std::size_t> prev,
                                              std::size_t cur, double p, double q) {
  const auto& edges = g.out_edges(cur);
  std::vector<double> w(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    double bias = 1.0;
    if (prev) {
      if (edges[i].to == *prev) bias = 1.0 / p;
      else if (g.has_edge(*prev, edges[i].to)) bias = 1.0;
      else bias = 1.0 / q;
    }
    w[i] = edges[i].weight * bias;
  }
  return w;
}

inline std::vector<double> transition_probs(const SourceGraph& g, std::optional<std::size_t> prev,
                                            std::size_t cur, double p, double q) {
  std::vector<double> w = transition_weights(g, prev, cur, p, q);
  double z = 0.0;
  for (double x : w) z += x;
  if (z > 0.0)
    for (double& x : w) x /= z;
  return w;
}

inline Walk walk_from(const SourceGraph& g, std::size_t start, std::size_t len, double p, double q,
                      Rng& rng) {
  Walk w{start};
  std::optional<std::size_t> prev;
  while (w.size() < len) {
    const std::size_t cur = w.back();
    const auto& edges = g.out_edges(cur);
    if (edges.empty()) break;  // sink
    std::vector<double> tw = transition_weights(g, prev, cur, p, q);
    const std::size_t next = edges[rng.categorical(tw)].to;
    prev = cur;
    w.push_back(next);
  }
  return w;
}

// num_walks walks from every node; walk r of node u uses its own rng stream,
// so the result does not depend on the thread count.
inline WalkSet random_walks(const SourceGraph& g, const WalkOptions& opt, const Rng& rng) {
  if (g.num_nodes() == 0) throw ValidationError("random_walks: empty graph");
  if (opt.num_walks < 1 || opt.walk_len < 1) throw ValidationError("random_walks: counts must be >= 1");
  if (!(opt.p > 0.0) || !(opt.q > 0.0)) throw ValidationError("random_walks: p and q must be positive");
  const std::size_t V = g.num_nodes();
  WalkSet walks(opt.num_walks * V);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u)
      for (std::size_t r = 0; r < opt.num_walks; ++r) {
        Rng stream = rng.fork(u * opt.num_walks + r);
        walks[r * V + u] = walk_from(g, u, opt.walk_len, opt.p, opt.q, stream);
      }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, V));
  if (threads == 1) {
    work(0, V);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (V + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(V, t * chunk), std::min(V, (t + 1) * chunk));
  }
  return walks;
}

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling.

// Row u holds F(u) for node u of `names`.
struct EmbeddingMatrix {
  std::vector<std::string> names;
  Tensor table;  // [V, d]
  std::unordered_map<std::string, std::size_t> index;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> n, Tensor t) : names(std::move(n)), table(std::move(t)) {
    if (table.rank() != 2 || table.dim(0) != names.size())
      throw ValidationError("EmbeddingMatrix: table rows must match node names");
    for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);
  }

  std::size_t dim() const { return table.rank() == 2 ? table.dim(1) : 0; }
  std::size_t rows() const { return names.size(); }
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  double cosine(std::size_t a, std::size_t b) const {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < dim(); ++k) {
      ab += table.at(a, k) * table.at(b, k);
      aa += table.at(a, k) * table.at(a, k);
      bb += table.at(b, k) * table.at(b, k);
    }
    return ab / std::sqrt(std::max(aa * bb, 1e-300));
  }

  // MVDM1 container keyed net.F plus a sidecar node list (one name per line).
  void save(const std::string& ckpt_path, const std::string& nodes_path) const {
    save_checkpoint(ckpt_path, TensorMap{{"net.F", table}});
    std::ofstream os(nodes_path);
    if (!os) throw Error("cannot open " + nodes_path + " for writing");
    for (const auto& n : names) os << n << '\n';
  }

  static EmbeddingMatrix load(const std::string& ckpt_path, const std::string& nodes_path) {
    TensorMap m = load_checkpoint(ckpt_path);
    auto it = m.find("net.F");
    if (it == m.end()) throw Error(ckpt_path + " has no net.F tensor");
    std::ifstream is(nodes_path);
    if (!is) throw Error("cannot open " + nodes_path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) names.push_back(line);
    return EmbeddingMatrix(std::move(names), it->second);
  }
};

struct EmbedOptions {
  std::size_t dim = 128;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double lr = 0.025;
  double noise_power = 0.75;
};

// Log-likelihood of one (center, context) pair under negative sampling,
//   log s(F(c).G(o)) + sum_k log s(-F(c).G(n_k)),
// with its gradient w.r.t. F(c), G(o) and each G(n_k). `grad_in` has the
// shape of F(c); `grad_out` is one row per entry of {context, negatives...}.
struct PairObjective {
  double value = 0.0;
  std::vector<double> grad_in;
  std::vector<std::vector<double>> grad_out;
};

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline PairObjective neg_sampling_objective(const Tensor& in, const Tensor& out, std::size_t center,
                                            std::size_t context,
                                            std::span<const std::size_t> negatives) {
  const std::size_t d = in.dim(1);
  PairObjective r;
  r.grad_in.assign(d, 0.0);
  std::vector<std::size_t> targets{context};
  targets.insert(targets.end(), negatives.begin(), negatives.end());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double label = k == 0 ? 1.0 : 0.0;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += in.at(center, j) * out.at(targets[k], j);
    r.value += k == 0 ? log_sigmoid(dot) : log_sigmoid(-dot);
    const double g = label - sigmoid(dot);  // d value / d dot
    std::vector<double> go(d);
    for (std::size_t j = 0; j < d; ++j) {
      r.grad_in[j] += g * out.at(targets[k], j);
      go[j] = g * in.at(center, j);
    }
    r.grad_out.push_back(std::move(go));
  }
  return r;
}

struct SkipGramModel {
  Tensor in;   // F, [V, d]
  Tensor out;  // context vectors, [V, d]
};

// Stochastic gradient ascent over every (center, context) pair within
// `window` positions in each walk, negatives drawn from the unigram^0.75
// distribution of walk tokens. Learning rate decays linearly to 1e-4 * lr.
// Single-threaded and deterministic for a fixed rng.
inline SkipGramModel train_skipgram(const WalkSet& walks, std::size_t num_nodes, const EmbedOptions& opt,
                                    const Rng& seed_rng,
                                    const std::function<void(std::size_t, const SkipGramModel&)>& on_epoch = {}) {
  if (walks.empty()) throw ValidationError("train_embeddings: no walks");
  if (opt.dim < 1) throw ValidationError("train_embeddings: dimension must be >= 1");
  if (opt.window == 0) throw ValidationError("train_embeddings: window must be >= 1");
  Rng rng = seed_rng.fork(0xE3B);
  const std::size_t d = opt.dim;
  SkipGramModel m{Tensor::uniform(Shape{num_nodes, d}, 0.5 / static_cast<double>(d), rng),
                  Tensor(Shape{num_nodes, d})};

  std::vector<double> noise(num_nodes, 0.0);
  std::size_t total_pairs = 0;
  for (const Walk& w : walks) {
    for (std::size_t v : w) {
      if (v >= num_nodes) throw ValidationError("train_embeddings: walk node out of range");
      noise[v] += 1.0;
    }
    for (std::size_t i = 0; i < w.size(); ++i)
      total_pairs += std::min(i, opt.window) + std::min(w.size() - 1 - i, opt.window);
  }
  std::vector<double> cdf(num_nodes);
  double acc = 0.0;
  for (std::size_t v = 0; v < num_nodes; ++v) cdf[v] = (acc += std::pow(noise[v], opt.noise_power));
  auto draw_noise = [&]() {
    const double r = rng.uniform() * acc;
    return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()) %
           num_nodes;
  };

  const double steps = static_cast<double>(std::max<std::size_t>(1, total_pairs * opt.epochs));
  std::size_t step = 0;
  std::vector<std::size_t> negs(opt.negatives);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const Walk& w : walks) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t lo = i >= opt.window ? i - opt.window : 0;
        const std::size_t hi = std::min(w.size() - 1, i + opt.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const double lr = opt.lr * std::max(1e-4, 1.0 - static_cast<double>(step++) / steps);
          const std::size_t center = w[i], context = w[j];
          std::size_t kept = 0;
          for (std::size_t k = 0; k < opt.negatives; ++k) {
            std::size_t n = draw_noise();
            if (n != context) negs[kept++] = n;
          }
          PairObjective obj =
              neg_sampling_objective(m.in, m.out, center, context, std::span(negs.data(), kept));
          for (std::size_t k = 0; k <= kept; ++k) {
            const std::size_t t = k == 0 ? context : negs[k - 1];
            for (std::size_t c = 0; c < d; ++c) m.out.at(t, c) += lr * obj.grad_out[k][c];
          }
          for (std::size_t c = 0; c < d; ++c) m.in.at(center, c) += lr * obj.grad_in[c];
        }
      }
    }
    if (on_epoch) on_epoch(epoch, m);
  }
  return m;
}

inline EmbeddingMatrix train_embeddings(const SourceGraph& g, const WalkSet& walks,
                                        const EmbedOptions& opt, const Rng& rng) {
  SkipGramModel m = train_skipgram(walks, g.num_nodes(), opt, rng);
  return EmbeddingMatrix(g.names(), std::move(m.in));
}

// Walks + skip-gram in one call.
inline EmbeddingMatrix embed_graph(const SourceGraph& g, const WalkOptions& walk_opt,
                                   const EmbedOptions& embed_opt, const Rng& rng) {
  WalkSet walks = random_walks(g, walk_opt, rng.fork(1));
  return train_embeddings(g, walks, embed_opt, rng.fork(2));
}

// z_network: mean embedding over the article's links that have a row in f;
// zero vector when none do.
inline Tensor article_network_repr(const Article& a, const EmbeddingMatrix& f) {
  Tensor z(Shape{f.dim()});
  std::size_t used = 0;
  for (const auto& l : a.links) {
    auto r = f.find(l);
    if (!r) continue;
    auto row = f.table.row(*r);
    for (std::size_t k = 0; k < f.dim(); ++k) z[k] += row[k];
    ++used;
  }
  if (used) z *= 1.0 / static_cast<double>(used);
  return z;
}

}  // namespace mvdam
