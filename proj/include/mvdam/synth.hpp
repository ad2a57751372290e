#pragma once

// Synthetic corpora with a planted, per-view tunable ideology signal.
//
// Sources are split into three blocks, one per label. Every view carries an
// independent signal:
//   title / content  each token comes from the block's partisan lexicon with
//                    probability = signal strength, else from a shared lexicon;
//   links            each link is homophilous with probability link_signal
//                    (intra-block with probability p_in, else a uniformly
//                    chosen source of another block), otherwise a uniformly
//                    chosen source of any block.
// Optional per-source boilerplate (footer/header lines, self links and a
// franchise domain) exercises the cleaning rules.

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"

namespace mvdam {

struct SynthSpec {
  std::size_t sources_per_block = 10;
  std::size_t num_articles = 4000;
  std::size_t shared_lexicon = 200;
  std::size_t title_lexicon = 10;    // partisan title tokens per block
  std::size_t content_lexicon = 10;  // partisan content tokens per block
  std::size_t title_len_min = 6, title_len_max = 10;
  std::size_t sentences_min = 3, sentences_max = 5;
  std::size_t words_min = 5, words_max = 9;
  std::size_t links_min = 0, links_max = 3;
  double title_signal = 0.10;
  double content_signal = 0.035;
  double link_signal = 1.0;
  double p_in = 0.7;
  bool boilerplate = true;
  std::uint64_t seed = 7;

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError(std::string("synth: ") + name + " must lie in [0,1]");
    };
    prob(title_signal, "title_signal");
    prob(content_signal, "content_signal");
    prob(link_signal, "link_signal");
    prob(p_in, "p_in");
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw ValidationError(std::string("synth: ") + name + " must be >= 1");
    };
    positive(sources_per_block, "sources_per_block");
    positive(num_articles, "num_articles");
    positive(shared_lexicon, "shared_lexicon");
    positive(title_lexicon, "title_lexicon");
    positive(content_lexicon, "content_lexicon");
    positive(title_len_min, "title_len_min");
    positive(sentences_min, "sentences_min");
    positive(words_min, "words_min");
    if (title_len_max < title_len_min || sentences_max < sentences_min || words_max < words_min ||
        links_max < links_min)
      throw ValidationError("synth: a max bound is below its min bound");
  }
};

inline const std::vector<std::string>& synth_external_domains() {
  static const std::vector<std::string> d = {"twitter.com", "youtube.com", "wikipedia.org",
                                             "facebook.com", "apnews.com"};
  return d;
}

namespace detail {

inline std::string numbered(const std::string& prefix, std::size_t i, int width = 2) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

inline const char* block_tag(std::size_t b) {
  static const char* tags[] = {"l", "c", "r"};
  return tags[b];
}

}  // namespace detail

// Source name -> planted block, in source-index order.
struct SynthSources {
  std::vector<std::string> names;
  std::vector<Ideology> block;
};

inline SynthSources synth_sources(const SynthSpec& spec) {
  const std::size_t n = 3 * spec.sources_per_block;
  std::vector<std::size_t> blocks(n);
  for (std::size_t i = 0; i < n; ++i) blocks[i] = i / spec.sources_per_block;
  Rng rng = Rng(spec.seed).fork(1);
  rng.shuffle(blocks);
  SynthSources s;
  for (std::size_t i = 0; i < n; ++i) {
    s.names.push_back(detail::numbered("outlet", i) + ".com");
    s.block.push_back(ideology_from_index(blocks[i]));
  }
  return s;
}

inline Corpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  const SynthSources src = synth_sources(spec);
  std::array<std::vector<std::size_t>, 3> members;
  for (std::size_t i = 0; i < src.names.size(); ++i) members[index_of(src.block[i])].push_back(i);

  Rng rng = Rng(spec.seed).fork(2);
  auto between = [&rng](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  auto word = [&](double signal, std::size_t lexicon, const char* kind, std::size_t block) {
    if (rng.bernoulli(signal))
      return std::string(kind) + detail::block_tag(block) + detail::numbered("", rng.below(lexicon));
    return detail::numbered("w", rng.below(spec.shared_lexicon), 3);
  };
  auto pick_source = [&](const std::vector<std::size_t>& pool, std::size_t exclude) {
    if (pool.size() == 1) return pool[0];
    for (;;) {
      std::size_t s = pool[rng.below(pool.size())];
      if (s != exclude) return s;
    }
  };
  std::vector<std::size_t> all(src.names.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::vector<Article> articles;
  articles.reserve(spec.num_articles);
  for (std::size_t i = 0; i < spec.num_articles; ++i) {
    const std::size_t block = i % 3;
    const std::size_t s = members[block][rng.below(members[block].size())];
    const std::string short_name = src.names[s].substr(0, src.names[s].find('.'));
    Article a;
    a.id = detail::numbered("a", i, 6);
    a.source = src.names[s];
    a.label = ideology_from_index(block);

    const std::size_t tl = between(spec.title_len_min, spec.title_len_max);
    for (std::size_t t = 0; t < tl; ++t) a.title.push_back(word(spec.title_signal, spec.title_lexicon, "t", block));

    if (spec.boilerplate && rng.bernoulli(0.6))
      a.sentences.push_back({"sponsored", "content", "from", short_name});
    const std::size_t ns = between(spec.sentences_min, spec.sentences_max);
    for (std::size_t k = 0; k < ns; ++k) {
      Tokens sent;
      const std::size_t nw = between(spec.words_min, spec.words_max);
      for (std::size_t w = 0; w < nw; ++w)
        sent.push_back(word(spec.content_signal, spec.content_lexicon, "b", block));
      a.sentences.push_back(std::move(sent));
    }
    if (spec.boilerplate) a.sentences.push_back({"you", "can", "subscribe", "to", short_name, "here"});

    const std::size_t nl = between(spec.links_min, spec.links_max);
    for (std::size_t l = 0; l < nl; ++l) {
      std::size_t target;
      if (rng.bernoulli(spec.link_signal)) {
        if (rng.bernoulli(spec.p_in)) {
          target = pick_source(members[block], s);
        } else {
          const std::size_t other = (block + 1 + rng.below(2)) % 3;
          target = members[other][rng.below(members[other].size())];
        }
      } else {
        target = pick_source(all, s);
      }
      a.links.push_back(src.names[target]);
    }
    if (spec.boilerplate) {
      if (rng.bernoulli(0.3)) a.links.push_back(a.source);
      if (rng.bernoulli(0.8)) a.links.push_back(short_name + "-social.net");
      for (const auto& d : synth_external_domains())
        if (rng.bernoulli(0.08)) a.links.push_back(d);
    }
    articles.push_back(std::move(a));
  }
  return Corpus(std::move(articles));
}

// Planted partisan lexicon membership of a token: the block it signals, if any.
inline std::optional<Ideology> planted_block(const std::string& token) {
  if (token.size() < 3 || (token[0] != 't' && token[0] != 'b')) return std::nullopt;
  for (std::size_t i = 2; i < token.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return std::nullopt;
  switch (token[1]) {
    case 'l': return Ideology::kLeft;
    case 'c': return Ideology::kCenter;
    case 'r': return Ideology::kRight;
    default: return std::nullopt;
  }
}

}  // namespace mvdam
