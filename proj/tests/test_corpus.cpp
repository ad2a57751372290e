#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "mvdam/corpus.hpp"
#include "mvdam/synth.hpp"
#include "mvdam/vocab.hpp"

using namespace mvdam;

namespace {

Corpus parse(const std::string& text, bool raw = false) {
  std::istringstream is(text);
  return read_corpus(is, raw);
}

std::string record(const std::string& id, const std::string& source, const std::string& label = "left") {
  return R"({"id":")" + id + R"(","source":")" + source + R"(","title":["a","b"],"sentences":[["x","y"]],"links":[],"label":")" +
         label + "\"}\n";
}

Article article(std::string id, std::string source, std::vector<Tokens> sentences, std::vector<std::string> links = {}) {
  Article a;
  a.id = std::move(id);
  a.source = std::move(source);
  a.title = {"t"};
  a.sentences = std::move(sentences);
  a.links = std::move(links);
  a.label = Ideology::kLeft;
  return a;
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

Corpus balanced(std::size_t n) {
  std::vector<Article> v;
  for (std::size_t i = 0; i < n; ++i) {
    Article a = article("a" + std::to_string(i), "s" + std::to_string(i % 7), {{"w"}});
    a.label = ideology_from_index(i % 3);
    v.push_back(std::move(a));
  }
  return Corpus(std::move(v));
}

}  // namespace

TEST(Ingest, ThreeRecords) {
  Corpus c = parse(record("1", "a.com") + record("2", "b.com", "center") + record("3", "a.com", "right"));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1].label, Ideology::kCenter);
  EXPECT_EQ(c.sources(), (std::set<std::string>{"a.com", "b.com"}));
}

TEST(Ingest, EmptyFile) { EXPECT_TRUE(parse("").empty()); }

TEST(Ingest, MissingTitleNamesTheLine) {
  const std::string bad = R"({"id":"2","source":"a.com","sentences":[["x"]]})";
  EXPECT_EQ(error_of(record("1", "a.com") + bad + "\n"), "line 2: missing field title");
}

TEST(Ingest, MalformedJsonNamesTheLine) {
  EXPECT_EQ(error_of(record("1", "a.com") + record("2", "a.com") + "{oops\n").rfind("line 3:", 0), 0u);
}

TEST(Ingest, DuplicateIdIsAnError) {
  EXPECT_NE(error_of(record("1", "a.com") + record("1", "b.com")).find("duplicate id"), std::string::npos);
}

TEST(Ingest, UnknownLabelIsAnError) { EXPECT_FALSE(error_of(record("1", "a.com", "green")).empty()); }

TEST(Ingest, NullLabelMeansUnlabeled) {
  Corpus c = parse(R"({"id":"1","source":"a","title":["x"],"sentences":[["y"]],"label":null})");
  EXPECT_FALSE(c[0].label.has_value());
}

TEST(Ingest, RawTextIsTokenisedAndSegmented) {
  Corpus c = parse(R"({"id":"1","source":"a","title":"Hello, World!","body":"First one. Second? 3.5 stays"})", true);
  EXPECT_EQ(c[0].title, (Tokens{"hello", "world"}));
  ASSERT_EQ(c[0].sentences.size(), 3u);
  EXPECT_EQ(c[0].sentences[0], (Tokens{"first", "one"}));
  EXPECT_EQ(c[0].sentences[1], (Tokens{"second"}));
  EXPECT_EQ(c[0].sentences[2], (Tokens{"3", "5", "stays"}));
}

TEST(Ingest, WriteThenReadIsIdentity) {
  Corpus c = synth_corpus({.num_articles = 30, .seed = 3});
  std::ostringstream os;
  write_corpus(os, c);
  Corpus back = parse(os.str());
  EXPECT_EQ(back.articles(), c.articles());
}

TEST(Clean, FrequentFooterLineIsRemoved) {
  const Tokens footer = tokenize("You can subscribe to the Daily Beast here");
  std::vector<Article> v;
  for (int i = 0; i < 5; ++i) v.push_back(article("d" + std::to_string(i), "thedailybeast.com", {{"story", std::to_string(i)}, footer}));
  Corpus c = clean_corpus(Corpus(v));
  for (const Article& a : c) {
    ASSERT_EQ(a.sentences.size(), 1u);
    EXPECT_EQ(a.sentences[0][0], "story");
  }
}

TEST(Clean, SelfLinkIsRemoved) {
  Corpus c = clean_corpus(Corpus({article("1", "nytimes.com", {{"x"}}, {"nytimes.com", "cnn.com"})}));
  EXPECT_EQ(c[0].links, (std::vector<std::string>{"cnn.com"}));
}

TEST(Clean, RareLinkIsRetained) {
  std::vector<Article> v;
  for (int i = 0; i < 4; ++i) v.push_back(article(std::to_string(i), "s.com", {{"x", std::to_string(i)}}));
  v[2].links = {"unique.org"};
  Corpus c = clean_corpus(Corpus(v));
  EXPECT_EQ(c[2].links, (std::vector<std::string>{"unique.org"}));
}

TEST(Clean, SystematicLinkIsRemoved) {
  std::vector<Article> v;
  for (int i = 0; i < 4; ++i) v.push_back(article(std::to_string(i), "s.com", {{"x", std::to_string(i)}}, {"s-social.net"}));
  for (const Article& a : clean_corpus(Corpus(v))) EXPECT_TRUE(a.links.empty());
}

TEST(Clean, IsIdempotentPerArticle) {
  Corpus raw = synth_corpus({.num_articles = 300, .seed = 5});
  const SourceStats stats = SourceStats::compute(raw);
  for (const Article& a : raw) {
    Article once = clean_article(a, stats);
    EXPECT_EQ(clean_article(once, stats), once);
  }
}

TEST(Clean, RetainedItemsAreBelowThresholds) {
  Corpus raw = synth_corpus({.num_articles = 600, .seed = 9});
  const SourceStats st = SourceStats::compute(raw);
  const CleaningOptions opt;
  std::size_t dropped = 0;
  for (const Article& a : clean_corpus(raw, opt)) {
    for (const auto& l : a.links) {
      EXPECT_NE(l, a.source);
      EXPECT_TRUE(st.link_count(a.source, l) < opt.min_support || st.link_frequency(a.source, l) <= opt.tau_link) << l;
    }
    for (const auto& s : a.sentences) {
      EXPECT_FALSE(s.empty());
      EXPECT_TRUE(st.line_count(a.source, line_key(s)) < opt.min_support ||
                  st.line_frequency(a.source, line_key(s)) <= opt.tau_line);
    }
    for (const auto& s : a.sentences) dropped += s[0] == "you";
  }
  EXPECT_EQ(dropped, 0u);
}

TEST(Split, PaperProportions) {
  std::vector<Article> v(120000);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].id = std::to_string(i);
    v[i].source = "s";
    v[i].label = ideology_from_index(i % 3);
  }
  Splits s = split(Corpus(std::move(v)), {100.0 / 120, 10.0 / 120, 10.0 / 120}, 1);
  EXPECT_EQ(s.train.size(), 100000u);
  EXPECT_EQ(s.valid.size(), 10000u);
  EXPECT_EQ(s.test.size(), 10000u);
}

TEST(Split, PartitionIsExactAndDeterministic) {
  Corpus c = balanced(200);
  Splits a = split(c, {0.7, 0.15, 0.15}, 4), b = split(c, {0.7, 0.15, 0.15}, 4);
  EXPECT_EQ(a.train.articles(), b.train.articles());
  EXPECT_EQ(a.test.articles(), b.test.articles());
  std::multiset<std::string> ids;
  for (const Corpus* part : {&a.train, &a.valid, &a.test})
    for (const Article& x : *part) ids.insert(x.id);
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 200u);
  Splits other = split(c, {0.7, 0.15, 0.15}, 5);
  EXPECT_NE(other.train.articles(), a.train.articles());
}

TEST(Split, IsStratified) {
  Splits s = split(balanced(999), {0.8, 0.1, 0.1}, 2);
  for (const Corpus* part : {&s.train, &s.valid, &s.test}) {
    auto counts = part->label_counts();
    for (std::size_t k = 0; k < 3; ++k)
      EXPECT_NEAR(static_cast<double>(counts[k]) / static_cast<double>(part->size()), 1.0 / 3.0, 0.03);
  }
}

TEST(Split, BadFractionsAreErrors) {
  Corpus c = balanced(10);
  EXPECT_THROW(split(c, {0.5, 0.2, 0.2}, 1), ValidationError);
  EXPECT_THROW(split(c, {1.2, -0.1, -0.1}, 1), ValidationError);
  EXPECT_THROW(split(c, {0.9, 0.1, 0.0}, 1), ValidationError);
  EXPECT_THROW(split(c, {0.98, 0.01, 0.01}, 1), ValidationError);
}

TEST(Vocab, MinCountFilters) {
  Article a = article("1", "s", {{"a", "a", "a", "a", "b"}});
  a.title = {"a"};
  Vocabulary v = build_vocab(Corpus({a}), 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.id("b"), Vocabulary::kUnk);
  EXPECT_TRUE(build_vocab(Corpus({a}), 1).contains("b"));
}

TEST(Vocab, TiesAreLexicographic) {
  Vocabulary v = build_vocab(Corpus({article("1", "s", {{"zeta", "alpha", "mid", "alpha"}})}), 1);
  EXPECT_EQ(v.id("alpha"), 2u);
  EXPECT_EQ(v.id("mid"), 3u);
  EXPECT_EQ(v.id("t"), 4u);
  EXPECT_EQ(v.id("zeta"), 5u);
}

TEST(Vocab, EmptyCorpusIsAnError) { EXPECT_THROW(build_vocab(Corpus{}), ValidationError); }

TEST(Vocab, EncodeDecodeRoundTripAndFileRoundTrip) {
  Corpus c = synth_corpus({.num_articles = 60, .seed = 2});
  Vocabulary v = build_vocab(c, 1);
  for (const Article& a : c) {
    EXPECT_EQ(v.decode(v.encode(a.title)), a.title);
    for (std::size_t id : v.encode(a.title)) EXPECT_LT(id, v.size());
  }
  const auto path = std::filesystem::temp_directory_path() / "mvdam_vocab_test.txt";
  v.save(path.string());
  Vocabulary back = Vocabulary::load(path.string());
  EXPECT_EQ(back.entries(), v.entries());
  std::filesystem::remove(path);
}

TEST(Synth, SameSpecIsByteIdentical) {
  SynthSpec spec{.num_articles = 200, .seed = 11};
  std::ostringstream a, b;
  write_corpus(a, synth_corpus(spec));
  write_corpus(b, synth_corpus(spec));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Synth, BlocksAreBalancedAndSourcesConsistent) {
  SynthSpec spec{.num_articles = 300, .seed = 4};
  Corpus c = synth_corpus(spec);
  EXPECT_EQ(c.label_counts(), (std::array<std::size_t, 3>{100, 100, 100}));
  SynthSources src = synth_sources(spec);
  for (const Article& a : c) {
    auto it = std::find(src.names.begin(), src.names.end(), a.source);
    ASSERT_NE(it, src.names.end());
    EXPECT_EQ(src.block[static_cast<std::size_t>(it - src.names.begin())], *a.label);
  }
}

TEST(Synth, IntraBlockLinkFraction) {
  SynthSpec spec{.num_articles = 5000, .links_min = 2, .links_max = 2, .p_in = 0.9, .boilerplate = false, .seed = 8};
  Corpus c = synth_corpus(spec);
  SynthSources src = synth_sources(spec);
  std::map<std::string, Ideology> block;
  for (std::size_t i = 0; i < src.names.size(); ++i) block[src.names[i]] = src.block[i];
  std::size_t intra = 0, total = 0;
  for (const Article& a : c)
    for (const auto& l : a.links) {
      ++total;
      intra += block.at(l) == block.at(a.source);
    }
  EXPECT_EQ(total, 10000u);
  EXPECT_NEAR(static_cast<double>(intra) / static_cast<double>(total), 0.9, 0.02);
}

TEST(Synth, PartisanCountsBeatChance) {
  // Count-based classifier: argmax over planted-token counts in title and body.
  Corpus c = synth_corpus({.num_articles = 1500, .seed = 6});
  std::size_t correct = 0;
  for (const Article& a : c) {
    std::array<int, 3> votes{};
    auto tally = [&votes](const Tokens& ts) {
      for (const auto& t : ts)
        if (auto b = planted_block(t)) ++votes[index_of(*b)];
    };
    tally(a.title);
    for (const auto& s : a.sentences) tally(s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (votes[k] > votes[best]) best = k;
    correct += ideology_from_index(best) == *a.label;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(c.size()), 0.5);
}

TEST(Synth, ZeroSignalHasNoPlantedTokens) {
  Corpus c = synth_corpus({.num_articles = 200, .title_signal = 0.0, .content_signal = 0.0, .seed = 1});
  for (const Article& a : c) {
    for (const auto& t : a.title) EXPECT_FALSE(planted_block(t));
    for (const auto& s : a.sentences)
      for (const auto& t : s) EXPECT_FALSE(planted_block(t));
  }
}

TEST(Synth, InvalidSpecIsRejected) {
  EXPECT_THROW(synth_corpus({.title_signal = 1.5}), ValidationError);
  EXPECT_THROW(synth_corpus({.sources_per_block = 0}), ValidationError);
}
