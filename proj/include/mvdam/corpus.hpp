#pragma once

// Article corpora: JSONL ingestion, tokenisation, boilerplate cleaning and
// stratified splitting.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"

namespace mvdam {

enum class Ideology : int { kLeft = 0, kCenter = 1, kRight = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Ideology, 3> kAllIdeologies = {Ideology::kLeft, Ideology::kCenter,
                                                          Ideology::kRight};

inline std::size_t index_of(Ideology y) { return static_cast<std::size_t>(y); }
inline Ideology ideology_from_index(std::size_t i) {
  if (i >= kNumClasses) throw ValidationError("ideology index out of range");
  return static_cast<Ideology>(i);
}

inline std::string to_string(Ideology y) {
  switch (y) {
    case Ideology::kLeft: return "left";
    case Ideology::kCenter: return "center";
    case Ideology::kRight: return "right";
  }
  return "?";
}

inline Ideology parse_ideology(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "left") return Ideology::kLeft;
  if (s == "center" || s == "centre") return Ideology::kCenter;
  if (s == "right") return Ideology::kRight;
  throw ValidationError("unknown ideology label '" + s + "'");
}

using Tokens = std::vector<std::string>;

struct Article {
  std::string id;
  std::string source;
  Tokens title;
  std::vector<Tokens> sentences;
  std::vector<std::string> links;
  std::optional<Ideology> label;

  friend bool operator==(const Article&, const Article&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Article> articles) : articles_(std::move(articles)) {
    std::unordered_set<std::string> ids;
    for (const Article& a : articles_) {
      if (!ids.insert(a.id).second) throw ValidationError("duplicate article id " + a.id);
      sources_.insert(a.source);
    }
  }

  const std::vector<Article>& articles() const { return articles_; }
  const std::set<std::string>& sources() const { return sources_; }
  std::size_t size() const { return articles_.size(); }
  bool empty() const { return articles_.empty(); }
  const Article& operator[](std::size_t i) const { return articles_[i]; }
  auto begin() const { return articles_.begin(); }
  auto end() const { return articles_.end(); }

  std::array<std::size_t, 3> label_counts() const {
    std::array<std::size_t, 3> c{};
    for (const Article& a : articles_)
      if (a.label) ++c[index_of(*a.label)];
    return c;
  }

 private:
  std::vector<Article> articles_;
  std::set<std::string> sources_;
};

// ---------------------------------------------------------------------------
// Tokenisation: lowercase ASCII, split on non-alphanumerics. Bytes >= 0x80
// are kept as token characters so UTF-8 sequences stay intact.

inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Sentence boundaries are '.', '!' or '?' followed by whitespace (or the end
// of the text). Sentences that tokenise to nothing are dropped.
inline std::vector<Tokens> split_sentences(std::string_view text) {
  std::vector<Tokens> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool boundary = (c == '.' || c == '!' || c == '?') &&
                    (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (boundary) {
      Tokens t = tokenize(text.substr(start, i + 1 - start));
      if (!t.empty()) out.push_back(std::move(t));
      start = i + 1;
    }
  }
  if (start < text.size()) {
    Tokens t = tokenize(text.substr(start));
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL I/O.

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ValidationError("line " + std::to_string(line) + ": missing field " + key);
  return *it;
}

inline Tokens string_array(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.is_array())
    throw ValidationError("line " + std::to_string(line) + ": field " + key + " must be an array");
  Tokens out;
  for (const auto& x : j) {
    if (!x.is_string())
      throw ValidationError("line " + std::to_string(line) + ": field " + key +
                            " must contain strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

}  // namespace detail

// Parses one JSONL record. With raw=true, `title` and `body` are untokenised
// strings run through tokenize()/split_sentences().
inline Article parse_article(const nlohmann::json& j, std::size_t line, bool raw = false) {
  using detail::require;
  if (!j.is_object()) throw ValidationError("line " + std::to_string(line) + ": record is not an object");
  Article a;
  const auto& id = require(j, "id", line);
  const auto& source = require(j, "source", line);
  if (!id.is_string() || !source.is_string())
    throw ValidationError("line " + std::to_string(line) + ": id and source must be strings");
  a.id = id.get<std::string>();
  a.source = source.get<std::string>();
  const auto& title = require(j, "title", line);
  if (raw) {
    if (!title.is_string())
      throw ValidationError("line " + std::to_string(line) + ": raw title must be a string");
    a.title = tokenize(title.get<std::string>());
    const auto& body = require(j, "body", line);
    if (!body.is_string())
      throw ValidationError("line " + std::to_string(line) + ": raw body must be a string");
    a.sentences = split_sentences(body.get<std::string>());
  } else {
    a.title = detail::string_array(title, "title", line);
    const auto& sents = require(j, "sentences", line);
    if (!sents.is_array())
      throw ValidationError("line " + std::to_string(line) + ": field sentences must be an array");
    for (const auto& s : sents) {
      Tokens t = detail::string_array(s, "sentences", line);
      if (!t.empty()) a.sentences.push_back(std::move(t));
    }
  }
  auto links = j.find("links");
  if (links != j.end() && !links->is_null()) a.links = detail::string_array(*links, "links", line);
  auto label = j.find("label");
  if (label != j.end() && !label->is_null()) {
    if (!label->is_string())
      throw ValidationError("line " + std::to_string(line) + ": label must be a string or null");
    try {
      a.label = parse_ideology(label->get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return a;
}

inline Corpus read_corpus(std::istream& is, bool raw = false) {
  std::vector<Article> articles;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    Article a = parse_article(j, line, raw);
    if (!ids.insert(a.id).second)
      throw ValidationError("line " + std::to_string(line) + ": duplicate id " + a.id);
    articles.push_back(std::move(a));
  }
  return Corpus(std::move(articles));
}

inline Corpus load_corpus(const std::string& path, bool raw = false) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open corpus " + path);
  return read_corpus(is, raw);
}

inline nlohmann::ordered_json article_to_json(const Article& a) {
  nlohmann::ordered_json j;
  j["id"] = a.id;
  j["source"] = a.source;
  j["title"] = a.title;
  j["sentences"] = a.sentences;
  j["links"] = a.links;
  j["label"] = a.label ? nlohmann::ordered_json(to_string(*a.label)) : nlohmann::ordered_json(nullptr);
  return j;
}

inline void write_corpus(std::ostream& os, const Corpus& c) {
  for (const Article& a : c) os << article_to_json(a).dump() << '\n';
}

inline void save_corpus(const std::string& path, const Corpus& c) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_corpus(os, c);
}

// ---------------------------------------------------------------------------
// Boilerplate cleaning.

struct CleaningOptions {
  double tau_link = 0.5;  // max per-source document frequency of a link domain
  double tau_line = 0.3;  // max per-source document frequency of a sentence
  // A link or line must also occur in at least this many of the source's
  // articles before it can count as boilerplate.
  std::size_t min_support = 2;
};

inline std::string line_key(const Tokens& sentence) {
  std::string k;
  for (const auto& t : sentence) {
    if (!k.empty()) k.push_back(' ');
    k += t;
  }
  return k;
}

// Per-source document frequencies of link domains and sentence lines.
struct SourceStats {
  std::map<std::string, std::size_t> articles;
  std::map<std::string, std::map<std::string, std::size_t>> link_df;
  std::map<std::string, std::map<std::string, std::size_t>> line_df;

  static SourceStats compute(const Corpus& corpus) {
    SourceStats st;
    for (const Article& a : corpus) {
      ++st.articles[a.source];
      std::set<std::string> links(a.links.begin(), a.links.end());
      for (const auto& l : links) ++st.link_df[a.source][l];
      std::set<std::string> lines;
      for (const auto& s : a.sentences) lines.insert(line_key(s));
      for (const auto& l : lines) ++st.line_df[a.source][l];
    }
    return st;
  }

  double link_frequency(const std::string& source, const std::string& link) const {
    return frequency(link_df, source, link);
  }
  double line_frequency(const std::string& source, const std::string& line) const {
    return frequency(line_df, source, line);
  }
  std::size_t link_count(const std::string& source, const std::string& link) const {
    return count(link_df, source, link);
  }
  std::size_t line_count(const std::string& source, const std::string& line) const {
    return count(line_df, source, line);
  }

 private:
  using Table = std::map<std::string, std::map<std::string, std::size_t>>;
  static std::size_t count(const Table& t, const std::string& source, const std::string& key) {
    auto it = t.find(source);
    if (it == t.end()) return 0;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? 0 : jt->second;
  }
  double frequency(const Table& t, const std::string& source, const std::string& key) const {
    auto n = articles.find(source);
    if (n == articles.end() || n->second == 0) return 0.0;
    return static_cast<double>(count(t, source, key)) / static_cast<double>(n->second);
  }
};

// Drops self-links, source-systematic links and boilerplate lines. Total and
// idempotent for fixed stats.
inline Article clean_article(const Article& raw, const SourceStats& stats,
                             const CleaningOptions& opt = {}) {
  Article a = raw;
  a.links.clear();
  for (const auto& l : raw.links) {
    if (l == raw.source) continue;
    if (stats.link_count(raw.source, l) >= opt.min_support &&
        stats.link_frequency(raw.source, l) > opt.tau_link)
      continue;
    a.links.push_back(l);
  }
  a.sentences.clear();
  for (const auto& s : raw.sentences) {
    if (s.empty()) continue;
    const std::string key = line_key(s);
    if (stats.line_count(raw.source, key) >= opt.min_support &&
        stats.line_frequency(raw.source, key) > opt.tau_line)
      continue;
    a.sentences.push_back(s);
  }
  return a;
}

inline Corpus clean_corpus(const Corpus& corpus, const CleaningOptions& opt = {}) {
  const SourceStats stats = SourceStats::compute(corpus);
  std::vector<Article> out;
  out.reserve(corpus.size());
  for (const Article& a : corpus) out.push_back(clean_article(a, stats, opt));
  return Corpus(std::move(out));
}

// ---------------------------------------------------------------------------
// Stratified split.

struct Splits {
  Corpus train, valid, test;
};

// Each label group is shuffled, then the groups are merged in proportion so
// every prefix of the merged order tracks the global label mix; the merged
// order is cut into the three splits.
inline Splits split(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions)
    if (f < 0.0) throw ValidationError("split: fractions must be non-negative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ValidationError("split: fractions must sum to 1");
  const std::size_t n = corpus.size();
  const std::size_t n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const std::size_t n_valid = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train + n_valid > n || n_train == 0 || n_valid == 0 || n_train + n_valid == n)
    throw ValidationError("split: a split would be empty");

  Rng rng(seed);
  std::array<std::vector<std::size_t>, 4> groups;  // three labels + unlabeled
  for (std::size_t i = 0; i < n; ++i) {
    const auto& lab = corpus[i].label;
    groups[lab ? index_of(*lab) : 3].push_back(i);
  }
  for (auto& g : groups) rng.shuffle(g);

  std::vector<std::size_t> order;
  order.reserve(n);
  std::array<std::size_t, 4> taken{};
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = 4;
    double best_deficit = -1e300;
    for (std::size_t g = 0; g < 4; ++g) {
      if (taken[g] == groups[g].size()) continue;
      double deficit = static_cast<double>(groups[g].size()) * static_cast<double>(k + 1) /
                           static_cast<double>(n) -
                       static_cast<double>(taken[g]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = g;
      }
    }
    order.push_back(groups[best][taken[best]++]);
  }

  auto take = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                 order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(idx.begin(), idx.end());  // keep input order within a split
    std::vector<Article> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(corpus[i]);
    return Corpus(std::move(out));
  };
  return Splits{take(0, n_train), take(n_train, n_train + n_valid), take(n_train + n_valid, n)};
}

}  // namespace mvdam
