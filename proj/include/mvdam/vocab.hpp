#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"

namespace mvdam {

// Token <-> id map. Id 0 is padding, id 1 is the unknown token.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary() : tokens_{"<pad>", "<unk>"} {}

  // Builds from tokens in the order given (ids 2, 3, ...).
  explicit Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
    for (const auto& t : tokens) {
      if (index_.count(t) || t == "<pad>" || t == "<unk>")
        throw ValidationError("vocabulary: duplicate or reserved token '" + t + "'");
      index_.emplace(t, tokens_.size());
      tokens_.push_back(t);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }

  std::size_t id(const std::string& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw ValidationError("vocabulary: id out of range");
    return tokens_[id];
  }

  std::vector<std::size_t> encode(const Tokens& toks) const {
    std::vector<std::size_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }
  Tokens decode(const std::vector<std::size_t>& ids) const {
    Tokens out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(token(i));
    return out;
  }

  // Non-reserved tokens in id order.
  std::vector<std::string> entries() const { return {tokens_.begin() + 2, tokens_.end()}; }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open vocabulary " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    if (lines.size() < 2 || lines[0] != "<pad>" || lines[1] != "<unk>")
      throw Error("vocabulary file " + path + " lacks the reserved header");
    return Vocabulary(std::vector<std::string>(lines.begin() + 2, lines.end()));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Every title/content token with corpus frequency >= min_count, ordered by
// descending frequency then lexicographically. max_size (0 = unlimited) caps
// the number of non-reserved entries.
inline Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count = 2,
                              std::size_t max_size = 0) {
  if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const Article& a : corpus) {
    for (const auto& t : a.title) ++freq[t];
    for (const auto& s : a.sentences)
      for (const auto& t : s) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, c] : freq)
    if (c >= min_count) kept.emplace_back(t, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (max_size && kept.size() > max_size) kept.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [t, _] : kept) tokens.push_back(t);
  return Vocabulary(tokens);
}

}  // namespace mvdam
