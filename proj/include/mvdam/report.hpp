#pragma once

// JSON forms of predictions and attention, corpus digests and run manifests.

#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvdam/corpus.hpp"
#include "mvdam/error.hpp"
#include "mvdam/metrics.hpp"
#include "mvdam/model.hpp"

namespace mvdam {

inline nlohmann::ordered_json probs_json(const std::array<double, 3>& p) {
  nlohmann::ordered_json j;
  for (std::size_t k = 0; k < 3; ++k) j[to_string(ideology_from_index(k))] = p[k];
  return j;
}

inline std::array<double, 3> probs_from_json(const nlohmann::json& j) {
  std::array<double, 3> p{};
  for (std::size_t k = 0; k < 3; ++k) p[k] = j.at(to_string(ideology_from_index(k))).get<double>();
  return p;
}

inline nlohmann::ordered_json prediction_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["article_id"] = r.article_id;
  j["source"] = r.source;
  j["probs"] = probs_json(r.probs);
  j["predicted"] = to_string(r.predicted);
  j["latent_mode"] = r.latent_mode;
  if (r.calibrated) j["calibrated"] = probs_json(*r.calibrated);
  if (r.gold) j["gold"] = to_string(*r.gold);
  return j;
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  try {
    r.article_id = j.at("article_id").get<std::string>();
    r.source = j.value("source", std::string());
    r.probs = probs_from_json(j.at("probs"));
    r.predicted = parse_ideology(j.at("predicted").get<std::string>());
    r.latent_mode = j.value("latent_mode", std::string("mean"));
    if (j.contains("calibrated") && !j["calibrated"].is_null()) r.calibrated = probs_from_json(j["calibrated"]);
    if (j.contains("gold") && !j["gold"].is_null()) r.gold = parse_ideology(j["gold"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed prediction record: ") + e.what());
  }
  return r;
}

inline void save_predictions(const std::string& path, const std::vector<PredictionRecord>& preds) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : preds) arr.push_back(prediction_json(r));
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << arr.dump(2) << '\n';
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!arr.is_array()) throw ValidationError(path + ": expected a JSON array of predictions");
  std::vector<PredictionRecord> out;
  for (const auto& j : arr) out.push_back(prediction_from_json(j));
  return out;
}

inline nlohmann::ordered_json attention_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["article_id"] = r.article_id;
  j["sentence_attn"] = r.attention.sentence_attn;
  j["word_attn"] = r.attention.word_attn;
  j["predicted"] = to_string(r.predicted);
  return j;
}

// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Digest of the canonical JSONL form.
inline std::string corpus_digest(const Corpus& c) {
  std::ostringstream os;
  write_corpus(os, c);
  return hex64(fnv1a(os.str()));
}

struct RunManifest {
  std::string command;
  std::string config;  // flat key = value snapshot
  std::vector<std::uint64_t> seeds;
  std::string corpus_digest;
  std::string split_digest;
  std::string checkpoint;
  std::optional<MetricsReport> metrics;
  double wall_clock_seconds = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    j["corpus_digest"] = corpus_digest;
    j["split_digest"] = split_digest;
    j["checkpoint"] = checkpoint;
    if (metrics) {
      j["metrics"] = {{"macro_precision", metrics->macro_precision},
                      {"macro_recall", metrics->macro_recall},
                      {"macro_f1", metrics->macro_f1},
                      {"accuracy", metrics->accuracy},
                      {"n", metrics->n}};
    }
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << to_json().dump(2) << '\n';
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace mvdam
