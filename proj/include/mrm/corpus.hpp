#pragma once
// Preference data: one record per pair of responses to the same prompt,
// already embedded. Records are grouped per user; splits are deterministic
// functions of (seed, user id) so they survive reordering of the file.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrm/rng.hpp"
#include "mrm/util.hpp"

namespace mrm {

enum class SplitTag { train, test };
enum class PopulationTag { seen, unseen };

struct PreferencePair {
  std::string user_id;
  std::string pair_id;
  Vec emb_chosen;
  Vec emb_rejected;
  SplitTag split = SplitTag::train;
};

struct UserDataset {
  std::string user_id;
  std::vector<PreferencePair> pairs;
};

// Support/query partition of one user's train pairs.
struct TaskSplit {
  std::string user_id;
  std::vector<PreferencePair> support;
  std::vector<PreferencePair> query;
};

struct Corpus {
  std::vector<UserDataset> users;
  std::size_t dim = 0;
  // Parallel to users; empty until split_population has run.
  std::vector<PopulationTag> population;

  bool tagged() const { return population.size() == users.size(); }
};

inline std::vector<PreferencePair> train_pairs(const UserDataset& u) {
  std::vector<PreferencePair> out;
  for (const auto& p : u.pairs) {
    if (p.split == SplitTag::train) out.push_back(p);
  }
  return out;
}

inline std::vector<PreferencePair> test_pairs(const UserDataset& u) {
  std::vector<PreferencePair> out;
  for (const auto& p : u.pairs) {
    if (p.split == SplitTag::test) out.push_back(p);
  }
  return out;
}

namespace detail {

inline Vec parse_embedding(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ValidationError("corpus line " + std::to_string(line_no) + ": missing or non-array \"" + key + "\"");
  }
  Vec v;
  v.reserve(j.at(key).size());
  for (const auto& x : j.at(key)) {
    if (!x.is_number()) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": non-numeric entry in \"" + key + "\"");
    }
    v.push_back(x.get<double>());
  }
  if (v.empty()) {
    throw ValidationError("corpus line " + std::to_string(line_no) + ": empty embedding \"" + key + "\"");
  }
  if (!all_finite(v)) {
    throw ValidationError("corpus line " + std::to_string(line_no) + ": non-finite value in \"" + key + "\"");
  }
  return v;
}

inline std::string parse_string(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ValidationError("corpus line " + std::to_string(line_no) + ": missing or non-string \"" + key + "\"");
  }
  return j.at(key).get<std::string>();
}

}  // namespace detail

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path);

  Corpus corpus;
  std::unordered_map<std::string, std::size_t> user_index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    PreferencePair p;
    p.user_id = detail::parse_string(j, "user_id", line_no);
    p.pair_id = detail::parse_string(j, "pair_id", line_no);
    p.emb_chosen = detail::parse_embedding(j, "emb_chosen", line_no);
    p.emb_rejected = detail::parse_embedding(j, "emb_rejected", line_no);
    std::string split = detail::parse_string(j, "split", line_no);
    if (split == "train") {
      p.split = SplitTag::train;
    } else if (split == "test") {
      p.split = SplitTag::test;
    } else {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": split must be \"train\" or \"test\", got \"" + split + "\"");
    }
    if (p.emb_chosen.size() != p.emb_rejected.size()) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": emb_chosen and emb_rejected lengths differ");
    }
    if (corpus.dim == 0) {
      corpus.dim = p.emb_chosen.size();
    } else if (p.emb_chosen.size() != corpus.dim) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": embedding dim " + std::to_string(p.emb_chosen.size()) + " does not match corpus dim " + std::to_string(corpus.dim));
    }

    auto [it, fresh] = user_index.try_emplace(p.user_id, corpus.users.size());
    if (fresh) corpus.users.push_back(UserDataset{p.user_id, {}});
    corpus.users[it->second].pairs.push_back(std::move(p));
  }
  if (corpus.users.empty()) throw ValidationError("corpus is empty: " + path);
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write corpus file: " + path);
  for (const auto& user : corpus.users) {
    for (const auto& p : user.pairs) {
      nlohmann::json j;
      j["user_id"] = p.user_id;
      j["pair_id"] = p.pair_id;
      j["emb_chosen"] = p.emb_chosen;
      j["emb_rejected"] = p.emb_rejected;
      j["split"] = p.split == SplitTag::train ? "train" : "test";
      out << j.dump() << '\n';
    }
  }
  if (!out) throw ValidationError("write failed: " + path);
}

// Drops users with fewer than min_pairs records.
inline Corpus filter_min_pairs(Corpus corpus, std::size_t min_pairs) {
  if (min_pairs <= 1) return corpus;
  Corpus out;
  out.dim = corpus.dim;
  for (auto& user : corpus.users) {
    if (user.pairs.size() >= min_pairs) out.users.push_back(std::move(user));
  }
  if (out.users.empty()) {
    throw ValidationError("min_pairs filter removed every user");
  }
  return out;
}

// Tags a seeded half of the users (rounded up) as seen, the rest unseen.
// The shuffle runs over ids in sorted order, so the assignment depends only
// on the id set and the seed, not on file order.
inline Corpus split_population(Corpus corpus, std::uint64_t seed) {
  if (corpus.users.size() < 2) {
    throw ValidationError("population split needs at least 2 users, got " + std::to_string(corpus.users.size()));
  }
  std::vector<std::size_t> order(corpus.users.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.users[a].user_id < corpus.users[b].user_id;
  });
  Rng g(derive_seed(seed, "population"));
  shuffle(order, g);
  std::size_t n_seen = (corpus.users.size() + 1) / 2;
  corpus.population.assign(corpus.users.size(), PopulationTag::unseen);
  for (std::size_t i = 0; i < n_seen; ++i) corpus.population[order[i]] = PopulationTag::seen;
  return corpus;
}

// Splits one user's train pairs into support (at least one pair, at most
// floor(fraction * m)) and query (the rest). Deterministic per (seed, user).
inline TaskSplit split_support_query(const UserDataset& user, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("support fraction must lie in (0,1), got " + fmt_double(fraction));
  }
  std::vector<PreferencePair> train = train_pairs(user);
  if (train.size() < 2) {
    throw ValidationError("user " + user.user_id + " has " + std::to_string(train.size()) + " train pairs; support/query split needs at least 2");
  }
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng g(derive_seed(seed, user.user_id));
  shuffle(order, g);
  std::size_t n_support = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(train.size())));

  TaskSplit split;
  split.user_id = user.user_id;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto& dst = i < n_support ? split.support : split.query;
    dst.push_back(train[order[i]]);
  }
  return split;
}

}  // namespace mrm
