#pragma once
// Synthetic preference populations with known ground truth. True rewards
// are linear in the embedding through k_true unit-norm base directions;
// each user has their own true mixing weights. Labels are either the exact
// reward comparison or a Bradley-Terry draw, then flipped with probability
// label_noise. Generation consumes a single sequential stream seeded from
// spec.seed, so a fixed spec reproduces the corpus byte for byte.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrm/btcore.hpp"
#include "mrm/corpus.hpp"
#include "mrm/rewardnet.hpp"
#include "mrm/rng.hpp"
#include "mrm/util.hpp"

namespace mrm {

enum class LabelMode { deterministic, bt_sample };
enum class Heterogeneity { gaussian_weights, two_cluster };

inline std::string label_mode_name(LabelMode m) { return m == LabelMode::deterministic ? "deterministic" : "bt_sample"; }
inline std::string heterogeneity_name(Heterogeneity h) { return h == Heterogeneity::gaussian_weights ? "gaussian_weights" : "two_cluster"; }

inline LabelMode parse_label_mode(const std::string& s) {
  if (s == "deterministic") return LabelMode::deterministic;
  if (s == "bt_sample") return LabelMode::bt_sample;
  throw ValidationError("unknown label_mode \"" + s + "\" (expected deterministic or bt_sample)");
}

inline Heterogeneity parse_heterogeneity(const std::string& s) {
  if (s == "gaussian_weights") return Heterogeneity::gaussian_weights;
  if (s == "two_cluster") return Heterogeneity::two_cluster;
  throw ValidationError("unknown heterogeneity \"" + s + "\" (expected gaussian_weights or two_cluster)");
}

struct PopulationSpec {
  int n_users = 16;
  int pairs_per_user = 40;
  int d = 16;
  int k_true = 2;
  double label_noise = 0.0;
  LabelMode label_mode = LabelMode::deterministic;
  Heterogeneity heterogeneity = Heterogeneity::gaussian_weights;
  double majority_frac = 0.8;
  std::uint64_t seed = 42;
};

inline void validate(const PopulationSpec& spec) {
  if (spec.n_users <= 0) throw ValidationError("n_users must be positive");
  if (spec.pairs_per_user <= 0) throw ValidationError("pairs_per_user must be positive");
  if (spec.d <= 0) throw ValidationError("d must be positive");
  if (spec.k_true <= 0) throw ValidationError("k_true must be positive");
  if (!(spec.label_noise >= 0.0 && spec.label_noise < 0.5)) {
    throw ValidationError("label_noise must lie in [0, 0.5), got " + fmt_double(spec.label_noise));
  }
  if (!(spec.majority_frac >= 0.0 && spec.majority_frac <= 1.0)) {
    throw ValidationError("majority_frac must lie in [0,1]");
  }
}

struct GroundTruth {
  // linear bases, unit norm, zero bias
  std::vector<PhiParams> true_phis;
  // ordered by user id so serialization is canonical
  std::map<std::string, Vec> true_weights;
};

inline double true_reward(const GroundTruth& truth, const Vec& w, const Vec& emb) {
  double r = 0.0;
  for (std::size_t kk = 0; kk < truth.true_phis.size(); ++kk) {
    r += w[kk] * phi_forward(truth.true_phis[kk], emb).score;
  }
  return r;
}

// One Bradley-Terry preference draw given the true reward gap. Exposed so
// tests can measure the acceptance rate directly.
inline bool bt_sample_prefers(Rng& g, double reward_gap) {
  return uniform01(g) < sigmoid(reward_gap);
}

inline std::string synth_user_id(int i, int n_users) {
  int width = 1;
  for (int v = n_users - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(i);
  return "u" + std::string(width - digits.size(), '0') + digits;
}

inline std::pair<Corpus, GroundTruth> gen_population(const PopulationSpec& spec) {
  validate(spec);
  Rng g(spec.seed);

  GroundTruth truth;
  for (int kk = 0; kk < spec.k_true; ++kk) {
    Vec dir = normal_vec(g, spec.d);
    double n = norm2(dir);
    while (n == 0.0) {
      dir = normal_vec(g, spec.d);
      n = norm2(dir);
    }
    for (auto& x : dir) x /= n;
    PhiParams p;
    p.arch = Arch::linear;
    p.dim = spec.d;
    p.w1 = std::move(dir);
    p.b1.assign(1, 0.0);
    truth.true_phis.push_back(std::move(p));
  }

  std::vector<Vec> weights(spec.n_users);
  if (spec.heterogeneity == Heterogeneity::gaussian_weights) {
    for (auto& w : weights) w = normal_vec(g, spec.k_true);
  } else {
    Vec shared = normal_vec(g, spec.k_true);
    auto n_major = static_cast<int>(std::llround(spec.majority_frac * spec.n_users));
    for (int i = 0; i < spec.n_users; ++i) {
      weights[i] = shared;
      if (i >= n_major) {
        for (auto& x : weights[i]) x = -x;
      }
    }
  }

  Corpus corpus;
  corpus.dim = static_cast<std::size_t>(spec.d);
  std::size_t n_train = (static_cast<std::size_t>(spec.pairs_per_user) + 1) / 2;
  for (int i = 0; i < spec.n_users; ++i) {
    UserDataset user;
    user.user_id = synth_user_id(i, spec.n_users);
    truth.true_weights[user.user_id] = weights[i];
    for (int j = 0; j < spec.pairs_per_user; ++j) {
      Vec e1, e2;
      double gap = 0.0;
      // resample near-ties so labels are never decided by roundoff
      do {
        e1 = normal_vec(g, spec.d);
        e2 = normal_vec(g, spec.d);
        gap = true_reward(truth, weights[i], e1) - true_reward(truth, weights[i], e2);
      } while (std::abs(gap) < 1e-9);

      bool first_preferred;
      if (spec.label_mode == LabelMode::deterministic) {
        first_preferred = gap > 0.0;
      } else {
        first_preferred = bt_sample_prefers(g, gap);
      }
      // the flip draw happens in both modes and for any noise level, so the
      // stream layout does not depend on the outcome
      if (uniform01(g) < spec.label_noise) first_preferred = !first_preferred;

      PreferencePair p;
      p.user_id = user.user_id;
      p.pair_id = user.user_id + "-p" + std::to_string(j);
      p.emb_chosen = first_preferred ? e1 : e2;
      p.emb_rejected = first_preferred ? e2 : e1;
      p.split = static_cast<std::size_t>(j) < n_train ? SplitTag::train : SplitTag::test;
      user.pairs.push_back(std::move(p));
    }
    corpus.users.push_back(std::move(user));
  }
  return {std::move(corpus), std::move(truth)};
}

// Accuracy of the true reward model on each user's test pairs, in corpus
// user order. With deterministic labels and flip rate eps this concentrates
// near 1 - eps; no learned model can beat it in expectation.
inline std::vector<double> bayes_accuracy(const GroundTruth& truth, const Corpus& corpus) {
  if (truth.true_phis.empty()) throw ValidationError("ground truth has no base functions");
  if (static_cast<std::size_t>(truth.true_phis[0].dim) != corpus.dim) {
    throw ValidationError("ground truth dim does not match corpus dim");
  }
  std::vector<double> acc;
  acc.reserve(corpus.users.size());
  for (const auto& user : corpus.users) {
    auto it = truth.true_weights.find(user.user_id);
    if (it == truth.true_weights.end()) {
      throw ValidationError("ground truth has no weights for user " + user.user_id);
    }
    std::size_t correct = 0, total = 0;
    for (const auto& p : user.pairs) {
      if (p.split != SplitTag::test) continue;
      ++total;
      if (true_reward(truth, it->second, p.emb_chosen) > true_reward(truth, it->second, p.emb_rejected)) ++correct;
    }
    if (total == 0) throw ValidationError("user " + user.user_id + " has no test pairs");
    acc.push_back(static_cast<double>(correct) / static_cast<double>(total));
  }
  return acc;
}

inline void save_truth(const GroundTruth& truth, const std::string& path) {
  nlohmann::json j;
  j["true_phis"] = nlohmann::json::array();
  for (const auto& p : truth.true_phis) j["true_phis"].push_back(phi_to_json(p));
  j["true_weights"] = nlohmann::json::object();
  for (const auto& [id, w] : truth.true_weights) j["true_weights"][id] = w;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write truth file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

inline GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("truth file " + path + " is not valid JSON: " + e.what());
  }
  GroundTruth truth;
  try {
    for (const auto& pj : j.at("true_phis")) {
      PhiParams p;
      p.arch = Arch::linear;
      p.w1 = pj.at("w").get<Vec>();
      p.b1.assign(1, pj.at("b").get<double>());
      p.dim = static_cast<int>(p.w1.size());
      truth.true_phis.push_back(std::move(p));
    }
    for (const auto& [id, wj] : j.at("true_weights").items()) {
      truth.true_weights[id] = wj.get<Vec>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("truth file " + path + " is malformed: " + e.what());
  }
  if (truth.true_phis.empty()) throw ValidationError("truth file has no base functions");
  for (const auto& [id, w] : truth.true_weights) {
    if (w.size() != truth.true_phis.size()) {
      throw ValidationError("truth weights for user " + id + " do not match the number of base functions");
    }
  }
  return truth;
}

}  // namespace mrm
