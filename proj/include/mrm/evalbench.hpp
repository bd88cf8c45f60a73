#pragma once
// Accuracy evaluation, few-shot adaptation curves, and the reference
// baselines the meta-learned model is compared against. A prediction
// counts as correct only when the chosen response scores strictly higher;
// ties are errors.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrm/btcore.hpp"
#include "mrm/corpus.hpp"
#include "mrm/metaopt.hpp"
#include "mrm/rewardnet.hpp"
#include "mrm/rng.hpp"
#include "mrm/rpo.hpp"
#include "mrm/util.hpp"

namespace mrm {

struct UserResult {
  std::string user_id;
  PopulationTag population = PopulationTag::seen;
  std::size_t n_test = 0;
  double accuracy = 0.0;
};

inline UserResult user_accuracy(const ModelParams& params, const UserWeights& w, const std::string& user_id, PopulationTag tag, std::span<const PreferencePair> test) {
  if (test.empty()) throw ValidationError("user " + user_id + " has no test pairs to evaluate");
  std::size_t correct = 0;
  for (const auto& p : test) {
    if (reward(params, w, p.emb_chosen) > reward(params, w, p.emb_rejected)) ++correct;
  }
  return UserResult{user_id, tag, test.size(), static_cast<double>(correct) / static_cast<double>(test.size())};
}

// Mean of the lowest ceil(k_percent * n / 100) accuracies.
inline double worst_k_mean(std::vector<double> accuracies, double k_percent) {
  if (accuracies.empty()) throw ValidationError("worst-k over an empty accuracy list");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw ValidationError("k_percent must lie in (0,100], got " + fmt_double(k_percent));
  }
  double exact = k_percent * static_cast<double>(accuracies.size()) / 100.0;
  auto m = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  m = std::max<std::size_t>(1, std::min(m, accuracies.size()));
  std::sort(accuracies.begin(), accuracies.end());
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += accuracies[i];
  return s / static_cast<double>(m);
}

struct EvalReport {
  // sorted by user id
  std::vector<UserResult> rows;
  double overall_mean = 0.0;
  double overall_std = 0.0;
  double worst10 = 0.0;
  double worst20 = 0.0;
  double worst50 = 0.0;
  double seen_mean = std::numeric_limits<double>::quiet_NaN();
  double unseen_mean = std::numeric_limits<double>::quiet_NaN();
};

inline EvalReport make_report(std::vector<UserResult> rows) {
  if (rows.empty()) throw ValidationError("report over an empty result list");
  std::sort(rows.begin(), rows.end(), [](const UserResult& a, const UserResult& b) { return a.user_id < b.user_id; });
  EvalReport rep;
  std::vector<double> acc;
  acc.reserve(rows.size());
  double seen_sum = 0.0, unseen_sum = 0.0;
  std::size_t n_seen = 0, n_unseen = 0;
  for (const auto& r : rows) {
    acc.push_back(r.accuracy);
    if (r.population == PopulationTag::seen) {
      seen_sum += r.accuracy;
      ++n_seen;
    } else {
      unseen_sum += r.accuracy;
      ++n_unseen;
    }
  }
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(acc.size());
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  var /= static_cast<double>(acc.size());
  rep.overall_mean = mean;
  rep.overall_std = std::sqrt(var);
  rep.worst10 = worst_k_mean(acc, 10.0);
  rep.worst20 = worst_k_mean(acc, 20.0);
  rep.worst50 = worst_k_mean(acc, 50.0);
  if (n_seen > 0) rep.seen_mean = seen_sum / static_cast<double>(n_seen);
  if (n_unseen > 0) rep.unseen_mean = unseen_sum / static_cast<double>(n_unseen);
  rep.rows = std::move(rows);
  return rep;
}

// Seeded order in which a user's train pairs are handed out as shots.
// Prefixes nest, so a 5-shot evaluation sees a superset of the 2-shot one.
inline std::vector<PreferencePair> shot_prefix(const UserDataset& user, std::uint64_t seed, std::size_t shots) {
  std::vector<PreferencePair> train = train_pairs(user);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng g(derive_seed(derive_seed(seed, "shots"), user.user_id));
  shuffle(order, g);
  std::vector<PreferencePair> out;
  out.reserve(std::min(shots, train.size()));
  for (std::size_t i = 0; i < std::min(shots, train.size()); ++i) out.push_back(train[order[i]]);
  return out;
}

// Adapts every user on a prefix of their train pairs (shots = 0 evaluates
// the shared init as-is) and scores their test pairs.
inline EvalReport evaluate_corpus(const ModelParams& params, const Corpus& corpus, const MetaConfig& cfg, std::size_t shots) {
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");
  std::vector<UserResult> rows(corpus.users.size());
  std::vector<char> keep(corpus.users.size(), 0);
  parallel_for(corpus.users.size(), cfg.threads, [&](std::size_t i) {
    const UserDataset& user = corpus.users[i];
    std::vector<PreferencePair> test = test_pairs(user);
    if (test.empty()) return;
    UserWeights w{params.w0};
    if (shots > 0) {
      std::vector<PreferencePair> shot = shot_prefix(user, cfg.seed, shots);
      if (!shot.empty()) w = adapt_user(params, shot, cfg);
    }
    rows[i] = user_accuracy(params, w, user.user_id, corpus.population[i], test);
    keep[i] = 1;
  });
  std::vector<UserResult> kept;
  kept.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (keep[i]) kept.push_back(std::move(rows[i]));
  }
  if (kept.size() < rows.size()) {
    std::fprintf(stderr, "note: skipped %zu user(s) without test pairs\n", rows.size() - kept.size());
  }
  return make_report(std::move(kept));
}

struct FewshotRow {
  std::size_t shots = 0;
  double mean_accuracy = 0.0;
  std::size_t n_users = 0;
};

// Mean unseen-user accuracy as a function of the shot count. Users with too
// few train pairs for a given count sit that count out.
inline std::vector<FewshotRow> fewshot_curve(const ModelParams& params, const Corpus& corpus, const std::vector<std::size_t>& shot_counts, const MetaConfig& cfg) {
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");
  if (shot_counts.empty()) throw ValidationError("few-shot curve needs at least one shot count");
  std::vector<FewshotRow> out;
  for (std::size_t shots : shot_counts) {
    double sum = 0.0;
    std::size_t n = 0, skipped = 0;
    for (std::size_t i = 0; i < corpus.users.size(); ++i) {
      if (corpus.population[i] != PopulationTag::unseen) continue;
      const UserDataset& user = corpus.users[i];
      std::vector<PreferencePair> test = test_pairs(user);
      if (test.empty()) continue;
      if (train_pairs(user).size() < shots) {
        ++skipped;
        continue;
      }
      UserWeights w{params.w0};
      if (shots > 0) w = adapt_user(params, shot_prefix(user, cfg.seed, shots), cfg);
      sum += user_accuracy(params, w, user.user_id, PopulationTag::unseen, test).accuracy;
      ++n;
    }
    if (n == 0) {
      throw ValidationError("no unseen user has " + std::to_string(shots) + " train pairs to act as shots");
    }
    if (skipped > 0) {
      std::fprintf(stderr, "note: %zu unseen user(s) lack %zu train pairs and were skipped\n", skipped, shots);
    }
    out.push_back(FewshotRow{shots, sum / static_cast<double>(n), n});
  }
  return out;
}

enum class Variant { mrm, mean_agg, shared_bt, per_user, single_mlp };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::mrm: return "mrm";
    case Variant::mean_agg: return "mean";
    case Variant::shared_bt: return "shared-bt";
    case Variant::per_user: return "per-user";
    default: return "no-basis";
  }
}

inline Variant parse_variant(const std::string& s) {
  if (s == "mrm") return Variant::mrm;
  if (s == "mean") return Variant::mean_agg;
  if (s == "shared-bt") return Variant::shared_bt;
  if (s == "per-user") return Variant::per_user;
  if (s == "no-basis") return Variant::single_mlp;
  throw ValidationError("unknown variant \"" + s + "\" (expected mrm, mean, shared-bt, per-user or no-basis)");
}

// Stored trainable parameters as a function of the user count. The meta
// model keeps K bases, the shared init and one K-vector per user; the
// per-user baseline keeps an entire model per user.
inline long long count_trainable_params(Variant v, long long n_users, int k, int d, Arch arch, int hidden) {
  if (n_users < 0 || k <= 0 || d <= 0) throw ValidationError("parameter counting needs n_users >= 0, k > 0, d > 0");
  if (arch == Arch::mlp1 && hidden <= 0) throw ValidationError("parameter counting needs hidden > 0 for mlp1");
  long long size_phi = arch == Arch::linear ? d + 1 : static_cast<long long>(hidden) * d + 2 * hidden + 1;
  switch (v) {
    case Variant::mrm:
    case Variant::mean_agg:
      return k * size_phi + k + n_users * k;
    case Variant::shared_bt:
      return size_phi + 1;
    case Variant::per_user:
      return n_users * (k * size_phi + k);
    default:  // one shared net plus one adapted copy per user
      return size_phi + n_users * size_phi;
  }
}

namespace detail {

// Pooled Bradley-Terry loss over a set of users' train pairs, with
// gradients for the weight vector and the bases. Used by the non-meta
// baselines.
inline double pooled_loss_grad(const ModelParams& params, const Vec& w, std::span<const UserDataset* const> users, Vec& grad_w, std::vector<PhiParams>& grad_phis) {
  double loss = 0.0;
  for (const UserDataset* user : users) {
    for (const auto& pair : user->pairs) {
      if (pair.split != SplitTag::train) continue;
      Vec f = pair_features(params, pair);
      double z = dot(f, w);
      loss += softplus(-z);
      double r = sigmoid(-z);
      axpy(-r, f, grad_w);
      for (int kk = 0; kk < params.k; ++kk) {
        phi_pair_backward(params.phis[kk], pair, -r * w[kk], grad_phis[kk]);
      }
    }
  }
  return loss;
}

inline std::vector<std::size_t> seen_user_indices(const Corpus& corpus) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    if (corpus.population[i] == PopulationTag::seen) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return corpus.users[a].user_id < corpus.users[b].user_id;
  });
  return idx;
}

}  // namespace detail

// One global weight and basis set fit to all seen users' train pairs
// pooled together; evaluation applies it to everyone unchanged.
inline ModelParams train_shared_bt(const Corpus& corpus, const MetaConfig& cfg, Arch arch, int hidden) {
  validate(cfg);
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");
  std::vector<std::size_t> seen = detail::seen_user_indices(corpus);
  if (seen.empty()) throw ValidationError("no seen users to train on");

  ModelParams params = init_model(1, static_cast<int>(corpus.dim), arch, hidden, derive_seed(cfg.seed, "init"));
  AdamState adam(flatten_params(params).size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng g(derive_seed(derive_seed(cfg.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
    shuffle(seen, g);
    std::size_t n_batches = (seen.size() + cfg.meta_batch - 1) / cfg.meta_batch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * cfg.meta_batch;
      std::size_t hi = std::min(seen.size(), lo + cfg.meta_batch);
      std::vector<const UserDataset*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&corpus.users[seen[i]]);
      std::sort(batch.begin(), batch.end(), [](const UserDataset* x, const UserDataset* y) { return x->user_id < y->user_id; });

      Vec grad_w(1, 0.0);
      std::vector<PhiParams> grad_phis{zeros_like(params.phis[0])};
      double loss = detail::pooled_loss_grad(params, params.w0, batch, grad_w, grad_phis);
      MetaGradient g2;
      g2.grad_w0 = grad_w;
      g2.grad_phis = grad_phis;
      g2.per_user_query_loss = {loss};
      if (!detail::grad_finite(g2)) {
        throw DivergenceError("shared model training diverged at epoch " + std::to_string(epoch));
      }
      Vec flat = flatten_params(params);
      Vec flat_grad = flatten_grad(g2);
      adam.update(flat, flat_grad, cfg.beta);
      unflatten_params(flat, params);
    }
  }
  return params;
}

// Shared bases plus an independent weight vector per seen user, all fit
// jointly on pooled train pairs with no inner/outer split. Unseen users get
// a fresh weight vector fit on their shots with the bases frozen.
inline EvalReport run_per_user_baseline(const Corpus& corpus, const MetaConfig& cfg, Arch arch, int hidden, std::size_t shots) {
  validate(cfg);
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");
  std::vector<std::size_t> seen = detail::seen_user_indices(corpus);
  if (seen.empty()) throw ValidationError("no seen users to train on");

  ModelParams params = init_model(cfg.k, static_cast<int>(corpus.dim), arch, hidden, derive_seed(cfg.seed, "init"));
  std::map<std::string, Vec> user_w;
  for (std::size_t i : seen) user_w[corpus.users[i].user_id] = Vec(cfg.k, 1.0 / cfg.k);

  // one flat Adam over [bases | user weights in id order]
  std::size_t phi_size = flatten_params(params).size() - cfg.k;
  auto flatten_all = [&]() {
    Vec flat = flatten_params(params);
    flat.erase(flat.begin(), flat.begin() + cfg.k);  // w0 is unused here
    for (const auto& [id, w] : user_w) flat.insert(flat.end(), w.begin(), w.end());
    return flat;
  };
  auto unflatten_all = [&](const Vec& flat) {
    Vec model_flat(params.w0.begin(), params.w0.end());
    model_flat.insert(model_flat.end(), flat.begin(), flat.begin() + phi_size);
    unflatten_params(model_flat, params);
    std::size_t off = phi_size;
    for (auto& [id, w] : user_w) {
      for (auto& x : w) x = flat[off++];
    }
  };
  AdamState adam(phi_size + user_w.size() * cfg.k, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng g(derive_seed(derive_seed(cfg.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
    shuffle(seen, g);
    std::size_t n_batches = (seen.size() + cfg.meta_batch - 1) / cfg.meta_batch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * cfg.meta_batch;
      std::size_t hi = std::min(seen.size(), lo + cfg.meta_batch);
      std::vector<std::size_t> batch(seen.begin() + lo, seen.begin() + hi);
      std::sort(batch.begin(), batch.end(), [&](std::size_t x, std::size_t y) {
        return corpus.users[x].user_id < corpus.users[y].user_id;
      });

      std::vector<PhiParams> grad_phis;
      for (const auto& p : params.phis) grad_phis.push_back(zeros_like(p));
      std::map<std::string, Vec> grad_w;
      double loss = 0.0;
      for (std::size_t i : batch) {
        const UserDataset& user = corpus.users[i];
        const Vec& w = user_w.at(user.user_id);
        Vec gw(cfg.k, 0.0);
        std::vector<const UserDataset*> one{&user};
        loss += detail::pooled_loss_grad(params, w, one, gw, grad_phis);
        grad_w[user.user_id] = std::move(gw);
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("per-user baseline diverged at epoch " + std::to_string(epoch));
      }

      Vec flat_grad(phi_size + user_w.size() * cfg.k, 0.0);
      {
        MetaGradient g2;
        g2.grad_w0 = Vec(cfg.k, 0.0);
        g2.grad_phis = grad_phis;
        Vec with_w0 = flatten_grad(g2);
        std::copy(with_w0.begin() + cfg.k, with_w0.end(), flat_grad.begin());
        std::size_t off = phi_size;
        for (const auto& [id, w] : user_w) {
          auto it = grad_w.find(id);
          if (it != grad_w.end()) std::copy(it->second.begin(), it->second.end(), flat_grad.begin() + off);
          off += cfg.k;
        }
      }
      Vec flat = flatten_all();
      adam.update(flat, flat_grad, cfg.beta);
      if (!all_finite(flat)) {
        throw DivergenceError("per-user baseline diverged at epoch " + std::to_string(epoch));
      }
      unflatten_all(flat);
    }
  }

  // frozen-basis weight fit for users outside the training set, on the same
  // optimizer budget
  auto fit_fresh = [&](const UserDataset& user) {
    Vec w(cfg.k, 1.0 / cfg.k);
    std::vector<PreferencePair> shot = shot_prefix(user, cfg.seed, shots);
    if (shot.empty()) return w;
    std::vector<Vec> feats = features_of(params, shot);
    AdamState opt(w.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      LossStats s = bt_loss_features(feats, w, false);
      opt.update(w, s.grad_w, cfg.beta);
    }
    return w;
  };

  std::vector<UserResult> rows;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    const UserDataset& user = corpus.users[i];
    std::vector<PreferencePair> test = test_pairs(user);
    if (test.empty()) continue;
    Vec w;
    if (corpus.population[i] == PopulationTag::seen && user_w.count(user.user_id)) {
      w = user_w.at(user.user_id);
    } else {
      w = fit_fresh(user);
    }
    rows.push_back(user_accuracy(params, UserWeights{w}, user.user_id, corpus.population[i], test));
  }
  return make_report(std::move(rows));
}

namespace detail {

inline double net_loss_grad(const PhiParams& net, std::span<const PreferencePair> pairs, PhiParams* grad) {
  double loss = 0.0;
  for (const auto& pair : pairs) {
    double z = phi_forward(net, pair.emb_chosen).score - phi_forward(net, pair.emb_rejected).score;
    loss += softplus(-z);
    if (grad) phi_pair_backward(net, pair, -sigmoid(-z), *grad);
  }
  return loss;
}

inline void net_axpy(double a, const PhiParams& x, PhiParams& y) {
  axpy(a, x.w1, y.w1);
  axpy(a, x.b1, y.b1);
  axpy(a, x.w2, y.w2);
  axpy(a, x.b2, y.b2);
}

inline PhiParams adapt_net(const PhiParams& net, std::span<const PreferencePair> pairs, double alpha, int n_inner) {
  PhiParams out = net;
  for (int step = 0; step < n_inner; ++step) {
    PhiParams grad = zeros_like(out);
    net_loss_grad(out, pairs, &grad);
    net_axpy(-alpha, grad, out);
  }
  return out;
}

inline Vec net_flatten(const PhiParams& p) {
  Vec flat;
  flat.insert(flat.end(), p.w1.begin(), p.w1.end());
  flat.insert(flat.end(), p.b1.begin(), p.b1.end());
  flat.insert(flat.end(), p.w2.begin(), p.w2.end());
  flat.insert(flat.end(), p.b2.begin(), p.b2.end());
  return flat;
}

inline void net_unflatten(const Vec& flat, PhiParams& p) {
  std::size_t i = 0;
  for (auto& x : p.w1) x = flat[i++];
  for (auto& x : p.b1) x = flat[i++];
  for (auto& x : p.w2) x = flat[i++];
  for (auto& x : p.b2) x = flat[i++];
}

}  // namespace detail

// Single network, no basis decomposition: the inner loop adapts every
// parameter of the net (first-order), the outer loop updates the shared net
// from the adapted query losses under the same robust aggregation.
inline EvalReport run_single_mlp_baseline(const Corpus& corpus, const MetaConfig& cfg, int hidden, std::size_t shots) {
  validate(cfg);
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");

  std::vector<TaskSplit> tasks;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    if (corpus.population[i] != PopulationTag::seen) continue;
    if (train_pairs(corpus.users[i]).size() < 2) continue;
    tasks.push_back(split_support_query(corpus.users[i], cfg.support_fraction, cfg.seed));
  }
  if (tasks.empty()) throw ValidationError("no trainable users (need seen users with at least 2 train pairs)");
  std::sort(tasks.begin(), tasks.end(), [](const TaskSplit& a, const TaskSplit& b) { return a.user_id < b.user_id; });

  ModelParams seed_model = init_model(1, static_cast<int>(corpus.dim), Arch::mlp1, hidden, derive_seed(cfg.seed, "init"));
  PhiParams net = seed_model.phis[0];
  AdamState adam(detail::net_flatten(net).size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  std::vector<std::size_t> order(tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng g(derive_seed(derive_seed(cfg.seed, "epoch"), static_cast<std::uint64_t>(epoch)));
    shuffle(order, g);
    std::size_t n_batches = (tasks.size() + cfg.meta_batch - 1) / cfg.meta_batch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * cfg.meta_batch;
      std::size_t hi = std::min(tasks.size(), lo + cfg.meta_batch);
      std::vector<const TaskSplit*> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&tasks[order[i]]);
      std::sort(batch.begin(), batch.end(), [](const TaskSplit* x, const TaskSplit* y) { return x->user_id < y->user_id; });

      std::vector<PhiParams> adapted;
      std::vector<double> losses;
      for (const TaskSplit* t : batch) {
        PhiParams net_i = detail::adapt_net(net, t->support, cfg.alpha, cfg.n_inner);
        losses.push_back(detail::net_loss_grad(net_i, t->query, nullptr));
        adapted.push_back(std::move(net_i));
      }
      RpoResult rpo = aggregate_losses(losses, cfg);
      PhiParams grad = zeros_like(net);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (rpo.weights[i] == 0.0) continue;
        PhiParams gi = zeros_like(net);
        detail::net_loss_grad(adapted[i], batch[i]->query, &gi);
        detail::net_axpy(rpo.weights[i], gi, grad);
      }
      Vec flat = detail::net_flatten(net);
      Vec flat_grad = detail::net_flatten(grad);
      if (!all_finite(flat_grad) || !all_finite(losses)) {
        throw DivergenceError("single-net baseline diverged at epoch " + std::to_string(epoch));
      }
      adam.update(flat, flat_grad, cfg.beta);
      detail::net_unflatten(flat, net);
    }
  }

  std::vector<UserResult> rows;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    const UserDataset& user = corpus.users[i];
    std::vector<PreferencePair> test = test_pairs(user);
    if (test.empty()) continue;
    PhiParams net_u = net;
    if (shots > 0) {
      std::vector<PreferencePair> shot = shot_prefix(user, cfg.seed, shots);
      if (!shot.empty()) net_u = detail::adapt_net(net, shot, cfg.alpha, cfg.n_inner);
    }
    ModelParams wrapped;
    wrapped.k = 1;
    wrapped.w0 = {1.0};
    wrapped.phis = {std::move(net_u)};
    rows.push_back(user_accuracy(wrapped, UserWeights{{1.0}}, user.user_id, corpus.population[i], test));
  }
  return make_report(std::move(rows));
}

inline EvalReport run_baseline(Variant v, const Corpus& corpus, const MetaConfig& cfg, Arch arch, int hidden, std::size_t shots) {
  switch (v) {
    case Variant::mrm: {
      auto [params, log] = meta_train(corpus, cfg, arch, hidden);
      return evaluate_corpus(params, corpus, cfg, shots);
    }
    case Variant::mean_agg: {
      MetaConfig c2 = cfg;
      c2.aggregate = AggregateMode::mean;
      auto [params, log] = meta_train(corpus, c2, arch, hidden);
      return evaluate_corpus(params, corpus, c2, shots);
    }
    case Variant::shared_bt: {
      ModelParams params = train_shared_bt(corpus, cfg, arch, hidden);
      MetaConfig c2 = cfg;
      c2.k = 1;
      return evaluate_corpus(params, corpus, c2, 0);
    }
    case Variant::per_user:
      return run_per_user_baseline(corpus, cfg, arch, hidden, shots);
    default:
      return run_single_mlp_baseline(corpus, cfg, hidden, shots);
  }
}

}  // namespace mrm
