#pragma once
// Bi-level training. Inner loop: each user's weights start at the shared
// init w0 and take n_inner gradient steps on their support pairs. Outer
// loop: Adam on (w0, bases) against the robust aggregate of query losses.
//
// In exact mode the outer gradient differentiates through the whole inner
// trajectory. With per-pair support features F and logits z_p = <F_p, w>,
// one inner GD step is w' = w - alpha * g(w), so the reverse sweep carries
// v through the Jacobian transpose (I - alpha * H(w_t)) and peels off, at
// every step, the mixed derivative of g(w_t) with respect to the base
// function parameters. All curvature lives in K x K space; base parameters
// only ever appear through feature rows, which keeps the sweep cheap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrm/btcore.hpp"
#include "mrm/corpus.hpp"
#include "mrm/rewardnet.hpp"
#include "mrm/rng.hpp"
#include "mrm/rpo.hpp"
#include "mrm/util.hpp"

namespace mrm {

enum class GradMode { exact, first_order };
enum class InnerOpt { gd, adam };
enum class AggregateMode { mean, hard, soft };

inline std::string grad_mode_name(GradMode m) { return m == GradMode::exact ? "exact" : "first_order"; }
inline std::string inner_opt_name(InnerOpt o) { return o == InnerOpt::gd ? "gd" : "adam"; }
inline std::string aggregate_name(AggregateMode a) {
  switch (a) {
    case AggregateMode::mean: return "mean";
    case AggregateMode::hard: return "hard";
    default: return "soft";
  }
}

inline GradMode parse_grad_mode(const std::string& s) {
  if (s == "exact") return GradMode::exact;
  if (s == "first_order") return GradMode::first_order;
  throw ValidationError("unknown grad_mode \"" + s + "\" (expected exact or first_order)");
}

inline InnerOpt parse_inner_opt(const std::string& s) {
  if (s == "gd") return InnerOpt::gd;
  if (s == "adam") return InnerOpt::adam;
  throw ValidationError("unknown inner_opt \"" + s + "\" (expected gd or adam)");
}

inline AggregateMode parse_aggregate(const std::string& s) {
  if (s == "mean") return AggregateMode::mean;
  if (s == "hard") return AggregateMode::hard;
  if (s == "soft") return AggregateMode::soft;
  throw ValidationError("unknown aggregate \"" + s + "\" (expected mean, hard or soft)");
}

struct MetaConfig {
  double alpha = 1e-3;
  double beta = 1e-3;
  int n_inner = 1;
  int k = 2;
  int meta_batch = 2;
  double rho = 0.5;
  double gamma = 0.5;
  double support_fraction = 0.1;
  int epochs = -1;  // required: negative means "not set"
  std::uint64_t seed = 42;
  GradMode grad_mode = GradMode::exact;
  InnerOpt inner_opt = InnerOpt::gd;
  AggregateMode aggregate = AggregateMode::soft;
  int threads = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

inline void validate(const MetaConfig& cfg) {
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw ValidationError("alpha must be finite and >= 0");
  if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) throw ValidationError("beta must be finite and >= 0");
  if (cfg.n_inner < 0) throw ValidationError("n_inner must be >= 0");
  if (cfg.k <= 0) throw ValidationError("k must be positive");
  if (cfg.meta_batch <= 0) throw ValidationError("meta_batch must be positive");
  if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) throw ValidationError("rho must lie in [0,1]");
  if (cfg.aggregate == AggregateMode::soft && !(cfg.gamma >= 0.0)) {
    throw ValidationError("gamma must be >= 0");
  }
  if (!(cfg.support_fraction > 0.0 && cfg.support_fraction < 1.0)) {
    throw ValidationError("support_fraction must lie in (0,1)");
  }
  if (cfg.epochs < 0) throw ValidationError("epochs is required and must be >= 0");
  if (cfg.threads < 1) throw ValidationError("threads must be >= 1");
  if (cfg.grad_mode == GradMode::exact && cfg.inner_opt == InnerOpt::adam) {
    throw ValidationError("exact meta-gradients are only defined for gd inner steps; use grad_mode=first_order with inner_opt=adam");
  }
}

struct AdamState {
  Vec m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double b1 = 0.9, double b2 = 0.999, double e = 1e-8)
      : m(n, 0.0), v(n, 0.0), beta1(b1), beta2(b2), eps(e) {}

  void update(Vec& theta, const Vec& grad, double lr) {
    if (theta.size() != m.size() || grad.size() != m.size()) {
      throw ValidationError("adam state size does not match parameters");
    }
    ++step;
    double c1 = 1.0 - std::pow(beta1, step);
    double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

// Inner iterates w_0 .. w_n; the reverse sweep replays them.
struct InnerTrace {
  std::vector<Vec> iterates;
};

inline Vec inner_adapt_features(const std::vector<Vec>& feats, const Vec& w0, const MetaConfig& cfg, InnerTrace* trace = nullptr) {
  Vec w = w0;
  if (trace) {
    trace->iterates.clear();
    trace->iterates.push_back(w);
  }
  if (cfg.n_inner == 0) return w;
  if (feats.empty()) throw ValidationError("inner adaptation needs a nonempty support set");
  AdamState adam;
  if (cfg.inner_opt == InnerOpt::adam) adam = AdamState(w.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  for (int step = 0; step < cfg.n_inner; ++step) {
    LossStats s = bt_loss_features(feats, w, false);
    if (cfg.inner_opt == InnerOpt::gd) {
      axpy(-cfg.alpha, s.grad_w, w);
    } else {
      adam.update(w, s.grad_w, cfg.alpha);
    }
    if (trace) trace->iterates.push_back(w);
  }
  return w;
}

inline UserWeights inner_adapt(const ModelParams& params, std::span<const PreferencePair> support, const MetaConfig& cfg, InnerTrace* trace = nullptr) {
  if (cfg.n_inner > 0 && support.empty()) {
    throw ValidationError("inner adaptation needs a nonempty support set");
  }
  return UserWeights{inner_adapt_features(features_of(params, support), params.w0, cfg, trace)};
}

// Few-shot personalization for a single user: same procedure as the inner
// loop, run on whatever pairs the user has provided.
inline UserWeights adapt_user(const ModelParams& params, std::span<const PreferencePair> shots, const MetaConfig& cfg) {
  if (shots.empty()) throw ValidationError("adaptation needs at least one pair");
  return inner_adapt(params, shots, cfg);
}

struct MetaGradient {
  Vec grad_w0;
  std::vector<PhiParams> grad_phis;
  std::vector<double> per_user_query_loss;
  std::vector<double> rpo_weights;
  double tau = -std::numeric_limits<double>::infinity();
  double aggregate = 0.0;
};

inline RpoResult aggregate_losses(const std::vector<double>& losses, const MetaConfig& cfg) {
  switch (cfg.aggregate) {
    case AggregateMode::mean:
      return mean_aggregate(losses);
    case AggregateMode::hard:
      return hard_aggregate(losses, cfg.rho);
    default:
      // gamma = 0 degenerates to the hard cutoff rather than dividing by zero
      if (cfg.gamma == 0.0) return hard_aggregate(losses, cfg.rho);
      return soft_aggregate(losses, cfg.rho, cfg.gamma);
  }
}

namespace detail {

// upstream d(score gap)/d(params): +coeff at the chosen side, -coeff at the
// rejected side.
inline void phi_pair_backward(const PhiParams& phi, const PreferencePair& pair, double coeff, PhiParams& grad) {
  if (coeff == 0.0) return;
  PhiEval ec = phi_forward(phi, pair.emb_chosen);
  phi_backward(phi, pair.emb_chosen, ec, coeff, grad);
  PhiEval er = phi_forward(phi, pair.emb_rejected);
  phi_backward(phi, pair.emb_rejected, er, -coeff, grad);
}

struct TaskGrad {
  Vec grad_w0;
  std::vector<PhiParams> grad_phis;
};

// Gradient of c * L_query(w_n(theta)) for one task. v carries the adjoint
// of the current iterate; at the end it equals the w0 block.
inline TaskGrad task_gradient(const ModelParams& params, const TaskSplit& task, const std::vector<Vec>& fs, const std::vector<Vec>& fq, const Vec& q_resid, const InnerTrace& trace, double c, const MetaConfig& cfg) {
  std::size_t k = params.w0.size();
  TaskGrad out;
  out.grad_w0.assign(k, 0.0);
  out.grad_phis.reserve(k);
  for (const auto& p : params.phis) out.grad_phis.push_back(zeros_like(p));

  const Vec& wn = trace.iterates.back();

  // query loss: w gradient and the direct dependence on the bases
  Vec v(k, 0.0);
  for (std::size_t p = 0; p < fq.size(); ++p) {
    axpy(-c * q_resid[p], fq[p], v);
    for (std::size_t kk = 0; kk < k; ++kk) {
      phi_pair_backward(params.phis[kk], task.query[p], -c * q_resid[p] * wn[kk], out.grad_phis[kk]);
    }
  }

  if (cfg.grad_mode == GradMode::exact && cfg.inner_opt == InnerOpt::gd && cfg.alpha != 0.0) {
    // reverse sweep over the inner steps
    std::size_t ms = fs.size();
    Vec sp(ms), sm(ms), a(ms);
    for (int t = cfg.n_inner - 1; t >= 0; --t) {
      const Vec& wt = trace.iterates[t];
      for (std::size_t p = 0; p < ms; ++p) {
        double z = dot(fs[p], wt);
        sp[p] = sigmoid(z);
        sm[p] = sigmoid(-z);
        a[p] = dot(fs[p], v);
      }
      // mixed derivative of the step's gradient w.r.t. the bases
      for (std::size_t p = 0; p < ms; ++p) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          double coeff = -cfg.alpha * (sp[p] * sm[p] * wt[kk] * a[p] - sm[p] * v[kk]);
          phi_pair_backward(params.phis[kk], task.support[p], coeff, out.grad_phis[kk]);
        }
      }
      // v <- (I - alpha * H_support(wt)) v
      Vec hv(k, 0.0);
      for (std::size_t p = 0; p < ms; ++p) axpy(sp[p] * sm[p] * a[p], fs[p], hv);
      axpy(-cfg.alpha, hv, v);
    }
  }

  out.grad_w0 = std::move(v);
  return out;
}

}  // namespace detail

// One outer gradient over a batch of tasks. Per-task work is independent
// and may run on cfg.threads threads; the reduction always walks tasks in
// input order, so the result is bitwise identical for any thread count.
inline MetaGradient meta_gradient(const ModelParams& params, std::span<const TaskSplit* const> tasks, const MetaConfig& cfg) {
  validate(cfg);
  check_shape(params);
  if (params.k != cfg.k) {
    throw ValidationError("model k=" + std::to_string(params.k) + " does not match config k=" + std::to_string(cfg.k));
  }
  if (tasks.empty()) throw ValidationError("meta gradient over an empty task batch");

  struct TaskWork {
    std::vector<Vec> fs, fq;
    InnerTrace trace;
    double loss = 0.0;
    Vec q_resid;
  };
  std::vector<TaskWork> work(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    const TaskSplit& task = *tasks[i];
    if (task.query.empty()) {
      throw ValidationError("user " + task.user_id + " has an empty query set");
    }
    if (cfg.n_inner > 0 && task.support.empty()) {
      throw ValidationError("user " + task.user_id + " has an empty support set");
    }
    TaskWork& tw = work[i];
    tw.fs = features_of(params, task.support);
    tw.fq = features_of(params, task.query);
    inner_adapt_features(tw.fs, params.w0, cfg, &tw.trace);
    LossStats q = bt_loss_features(tw.fq, tw.trace.iterates.back(), false);
    tw.loss = q.loss;
    tw.q_resid = std::move(q.residuals);
  });

  MetaGradient out;
  out.per_user_query_loss.reserve(tasks.size());
  for (const auto& tw : work) out.per_user_query_loss.push_back(tw.loss);
  RpoResult rpo = aggregate_losses(out.per_user_query_loss, cfg);
  out.rpo_weights = rpo.weights;
  out.tau = rpo.tau;
  out.aggregate = rpo.aggregate;

  std::vector<detail::TaskGrad> grads(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    if (rpo.weights[i] == 0.0) return;
    grads[i] = detail::task_gradient(params, *tasks[i], work[i].fs, work[i].fq, work[i].q_resid, work[i].trace, rpo.weights[i], cfg);
  });

  out.grad_w0.assign(params.w0.size(), 0.0);
  out.grad_phis.reserve(params.phis.size());
  for (const auto& p : params.phis) out.grad_phis.push_back(zeros_like(p));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (rpo.weights[i] == 0.0) continue;
    axpy(1.0, grads[i].grad_w0, out.grad_w0);
    for (std::size_t kk = 0; kk < params.phis.size(); ++kk) {
      axpy(1.0, grads[i].grad_phis[kk].w1, out.grad_phis[kk].w1);
      axpy(1.0, grads[i].grad_phis[kk].b1, out.grad_phis[kk].b1);
      axpy(1.0, grads[i].grad_phis[kk].w2, out.grad_phis[kk].w2);
      axpy(1.0, grads[i].grad_phis[kk].b2, out.grad_phis[kk].b2);
    }
  }
  return out;
}

inline MetaGradient meta_gradient(const ModelParams& params, const std::vector<TaskSplit>& tasks, const MetaConfig& cfg) {
  std::vector<const TaskSplit*> ptrs;
  ptrs.reserve(tasks.size());
  for (const auto& t : tasks) ptrs.push_back(&t);
  return meta_gradient(params, std::span<const TaskSplit* const>(ptrs), cfg);
}

// Flat view of (w0, bases) for the outer Adam step and for finite
// differences. Layout: w0, then per base function w1, b1, w2, b2.
inline std::vector<std::pair<std::string, std::size_t>> flat_layout(const ModelParams& m) {
  std::vector<std::pair<std::string, std::size_t>> blocks;
  blocks.emplace_back("w0", m.w0.size());
  for (std::size_t kk = 0; kk < m.phis.size(); ++kk) {
    std::string base = "phi" + std::to_string(kk);
    blocks.emplace_back(base + ".w1", m.phis[kk].w1.size());
    blocks.emplace_back(base + ".b1", m.phis[kk].b1.size());
    if (!m.phis[kk].w2.empty()) blocks.emplace_back(base + ".w2", m.phis[kk].w2.size());
    if (!m.phis[kk].b2.empty()) blocks.emplace_back(base + ".b2", m.phis[kk].b2.size());
  }
  return blocks;
}

inline Vec flatten_params(const ModelParams& m) {
  Vec flat;
  flat.insert(flat.end(), m.w0.begin(), m.w0.end());
  for (const auto& p : m.phis) {
    flat.insert(flat.end(), p.w1.begin(), p.w1.end());
    flat.insert(flat.end(), p.b1.begin(), p.b1.end());
    flat.insert(flat.end(), p.w2.begin(), p.w2.end());
    flat.insert(flat.end(), p.b2.begin(), p.b2.end());
  }
  return flat;
}

inline void unflatten_params(const Vec& flat, ModelParams& m) {
  std::size_t i = 0;
  auto take = [&](Vec& dst) {
    for (auto& x : dst) x = flat[i++];
  };
  take(m.w0);
  for (auto& p : m.phis) {
    take(p.w1);
    take(p.b1);
    take(p.w2);
    take(p.b2);
  }
  if (i != flat.size()) throw ValidationError("flat parameter size does not match model shape");
}

inline Vec flatten_grad(const MetaGradient& g) {
  Vec flat;
  flat.insert(flat.end(), g.grad_w0.begin(), g.grad_w0.end());
  for (const auto& p : g.grad_phis) {
    flat.insert(flat.end(), p.w1.begin(), p.w1.end());
    flat.insert(flat.end(), p.b1.begin(), p.b1.end());
    flat.insert(flat.end(), p.w2.begin(), p.w2.end());
    flat.insert(flat.end(), p.b2.begin(), p.b2.end());
  }
  return flat;
}

inline double grad_norm_phis(const MetaGradient& g) {
  double s = 0.0;
  for (const auto& p : g.grad_phis) {
    s += dot(p.w1, p.w1) + dot(p.b1, p.b1) + dot(p.w2, p.w2) + dot(p.b2, p.b2);
  }
  return std::sqrt(s);
}

struct TrainLogRow {
  int epoch = 0;
  int batch = 0;
  double mean_query_loss = 0.0;
  double tau = 0.0;
  int retained_users = 0;
  double grad_norm_w0 = 0.0;
  double grad_norm_phi = 0.0;
  // kept in memory for diagnostics; not part of the CSV
  std::vector<double> user_losses;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  double epoch_mean_loss(int epoch) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.epoch != epoch) continue;
      for (double l : r.user_losses) {
        s += l;
        ++n;
      }
    }
    if (n == 0) throw ValidationError("no log rows for epoch " + std::to_string(epoch));
    return s / static_cast<double>(n);
  }
};

// Divergence with the last finite state attached so callers can dump it.
struct TrainingDiverged : DivergenceError {
  ModelParams last_params;
  TrainLog log;
  TrainingDiverged(const std::string& what, ModelParams params, TrainLog trainlog)
      : DivergenceError(what), last_params(std::move(params)), log(std::move(trainlog)) {}
};

namespace detail {

inline bool grad_finite(const MetaGradient& g) {
  if (!all_finite(g.grad_w0) || !all_finite(g.per_user_query_loss)) return false;
  for (const auto& p : g.grad_phis) {
    if (!all_finite(p.w1) || !all_finite(p.b1) || !all_finite(p.w2) || !all_finite(p.b2)) return false;
  }
  return true;
}

}  // namespace detail

// Builds the per-user support/query splits once (they are static across
// epochs), then runs epochs x batches of outer Adam steps over the seen
// users. Users lacking two train pairs are skipped.
inline std::pair<ModelParams, TrainLog> meta_train(const Corpus& corpus, const MetaConfig& cfg, Arch arch = Arch::linear, int hidden = 64) {
  validate(cfg);
  if (!corpus.tagged()) throw ValidationError("corpus has no population split");

  std::vector<TaskSplit> tasks;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    if (corpus.population[i] != PopulationTag::seen) continue;
    const UserDataset& user = corpus.users[i];
    if (train_pairs(user).size() < 2) {
      ++skipped;
      continue;
    }
    tasks.push_back(split_support_query(user, cfg.support_fraction, cfg.seed));
  }
  if (tasks.empty()) throw ValidationError("no trainable users (need seen users with at least 2 train pairs)");
  if (skipped > 0) {
    std::fprintf(stderr, "note: skipped %zu seen user(s) with fewer than 2 train pairs\n", skipped);
  }
  std::sort(tasks.begin(), tasks.end(), [](const TaskSplit& a, const TaskSplit& b) { return a.user_id < b.user_id; });

  ModelParams params = init_model(cfg.k, static_cast<int>(corpus.dim), arch, hidden, derive_seed(cfg.seed, "init"));
  AdamState adam(flatten_params(params).size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  TrainLog log;

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
      batch.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&tasks[order[i]]);
      // canonical order inside the batch, so task permutations cannot change
      // the reduction order
      std::sort(batch.begin(), batch.end(), [](const TaskSplit* x, const TaskSplit* y) { return x->user_id < y->user_id; });

      MetaGradient grad = meta_gradient(params, std::span<const TaskSplit* const>(batch), cfg);
      if (!detail::grad_finite(grad)) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " batch " + std::to_string(b), params, log);
      }

      TrainLogRow row;
      row.epoch = epoch;
      row.batch = static_cast<int>(b);
      double s = 0.0;
      for (double l : grad.per_user_query_loss) s += l;
      row.mean_query_loss = s / static_cast<double>(grad.per_user_query_loss.size());
      row.tau = grad.tau;
      for (double c : grad.rpo_weights) {
        if (c > 0.5) ++row.retained_users;
      }
      row.grad_norm_w0 = norm2(grad.grad_w0);
      row.grad_norm_phi = grad_norm_phis(grad);
      row.user_losses = grad.per_user_query_loss;
      if (row.retained_users == 0) {
        std::fprintf(stderr, "warn: epoch %d batch %zu: no user above the loss threshold, step is a no-op\n", epoch, b);
      }
      log.rows.push_back(std::move(row));

      Vec flat = flatten_params(params);
      adam.update(flat, flatten_grad(grad), cfg.beta);
      if (!all_finite(flat)) {
        throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch) + " batch " + std::to_string(b), params, log);
      }
      unflatten_params(flat, params);
    }
  }
  return {std::move(params), std::move(log)};
}

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;
};

// Central-difference check of the full outer gradient. The retention
// weights are frozen at their base-point values, matching their role as
// constants in the objective; with that convention the comparison is exact
// up to O(step^2) even across the hard cutoff.
inline GradCheckReport finite_difference_check(const ModelParams& params, const std::vector<TaskSplit>& tasks, const MetaConfig& cfg, double step = 1e-5) {
  if (!(step > 0.0)) throw ValidationError("finite difference step must be positive");
  MetaGradient analytic = meta_gradient(params, tasks, cfg);
  const std::vector<double> frozen = analytic.rpo_weights;

  auto objective = [&](const ModelParams& theta) {
    double total = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (frozen[i] == 0.0) continue;
      std::vector<Vec> fs = features_of(theta, tasks[i].support);
      std::vector<Vec> fq = features_of(theta, tasks[i].query);
      Vec wn = inner_adapt_features(fs, theta.w0, cfg);
      total += frozen[i] * bt_loss_features(fq, wn).loss;
    }
    if (!std::isfinite(total)) throw DivergenceError("finite difference objective is non-finite");
    return total;
  };

  Vec flat = flatten_params(params);
  Vec flat_grad = flatten_grad(analytic);
  ModelParams work = params;

  GradCheckReport report;
  std::size_t offset = 0;
  for (const auto& [name, len] : flat_layout(params)) {
    GradCheckBlock block{name, 0.0};
    for (std::size_t j = offset; j < offset + len; ++j) {
      double saved = flat[j];
      flat[j] = saved + step;
      unflatten_params(flat, work);
      double fplus = objective(work);
      flat[j] = saved - step;
      unflatten_params(flat, work);
      double fminus = objective(work);
      flat[j] = saved;
      double fd = (fplus - fminus) / (2.0 * step);
      // Unit floor: coordinates with near-zero gradient are judged on an
      // absolute scale, keeping cancellation noise in fplus - fminus from
      // dominating the quotient.
      double denom = std::max({std::abs(fd), std::abs(flat_grad[j]), 1.0});
      block.max_rel_error = std::max(block.max_rel_error, std::abs(fd - flat_grad[j]) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(std::move(block));
    offset += len;
  }
  unflatten_params(flat, work);
  return report;
}

}  // namespace mrm
