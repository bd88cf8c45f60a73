#pragma once
// Bradley-Terry preference likelihood over pair logits z = <w, f> where f is
// a per-pair feature row (base-function gap between chosen and rejected).
// The loss is the summed negative log-likelihood, sum_p softplus(-z_p).

#include <cmath>
#include <span>
#include <vector>

#include "mrm/rewardnet.hpp"
#include "mrm/util.hpp"

namespace mrm {

// Two-branch forms: neither exp ever sees a positive argument, so there is
// no overflow at any |z|.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double log_sigmoid(double z) { return -softplus(-z); }

// P(chosen preferred) under rewards (r_plus, r_minus).
inline double bt_prob(double r_plus, double r_minus) { return sigmoid(r_plus - r_minus); }

struct LossStats {
  double loss = 0.0;
  Vec grad_w;
  // K x K, filled only when requested.
  std::vector<Vec> hess_w;
  // sigma(-z_p) per pair, the per-pair gradient magnitude.
  Vec residuals;
};

// Loss over precomputed feature rows. grad = -sum_p sigma(-z_p) f_p,
// hessian = sum_p sigma(z_p) sigma(-z_p) f_p f_p^T (always PSD).
inline LossStats bt_loss_features(const std::vector<Vec>& feats, const Vec& w, bool want_hessian = false) {
  if (feats.empty()) throw ValidationError("bt_loss: empty pair list");
  std::size_t k = w.size();
  LossStats out;
  out.grad_w.assign(k, 0.0);
  out.residuals.reserve(feats.size());
  if (want_hessian) out.hess_w.assign(k, Vec(k, 0.0));
  for (const Vec& f : feats) {
    if (f.size() != k) throw ValidationError("bt_loss: feature row size does not match weight count");
    double z = dot(f, w);
    out.loss += softplus(-z);
    double r = sigmoid(-z);
    out.residuals.push_back(r);
    axpy(-r, f, out.grad_w);
    if (want_hessian) {
      double c = sigmoid(z) * r;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) out.hess_w[i][j] += c * f[i] * f[j];
      }
    }
  }
  return out;
}

inline std::vector<Vec> features_of(const ModelParams& m, std::span<const PreferencePair> pairs) {
  std::vector<Vec> feats;
  feats.reserve(pairs.size());
  for (const auto& p : pairs) feats.push_back(pair_features(m, p));
  return feats;
}

inline LossStats bt_loss(const ModelParams& m, const UserWeights& w, std::span<const PreferencePair> pairs, bool want_hessian = false) {
  if (w.w.size() != static_cast<std::size_t>(m.k)) {
    throw ValidationError("bt_loss: user weight count does not match model k");
  }
  return bt_loss_features(features_of(m, pairs), w.w, want_hessian);
}

}  // namespace mrm
