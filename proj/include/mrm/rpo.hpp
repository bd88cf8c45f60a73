#pragma once
// Robust aggregation of per-user losses. Instead of averaging, training
// keeps only users whose loss exceeds a quantile threshold tau (the worst
// (1-rho) fraction), either with a hard cutoff or a smooth sigmoid gate.
// The weights act as constants in the objective: gradients flow through the
// per-user losses, never through tau or the gate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mrm/btcore.hpp"
#include "mrm/util.hpp"

namespace mrm {

struct RpoResult {
  double tau = -std::numeric_limits<double>::infinity();
  // One retention weight per loss, same order as the input.
  std::vector<double> weights;
  // sum_i weights[i] * losses[i]
  double aggregate = 0.0;
};

// tau is the m-th smallest loss with m = ceil((1-rho) * n); rho is the
// fraction of easiest users to drop. m = 0 (rho = 1 with small n rounding)
// means nothing is cut off and tau = -inf. The tiny slack before ceil
// absorbs representation error like (1-0.7)*10 = 3.0000000000000004.
inline double quantile_threshold(const std::vector<double>& losses, double rho) {
  if (losses.empty()) throw ValidationError("quantile threshold over an empty loss list");
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ValidationError("rho must lie in [0,1], got " + fmt_double(rho));
  }
  double n = static_cast<double>(losses.size());
  auto m = static_cast<std::size_t>(std::ceil((1.0 - rho) * n - 1e-9));
  if (m == 0) return -std::numeric_limits<double>::infinity();
  std::vector<double> sorted = losses;
  std::sort(sorted.begin(), sorted.end());
  return sorted[m - 1];
}

// Keeps strictly-above-threshold losses at weight 1, everything else 0.
inline RpoResult hard_aggregate(const std::vector<double>& losses, double rho) {
  RpoResult out;
  out.tau = quantile_threshold(losses, rho);
  out.weights.reserve(losses.size());
  for (double l : losses) {
    double c = l > out.tau ? 1.0 : 0.0;
    out.weights.push_back(c);
    out.aggregate += c * l;
  }
  return out;
}

// Smooth gate sigma((L - tau) / gamma); gamma -> 0 recovers the hard cutoff.
inline RpoResult soft_aggregate(const std::vector<double>& losses, double rho, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("soft aggregation needs gamma > 0, got " + fmt_double(gamma));
  RpoResult out;
  out.tau = quantile_threshold(losses, rho);
  out.weights.reserve(losses.size());
  for (double l : losses) {
    double c = sigmoid((l - out.tau) / gamma);
    out.weights.push_back(c);
    out.aggregate += c * l;
  }
  return out;
}

// Plain sum, every user kept. tau = -inf marks "no threshold" in logs.
inline RpoResult mean_aggregate(const std::vector<double>& losses) {
  if (losses.empty()) throw ValidationError("aggregation over an empty loss list");
  RpoResult out;
  out.weights.assign(losses.size(), 1.0);
  for (double l : losses) out.aggregate += l;
  return out;
}

}  // namespace mrm
