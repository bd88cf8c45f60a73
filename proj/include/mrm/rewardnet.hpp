#pragma once
// Reward model: a user's reward is a weighted sum of K shared base
// functions over the response embedding, r_w(e) = sum_k w[k] * phi_k(e).
// Base functions come in two shapes:
//   linear: phi(e) = <w1, e> + b1[0]
//   mlp1:   phi(e) = <w2, tanh(W1 e + b1)> + b2[0], W1 row-major (hidden x dim)

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrm/corpus.hpp"
#include "mrm/rng.hpp"
#include "mrm/util.hpp"

namespace mrm {

enum class Arch { linear, mlp1 };

inline std::string arch_name(Arch a) { return a == Arch::linear ? "linear" : "mlp1"; }

inline Arch parse_arch(const std::string& s) {
  if (s == "linear") return Arch::linear;
  if (s == "mlp1") return Arch::mlp1;
  throw ValidationError("unknown arch \"" + s + "\" (expected linear or mlp1)");
}

// Parameters of one base function. The same struct doubles as a gradient
// holder (see zeros_like). For linear only w1 and b1 (length 1) are used.
struct PhiParams {
  Arch arch = Arch::linear;
  int dim = 0;
  int hidden = 0;
  Vec w1;
  Vec b1;
  Vec w2;
  Vec b2;
};

inline std::size_t param_count(const PhiParams& p) {
  return p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size();
}

inline PhiParams zeros_like(const PhiParams& p) {
  PhiParams z;
  z.arch = p.arch;
  z.dim = p.dim;
  z.hidden = p.hidden;
  z.w1.assign(p.w1.size(), 0.0);
  z.b1.assign(p.b1.size(), 0.0);
  z.w2.assign(p.w2.size(), 0.0);
  z.b2.assign(p.b2.size(), 0.0);
  return z;
}

inline void check_shape(const PhiParams& p) {
  if (p.dim <= 0) throw ValidationError("base function dim must be positive");
  if (p.arch == Arch::linear) {
    if (p.w1.size() != static_cast<std::size_t>(p.dim) || p.b1.size() != 1 || !p.w2.empty() || !p.b2.empty()) {
      throw ValidationError("linear base function has inconsistent parameter shapes");
    }
  } else {
    std::size_t h = static_cast<std::size_t>(p.hidden);
    std::size_t d = static_cast<std::size_t>(p.dim);
    if (p.hidden <= 0 || p.w1.size() != h * d || p.b1.size() != h || p.w2.size() != h || p.b2.size() != 1) {
      throw ValidationError("mlp1 base function has inconsistent parameter shapes");
    }
  }
}

// Forward pass output; hidden caches tanh activations so the backward pass
// does not recompute them.
struct PhiEval {
  double score = 0.0;
  Vec hidden;
};

inline PhiEval phi_forward(const PhiParams& p, const Vec& emb) {
  if (emb.size() != static_cast<std::size_t>(p.dim)) {
    throw ValidationError("embedding dim " + std::to_string(emb.size()) + " does not match base function dim " + std::to_string(p.dim));
  }
  PhiEval out;
  if (p.arch == Arch::linear) {
    out.score = dot(p.w1, emb) + p.b1[0];
    return out;
  }
  std::size_t h = static_cast<std::size_t>(p.hidden);
  std::size_t d = emb.size();
  out.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    double u = p.b1[j];
    const double* row = p.w1.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) u += row[i] * emb[i];
    out.hidden[j] = std::tanh(u);
  }
  out.score = dot(p.w2, out.hidden) + p.b2[0];
  return out;
}

// Accumulates upstream * d(score)/d(params) into grad, and optionally
// upstream * d(score)/d(emb) into grad_emb.
inline void phi_backward(const PhiParams& p, const Vec& emb, const PhiEval& eval, double upstream, PhiParams& grad, Vec* grad_emb = nullptr) {
  if (emb.size() != static_cast<std::size_t>(p.dim)) {
    throw ValidationError("phi_backward: embedding dim does not match parameters");
  }
  if (p.arch == Arch::linear) {
    axpy(upstream, emb, grad.w1);
    grad.b1[0] += upstream;
    if (grad_emb) axpy(upstream, p.w1, *grad_emb);
    return;
  }
  std::size_t h = static_cast<std::size_t>(p.hidden);
  std::size_t d = emb.size();
  if (eval.hidden.size() != h) {
    throw ValidationError("phi_backward: cached activations do not match parameters");
  }
  grad.b2[0] += upstream;
  for (std::size_t j = 0; j < h; ++j) {
    double s = eval.hidden[j];
    grad.w2[j] += upstream * s;
    double t = upstream * p.w2[j] * (1.0 - s * s);
    grad.b1[j] += t;
    const double* row = p.w1.data() + j * d;
    double* grow = grad.w1.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) {
      grow[i] += t * emb[i];
      if (grad_emb) (*grad_emb)[i] += t * row[i];
    }
  }
}

// Shared bases plus the meta-learned initialization of the user weights.
struct ModelParams {
  int k = 0;
  Vec w0;
  std::vector<PhiParams> phis;
};

struct UserWeights {
  Vec w;
};

inline void check_shape(const ModelParams& m) {
  if (m.k <= 0) throw ValidationError("model needs at least one base function");
  if (m.w0.size() != static_cast<std::size_t>(m.k) || m.phis.size() != static_cast<std::size_t>(m.k)) {
    throw ValidationError("model parameter shapes are inconsistent with k");
  }
  for (const auto& p : m.phis) check_shape(p);
}

// Xavier-uniform weights, zero biases, and a uniform simplex point for w0.
inline ModelParams init_model(int k, int dim, Arch arch, int hidden, std::uint64_t seed) {
  if (k <= 0) throw ValidationError("k must be positive");
  if (dim <= 0) throw ValidationError("dim must be positive");
  if (arch == Arch::mlp1 && hidden <= 0) throw ValidationError("hidden must be positive for mlp1");
  Rng g(seed);
  ModelParams m;
  m.k = k;
  m.w0.assign(k, 1.0 / k);
  for (int kk = 0; kk < k; ++kk) {
    PhiParams p;
    p.arch = arch;
    p.dim = dim;
    if (arch == Arch::linear) {
      double a = std::sqrt(6.0 / (dim + 1));
      p.w1.resize(dim);
      for (auto& x : p.w1) x = uniform(g, -a, a);
      p.b1.assign(1, 0.0);
    } else {
      p.hidden = hidden;
      double a1 = std::sqrt(6.0 / (dim + hidden));
      p.w1.resize(static_cast<std::size_t>(hidden) * dim);
      for (auto& x : p.w1) x = uniform(g, -a1, a1);
      p.b1.assign(hidden, 0.0);
      double a2 = std::sqrt(6.0 / (hidden + 1));
      p.w2.resize(hidden);
      for (auto& x : p.w2) x = uniform(g, -a2, a2);
      p.b2.assign(1, 0.0);
    }
    m.phis.push_back(std::move(p));
  }
  return m;
}

inline double reward(const ModelParams& m, const UserWeights& w, const Vec& emb) {
  if (w.w.size() != static_cast<std::size_t>(m.k)) {
    throw ValidationError("user weight count does not match model k");
  }
  double r = 0.0;
  for (int kk = 0; kk < m.k; ++kk) r += w.w[kk] * phi_forward(m.phis[kk], emb).score;
  return r;
}

// Per-pair feature vector: f[k] = phi_k(chosen) - phi_k(rejected). The pair
// logit is then <w, f>, so everything downstream works on these rows.
inline Vec pair_features(const ModelParams& m, const PreferencePair& pair) {
  Vec f(m.k);
  for (int kk = 0; kk < m.k; ++kk) {
    f[kk] = phi_forward(m.phis[kk], pair.emb_chosen).score - phi_forward(m.phis[kk], pair.emb_rejected).score;
  }
  return f;
}

inline nlohmann::json phi_to_json(const PhiParams& p) {
  nlohmann::json j;
  if (p.arch == Arch::linear) {
    j["w"] = p.w1;
    j["b"] = p.b1[0];
  } else {
    j["w1"] = p.w1;
    j["b1"] = p.b1;
    j["w2"] = p.w2;
    j["b2"] = p.b2[0];
  }
  return j;
}

inline PhiParams phi_from_json(const nlohmann::json& j, Arch arch, int dim, int hidden) {
  PhiParams p;
  p.arch = arch;
  p.dim = dim;
  try {
    if (arch == Arch::linear) {
      p.w1 = j.at("w").get<Vec>();
      p.b1.assign(1, j.at("b").get<double>());
    } else {
      p.hidden = hidden;
      p.w1 = j.at("w1").get<Vec>();
      p.b1 = j.at("b1").get<Vec>();
      p.w2 = j.at("w2").get<Vec>();
      p.b2.assign(1, j.at("b2").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint base function is malformed: ") + e.what());
  }
  check_shape(p);
  if (!all_finite(p.w1) || !all_finite(p.b1) || !all_finite(p.w2) || !all_finite(p.b2)) {
    throw ValidationError("checkpoint base function has non-finite values");
  }
  return p;
}

inline void save_checkpoint(const ModelParams& m, const std::string& path) {
  check_shape(m);
  nlohmann::json j;
  j["version"] = 1;
  j["k"] = m.k;
  j["d"] = m.phis[0].dim;
  j["arch"] = arch_name(m.phis[0].arch);
  j["hidden"] = m.phis[0].hidden;
  j["w0"] = m.w0;
  j["phis"] = nlohmann::json::array();
  for (const auto& p : m.phis) j["phis"].push_back(phi_to_json(p));
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  ModelParams m;
  try {
    if (j.at("version").get<int>() != 1) {
      throw ValidationError("unsupported checkpoint version in " + path);
    }
    m.k = j.at("k").get<int>();
    int dim = j.at("d").get<int>();
    Arch arch = parse_arch(j.at("arch").get<std::string>());
    int hidden = j.at("hidden").get<int>();
    m.w0 = j.at("w0").get<Vec>();
    for (const auto& pj : j.at("phis")) {
      m.phis.push_back(phi_from_json(pj, arch, dim, hidden));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path + " is malformed: " + e.what());
  }
  check_shape(m);
  if (!all_finite(m.w0)) throw ValidationError("checkpoint w0 has non-finite values");
  return m;
}

}  // namespace mrm
