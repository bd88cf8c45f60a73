#pragma once
// Shared test helpers. The numeric oracles here (Jacobi eigenvalues,
// central differences) are deliberately independent of the library code
// they check.

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrm/corpus.hpp"
#include "mrm/rng.hpp"
#include "mrm/util.hpp"

namespace testutil {

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(std::vector<mrm::Vec> a) {
  std::size_t n = a.size();
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

// d/dx f at x by central differences, for scalar probes.
template <class F>
double central_diff(F&& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-12});
}

// Fresh scratch directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() / ("mrm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

// Runs the built binary with stdout+stderr captured.
inline CliResult run_cli(const std::string& args, const TempDir& tmp) {
  static int counter = 0;
  std::string log = tmp.file("cli_log_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(MRM_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  int status = std::system(cmd.c_str());
  CliResult res;
  if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  res.output = ss.str();
  return res;
}

// Hand-built corpus: n_users users, each with train and test pairs whose
// embeddings come from a seeded stream. Labels are arbitrary (chosen = e1).
inline mrm::Corpus random_corpus(int n_users, int n_train, int n_test, int dim, std::uint64_t seed) {
  mrm::Rng g(seed);
  mrm::Corpus corpus;
  corpus.dim = dim;
  for (int u = 0; u < n_users; ++u) {
    mrm::UserDataset user;
    user.user_id = "t" + std::to_string(u);
    for (int j = 0; j < n_train + n_test; ++j) {
      mrm::PreferencePair p;
      p.user_id = user.user_id;
      p.pair_id = user.user_id + "-p" + std::to_string(j);
      p.emb_chosen = mrm::normal_vec(g, dim);
      p.emb_rejected = mrm::normal_vec(g, dim);
      p.split = j < n_train ? mrm::SplitTag::train : mrm::SplitTag::test;
      user.pairs.push_back(std::move(p));
    }
    corpus.users.push_back(std::move(user));
  }
  return corpus;
}

}  // namespace testutil
