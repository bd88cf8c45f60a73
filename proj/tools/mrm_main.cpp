// Command line front end. All real work lives in mrm/commands.hpp; this
// file parses flags, merges them over an optional JSON config, and maps
// exceptions to exit codes: 2 for bad inputs, 3 for divergence, 1 for
// anything else.

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mrm/mrm.hpp"

namespace {

// Every tunable is also a config file key. Flags the user actually passed
// are collected into a JSON object and applied on top of the file, so the
// precedence is: defaults < config file < flags.
struct Flags {
  std::string config_path;
  nlohmann::json overrides = nlohmann::json::object();
  std::vector<std::function<void()>> collectors;

  double alpha = 0, beta = 0, rho = 0, gamma = 0, support_fraction = 0, fd_step = 0, fd_tol = 0, label_noise = 0, majority_frac = 0;
  int n_inner = 0, k = 0, meta_batch = 0, epochs = 0, threads = 0, hidden = 0, n_users = 0, pairs_per_user = 0, d = 0, k_true = 0;
  std::uint64_t seed = 0, min_pairs = 0, shots = 0;
  std::string grad_mode, inner_opt, aggregate, arch, variant, preset, label_mode, heterogeneity;

  template <class T>
  void reg(CLI::App* cmd, const std::string& flag, T& storage, const std::string& jkey, const std::string& help, bool population = false) {
    CLI::Option* opt = cmd->add_option(flag, storage, help);
    collectors.push_back([this, opt, &storage, jkey, population] {
      if (opt->count() == 0) return;
      if (population) {
        overrides["population"][jkey] = storage;
      } else {
        overrides[jkey] = storage;
      }
    });
  }

  mrm::RunConfig resolve() {
    mrm::RunConfig cfg;
    if (!config_path.empty()) cfg = mrm::load_config(config_path);
    overrides = nlohmann::json::object();
    for (auto& c : collectors) c();
    mrm::apply_config_json(cfg, overrides);
    return cfg;
  }
};

void add_config_flag(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
  f.reg(cmd, "--preset", f.preset, "preset", "prism-like or tldr-like");
  f.reg(cmd, "--alpha", f.alpha, "alpha", "inner-loop learning rate");
  f.reg(cmd, "--beta", f.beta, "beta", "outer-loop learning rate");
  f.reg(cmd, "--n-inner", f.n_inner, "n_inner", "inner gradient steps per user");
  f.reg(cmd, "--k", f.k, "k", "number of base reward functions");
  f.reg(cmd, "--meta-batch", f.meta_batch, "meta_batch", "users per outer step");
  f.reg(cmd, "--rho", f.rho, "rho", "fraction of hardest users retained");
  f.reg(cmd, "--gamma", f.gamma, "gamma", "retention gate temperature");
  f.reg(cmd, "--support-fraction", f.support_fraction, "support_fraction", "fraction of train pairs used as support");
  f.reg(cmd, "--epochs", f.epochs, "epochs", "passes over the seen users");
  f.reg(cmd, "--seed", f.seed, "seed", "master seed");
  f.reg(cmd, "--grad-mode", f.grad_mode, "grad_mode", "exact or first_order");
  f.reg(cmd, "--inner-opt", f.inner_opt, "inner_opt", "gd or adam");
  f.reg(cmd, "--aggregate", f.aggregate, "aggregate", "mean, hard or soft");
  f.reg(cmd, "--threads", f.threads, "threads", "worker threads");
  f.reg(cmd, "--arch", f.arch, "arch", "base function architecture: linear or mlp1");
  f.reg(cmd, "--hidden", f.hidden, "hidden", "hidden width for mlp1");
  f.reg(cmd, "--min-pairs", f.min_pairs, "min_pairs", "drop users with fewer pairs than this");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned personalized reward models over preference pairs"};
  app.require_subcommand(1);
  int rc = 0;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic preference population");
  Flags gen_f;
  std::string gen_out, gen_truth;
  add_config_flag(gen, gen_f);
  gen->add_option("--out", gen_out, "output corpus (JSONL)")->required();
  gen->add_option("--truth", gen_truth, "optional ground truth JSON");
  gen_f.reg(gen, "--seed", gen_f.seed, "seed", "master seed");
  gen_f.reg(gen, "--n-users", gen_f.n_users, "n_users", "population size", true);
  gen_f.reg(gen, "--pairs-per-user", gen_f.pairs_per_user, "pairs_per_user", "pairs per user", true);
  gen_f.reg(gen, "--d", gen_f.d, "d", "embedding dimension", true);
  gen_f.reg(gen, "--k-true", gen_f.k_true, "k_true", "true basis size", true);
  gen_f.reg(gen, "--label-noise", gen_f.label_noise, "label_noise", "label flip probability", true);
  gen_f.reg(gen, "--label-mode", gen_f.label_mode, "label_mode", "deterministic or bt_sample", true);
  gen_f.reg(gen, "--heterogeneity", gen_f.heterogeneity, "heterogeneity", "gaussian_weights or two_cluster", true);
  gen_f.reg(gen, "--majority-frac", gen_f.majority_frac, "majority_frac", "majority cluster fraction", true);
  gen->callback([&] { mrm::cmd_gen(gen_f.resolve(), gen_out, gen_truth); });

  // train
  auto* train = app.add_subcommand("train", "meta-train the shared init and bases");
  Flags train_f;
  std::string train_corpus, train_out_dir;
  add_config_flag(train, train_f);
  train->add_option("--corpus", train_corpus, "corpus JSONL")->required();
  train->add_option("--out-dir", train_out_dir, "output directory")->required();
  add_train_flags(train, train_f);
  train->callback([&] { mrm::cmd_train(train_f.resolve(), train_corpus, train_out_dir); });

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a baseline variant");
  Flags eval_f;
  std::string eval_corpus, eval_checkpoint, eval_out_dir;
  add_config_flag(eval, eval_f);
  eval->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint JSON");
  eval->add_option("--out-dir", eval_out_dir, "output directory")->required();
  add_train_flags(eval, eval_f);
  eval_f.reg(eval, "--shots", eval_f.shots, "shots", "train pairs used to personalize each user");
  eval_f.reg(eval, "--variant", eval_f.variant, "variant", "mrm, mean, shared-bt, per-user or no-basis");
  eval->callback([&] { mrm::cmd_eval(eval_f.resolve(), eval_corpus, eval_checkpoint, eval_out_dir); });

  // adapt
  auto* adapt = app.add_subcommand("adapt", "fit per-user weights from a checkpoint");
  Flags adapt_f;
  std::string adapt_corpus, adapt_checkpoint, adapt_out;
  std::vector<std::string> adapt_users;
  add_config_flag(adapt, adapt_f);
  adapt->add_option("--corpus", adapt_corpus, "corpus JSONL")->required();
  adapt->add_option("--checkpoint", adapt_checkpoint, "trained checkpoint JSON")->required();
  adapt->add_option("--out", adapt_out, "output weights CSV")->required();
  adapt->add_option("--user", adapt_users, "user id to adapt (repeatable; default all)");
  adapt_f.reg(adapt, "--shots", adapt_f.shots, "shots", "train pairs used per user");
  adapt_f.reg(adapt, "--alpha", adapt_f.alpha, "alpha", "inner-loop learning rate");
  adapt_f.reg(adapt, "--n-inner", adapt_f.n_inner, "n_inner", "inner gradient steps");
  adapt_f.reg(adapt, "--inner-opt", adapt_f.inner_opt, "inner_opt", "gd or adam");
  adapt_f.reg(adapt, "--seed", adapt_f.seed, "seed", "master seed");
  adapt_f.reg(adapt, "--min-pairs", adapt_f.min_pairs, "min_pairs", "drop users with fewer pairs than this");
  adapt->callback([&] { mrm::cmd_adapt(adapt_f.resolve(), adapt_corpus, adapt_checkpoint, adapt_out, adapt_users); });

  // fewshot
  auto* fewshot = app.add_subcommand("fewshot", "accuracy of unseen users vs shot count");
  Flags fewshot_f;
  std::string fs_corpus, fs_checkpoint, fs_out;
  std::vector<std::uint64_t> fs_shots;
  add_config_flag(fewshot, fewshot_f);
  fewshot->add_option("--corpus", fs_corpus, "corpus JSONL")->required();
  fewshot->add_option("--checkpoint", fs_checkpoint, "trained checkpoint JSON")->required();
  fewshot->add_option("--out", fs_out, "output CSV")->required();
  auto* fs_shots_opt = fewshot->add_option("--shots", fs_shots, "comma separated shot counts")->delimiter(',');
  add_train_flags(fewshot, fewshot_f);
  fewshot_f.collectors.push_back([&fewshot_f, fs_shots_opt, &fs_shots] {
    if (fs_shots_opt->count() > 0) fewshot_f.overrides["shot_counts"] = fs_shots;
  });
  fewshot->callback([&] { mrm::cmd_fewshot(fewshot_f.resolve(), fs_corpus, fs_checkpoint, fs_out); });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the meta-gradient");
  Flags gc_f;
  std::string gc_out;
  add_config_flag(gradcheck, gc_f);
  gradcheck->add_option("--out", gc_out, "per-block CSV output");
  gc_f.reg(gradcheck, "--step", gc_f.fd_step, "fd_step", "central difference step");
  gc_f.reg(gradcheck, "--tol", gc_f.fd_tol, "fd_tol", "max relative error allowed");
  gc_f.reg(gradcheck, "--k", gc_f.k, "k", "number of base reward functions");
  gc_f.reg(gradcheck, "--arch", gc_f.arch, "arch", "linear or mlp1");
  gc_f.reg(gradcheck, "--hidden", gc_f.hidden, "hidden", "hidden width for mlp1");
  gc_f.reg(gradcheck, "--n-inner", gc_f.n_inner, "n_inner", "inner gradient steps");
  gc_f.reg(gradcheck, "--alpha", gc_f.alpha, "alpha", "inner-loop learning rate");
  gc_f.reg(gradcheck, "--seed", gc_f.seed, "seed", "master seed");
  gc_f.reg(gradcheck, "--rho", gc_f.rho, "rho", "fraction of hardest users retained");
  gc_f.reg(gradcheck, "--gamma", gc_f.gamma, "gamma", "retention gate temperature");
  gc_f.reg(gradcheck, "--aggregate", gc_f.aggregate, "aggregate", "mean, hard or soft");
  gc_f.reg(gradcheck, "--support-fraction", gc_f.support_fraction, "support_fraction", "fraction of train pairs used as support");
  gradcheck->callback([&] { rc = mrm::cmd_gradcheck(gc_f.resolve(), gc_out) ? 0 : 1; });

  // params-count
  auto* pcount = app.add_subcommand("params-count", "trainable parameter counts vs user count");
  Flags pc_f;
  std::string pc_out;
  std::vector<long long> pc_users;
  add_config_flag(pcount, pc_f);
  pcount->add_option("--n-users", pc_users, "comma separated user counts")->delimiter(',')->required();
  pcount->add_option("--out", pc_out, "output CSV");
  pc_f.reg(pcount, "--variant", pc_f.variant, "variant", "mrm, mean, shared-bt, per-user or no-basis");
  pc_f.reg(pcount, "--k", pc_f.k, "k", "number of base reward functions");
  pc_f.reg(pcount, "--d", pc_f.d, "d", "embedding dimension", true);
  pc_f.reg(pcount, "--arch", pc_f.arch, "arch", "linear or mlp1");
  pc_f.reg(pcount, "--hidden", pc_f.hidden, "hidden", "hidden width for mlp1");
  pcount->callback([&] { mrm::cmd_params_count(pc_f.resolve(), pc_users, pc_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mrm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mrm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
