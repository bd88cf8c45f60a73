#pragma once
// Command implementations behind the CLI. Each cmd_* does the work and
// throws ValidationError / DivergenceError; the binary maps exceptions to
// exit codes. Keeping them here lets the test suite drive commands both
// in-process and through the installed binary.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrm/corpus.hpp"
#include "mrm/evalbench.hpp"
#include "mrm/metaopt.hpp"
#include "mrm/rewardnet.hpp"
#include "mrm/synthlab.hpp"
#include "mrm/util.hpp"

namespace mrm {

struct RunConfig {
  MetaConfig meta;
  Arch arch = Arch::linear;
  int hidden = 64;
  std::size_t min_pairs = 0;
  std::size_t shots = 10;
  std::string variant = "mrm";
  std::vector<std::size_t> shot_counts = {2, 5, 10, 20};
  PopulationSpec population;
  double fd_step = 1e-5;
  double fd_tol = 1e-5;
};

inline void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "prism-like") {
    cfg.meta.alpha = 1e-3;
    cfg.meta.beta = 1e-3;
  } else if (name == "tldr-like") {
    cfg.meta.alpha = 5e-3;
    cfg.meta.beta = 5e-3;
  } else {
    throw ValidationError("unknown preset \"" + name + "\" (expected prism-like or tldr-like)");
  }
}

namespace detail {

template <class T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key \"" + key + "\" has the wrong type");
  }
}

inline void apply_population_json(PopulationSpec& pop, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_users") {
      pop.n_users = get_as<int>(value, key);
    } else if (key == "pairs_per_user") {
      pop.pairs_per_user = get_as<int>(value, key);
    } else if (key == "d") {
      pop.d = get_as<int>(value, key);
    } else if (key == "k_true") {
      pop.k_true = get_as<int>(value, key);
    } else if (key == "label_noise") {
      pop.label_noise = get_as<double>(value, key);
    } else if (key == "label_mode") {
      pop.label_mode = parse_label_mode(get_as<std::string>(value, key));
    } else if (key == "heterogeneity") {
      pop.heterogeneity = parse_heterogeneity(get_as<std::string>(value, key));
    } else if (key == "majority_frac") {
      pop.majority_frac = get_as<double>(value, key);
    } else if (key == "seed") {
      pop.seed = get_as<std::uint64_t>(value, key);
    } else {
      throw ValidationError("unknown population config key \"" + key + "\"");
    }
  }
}

}  // namespace detail

// Applies one JSON object onto the config. Called once for the config file
// and once for the CLI flag overrides, in that order. "preset" is applied
// before the other keys in the same object so explicit values win.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (j.contains("preset")) apply_preset(cfg, detail::get_as<std::string>(j.at("preset"), "preset"));
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") {
      continue;
    } else if (key == "alpha") {
      cfg.meta.alpha = detail::get_as<double>(value, key);
    } else if (key == "beta") {
      cfg.meta.beta = detail::get_as<double>(value, key);
    } else if (key == "n_inner") {
      cfg.meta.n_inner = detail::get_as<int>(value, key);
    } else if (key == "k") {
      cfg.meta.k = detail::get_as<int>(value, key);
    } else if (key == "meta_batch") {
      cfg.meta.meta_batch = detail::get_as<int>(value, key);
    } else if (key == "rho") {
      cfg.meta.rho = detail::get_as<double>(value, key);
    } else if (key == "gamma") {
      cfg.meta.gamma = detail::get_as<double>(value, key);
    } else if (key == "support_fraction") {
      cfg.meta.support_fraction = detail::get_as<double>(value, key);
    } else if (key == "epochs") {
      cfg.meta.epochs = detail::get_as<int>(value, key);
    } else if (key == "seed") {
      cfg.meta.seed = detail::get_as<std::uint64_t>(value, key);
      cfg.population.seed = cfg.meta.seed;
    } else if (key == "grad_mode") {
      cfg.meta.grad_mode = parse_grad_mode(detail::get_as<std::string>(value, key));
    } else if (key == "inner_opt") {
      cfg.meta.inner_opt = parse_inner_opt(detail::get_as<std::string>(value, key));
    } else if (key == "aggregate") {
      cfg.meta.aggregate = parse_aggregate(detail::get_as<std::string>(value, key));
    } else if (key == "threads") {
      cfg.meta.threads = detail::get_as<int>(value, key);
    } else if (key == "arch") {
      cfg.arch = parse_arch(detail::get_as<std::string>(value, key));
    } else if (key == "hidden") {
      cfg.hidden = detail::get_as<int>(value, key);
    } else if (key == "min_pairs") {
      cfg.min_pairs = detail::get_as<std::size_t>(value, key);
    } else if (key == "shots") {
      cfg.shots = detail::get_as<std::size_t>(value, key);
    } else if (key == "variant") {
      cfg.variant = detail::get_as<std::string>(value, key);
      parse_variant(cfg.variant);
    } else if (key == "shot_counts") {
      cfg.shot_counts = detail::get_as<std::vector<std::size_t>>(value, key);
    } else if (key == "fd_step") {
      cfg.fd_step = detail::get_as<double>(value, key);
    } else if (key == "fd_tol") {
      cfg.fd_tol = detail::get_as<double>(value, key);
    } else if (key == "population") {
      detail::apply_population_json(cfg.population, value);
    } else {
      throw ValidationError("unknown config key \"" + key + "\"");
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path + " is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  // a bare population object is accepted as a generation config
  if (j.is_object() && j.contains("n_users") && !j.contains("population")) {
    detail::apply_population_json(cfg.population, j);
  } else {
    apply_config_json(cfg, j);
  }
  return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["alpha"] = cfg.meta.alpha;
  j["beta"] = cfg.meta.beta;
  j["n_inner"] = cfg.meta.n_inner;
  j["k"] = cfg.meta.k;
  j["meta_batch"] = cfg.meta.meta_batch;
  j["rho"] = cfg.meta.rho;
  j["gamma"] = cfg.meta.gamma;
  j["support_fraction"] = cfg.meta.support_fraction;
  j["epochs"] = cfg.meta.epochs;
  j["seed"] = cfg.meta.seed;
  j["grad_mode"] = grad_mode_name(cfg.meta.grad_mode);
  j["inner_opt"] = inner_opt_name(cfg.meta.inner_opt);
  j["aggregate"] = aggregate_name(cfg.meta.aggregate);
  j["threads"] = cfg.meta.threads;
  j["arch"] = arch_name(cfg.arch);
  j["hidden"] = cfg.hidden;
  j["min_pairs"] = cfg.min_pairs;
  j["shots"] = cfg.shots;
  j["variant"] = cfg.variant;
  j["shot_counts"] = cfg.shot_counts;
  j["fd_step"] = cfg.fd_step;
  j["fd_tol"] = cfg.fd_tol;
  j["population"] = {
      {"n_users", cfg.population.n_users},
      {"pairs_per_user", cfg.population.pairs_per_user},
      {"d", cfg.population.d},
      {"k_true", cfg.population.k_true},
      {"label_noise", cfg.population.label_noise},
      {"label_mode", label_mode_name(cfg.population.label_mode)},
      {"heterogeneity", heterogeneity_name(cfg.population.heterogeneity)},
      {"majority_frac", cfg.population.majority_frac},
      {"seed", cfg.population.seed},
  };
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
  if (!out) throw ValidationError("write failed: " + path);
}

inline std::string population_name(PopulationTag t) { return t == PopulationTag::seen ? "seen" : "unseen"; }

inline std::string report_csv(const EvalReport& rep) {
  std::string s = "user_id,population,n_test,accuracy\n";
  for (const auto& r : rep.rows) {
    s += r.user_id + "," + population_name(r.population) + "," + std::to_string(r.n_test) + "," + fmt_double(r.accuracy) + "\n";
  }
  return s;
}

inline std::string summary_csv(const EvalReport& rep) {
  std::string s = "metric,value\n";
  s += "overall_mean," + fmt_double(rep.overall_mean) + "\n";
  s += "overall_std," + fmt_double(rep.overall_std) + "\n";
  s += "worst10," + fmt_double(rep.worst10) + "\n";
  s += "worst20," + fmt_double(rep.worst20) + "\n";
  s += "worst50," + fmt_double(rep.worst50) + "\n";
  s += "seen_mean," + fmt_double(rep.seen_mean) + "\n";
  s += "unseen_mean," + fmt_double(rep.unseen_mean) + "\n";
  return s;
}

inline std::string fewshot_csv(const std::vector<FewshotRow>& rows) {
  std::string s = "shots,mean_accuracy,n_users\n";
  for (const auto& r : rows) {
    s += std::to_string(r.shots) + "," + fmt_double(r.mean_accuracy) + "," + std::to_string(r.n_users) + "\n";
  }
  return s;
}

inline std::string trainlog_csv(const TrainLog& log) {
  std::string s = "epoch,batch,mean_query_loss,tau,retained_users,grad_norm_w0,grad_norm_phi\n";
  for (const auto& r : log.rows) {
    s += std::to_string(r.epoch) + "," + std::to_string(r.batch) + "," + fmt_double(r.mean_query_loss) + "," + fmt_double(r.tau) + "," + std::to_string(r.retained_users) + "," + fmt_double(r.grad_norm_w0) + "," + fmt_double(r.grad_norm_phi) + "\n";
  }
  return s;
}

inline std::string gradcheck_csv(const GradCheckReport& rep) {
  std::string s = "block,max_rel_error\n";
  for (const auto& b : rep.blocks) {
    s += b.name + "," + fmt_double(b.max_rel_error) + "\n";
  }
  return s;
}

inline void write_resolved_config(const RunConfig& cfg, const std::string& out_dir, const nlohmann::json& paths) {
  nlohmann::json j = config_to_json(cfg);
  j["paths"] = paths;
  write_text_file(out_dir + "/resolved_config.json", j.dump(2) + "\n");
}

inline Corpus load_prepared_corpus(const RunConfig& cfg, const std::string& corpus_path) {
  Corpus corpus = load_corpus(corpus_path);
  corpus = filter_min_pairs(std::move(corpus), cfg.min_pairs);
  return split_population(std::move(corpus), cfg.meta.seed);
}

inline void cmd_gen(const RunConfig& cfg, const std::string& out_path, const std::string& truth_path) {
  auto [corpus, truth] = gen_population(cfg.population);
  save_corpus(corpus, out_path);
  if (!truth_path.empty()) save_truth(truth, truth_path);
  std::size_t n_pairs = 0;
  for (const auto& u : corpus.users) n_pairs += u.pairs.size();
  std::cout << "generated " << corpus.users.size() << " users, " << n_pairs << " pairs, d=" << corpus.dim << " -> " << out_path << "\n";
}

inline void cmd_train(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_dir) {
  validate(cfg.meta);
  std::filesystem::create_directories(out_dir);
  Corpus corpus = load_prepared_corpus(cfg, corpus_path);
  ModelParams params;
  TrainLog log;
  try {
    std::tie(params, log) = meta_train(corpus, cfg.meta, cfg.arch, cfg.hidden);
  } catch (const TrainingDiverged& e) {
    save_checkpoint(e.last_params, out_dir + "/checkpoint_last.json");
    write_text_file(out_dir + "/train_log.csv", trainlog_csv(e.log));
    throw;
  }
  save_checkpoint(params, out_dir + "/checkpoint.json");
  write_text_file(out_dir + "/train_log.csv", trainlog_csv(log));
  write_resolved_config(cfg, out_dir, {{"corpus", corpus_path}});
  if (!log.rows.empty()) {
    std::cout << "trained " << cfg.meta.epochs << " epochs; final batch mean query loss " << fmt_double(log.rows.back().mean_query_loss) << "\n";
  }
  std::cout << "checkpoint -> " << out_dir << "/checkpoint.json\n";
}

inline void cmd_eval(RunConfig cfg, const std::string& corpus_path, const std::string& checkpoint_path, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Corpus corpus = load_prepared_corpus(cfg, corpus_path);
  Variant variant = parse_variant(cfg.variant);
  EvalReport rep;
  if (variant == Variant::mrm && !checkpoint_path.empty()) {
    ModelParams params = load_checkpoint(checkpoint_path);
    cfg.meta.k = params.k;
    rep = evaluate_corpus(params, corpus, cfg.meta, cfg.shots);
  } else if (variant == Variant::mrm) {
    throw ValidationError("eval with variant mrm needs --checkpoint (other variants train in place)");
  } else {
    validate(cfg.meta);
    rep = run_baseline(variant, corpus, cfg.meta, cfg.arch, cfg.hidden, cfg.shots);
  }
  write_text_file(out_dir + "/report.csv", report_csv(rep));
  write_text_file(out_dir + "/summary.csv", summary_csv(rep));
  write_resolved_config(cfg, out_dir, {{"corpus", corpus_path}, {"checkpoint", checkpoint_path}});
  std::cout << "evaluated " << rep.rows.size() << " users: mean " << fmt_double(rep.overall_mean) << ", worst10 " << fmt_double(rep.worst10) << ", seen " << fmt_double(rep.seen_mean) << ", unseen " << fmt_double(rep.unseen_mean) << "\n";
}

inline void cmd_adapt(const RunConfig& cfg, const std::string& corpus_path, const std::string& checkpoint_path, const std::string& out_path, const std::vector<std::string>& user_filter) {
  Corpus corpus = load_corpus(corpus_path);
  corpus = filter_min_pairs(std::move(corpus), cfg.min_pairs);
  ModelParams params = load_checkpoint(checkpoint_path);
  std::map<std::string, const UserDataset*> wanted;
  if (user_filter.empty()) {
    for (const auto& u : corpus.users) wanted[u.user_id] = &u;
  } else {
    for (const auto& id : user_filter) {
      const UserDataset* found = nullptr;
      for (const auto& u : corpus.users) {
        if (u.user_id == id) {
          found = &u;
          break;
        }
      }
      if (!found) throw ValidationError("user \"" + id + "\" is not in the corpus");
      wanted[id] = found;
    }
  }
  std::string csv = "user_id,k,weight\n";
  for (const auto& [id, user] : wanted) {
    std::vector<PreferencePair> shot = shot_prefix(*user, cfg.meta.seed, cfg.shots);
    UserWeights w{params.w0};
    if (cfg.shots > 0 && !shot.empty()) w = adapt_user(params, shot, cfg.meta);
    for (int kk = 0; kk < params.k; ++kk) {
      csv += id + "," + std::to_string(kk) + "," + fmt_double(w.w[kk]) + "\n";
    }
  }
  write_text_file(out_path, csv);
  std::cout << "adapted " << wanted.size() << " user(s) -> " << out_path << "\n";
}

inline void cmd_fewshot(const RunConfig& cfg, const std::string& corpus_path, const std::string& checkpoint_path, const std::string& out_path) {
  Corpus corpus = load_prepared_corpus(cfg, corpus_path);
  ModelParams params = load_checkpoint(checkpoint_path);
  MetaConfig meta = cfg.meta;
  meta.k = params.k;
  std::vector<FewshotRow> rows = fewshot_curve(params, corpus, cfg.shot_counts, meta);
  write_text_file(out_path, fewshot_csv(rows));
  for (const auto& r : rows) {
    std::cout << r.shots << " shots: mean accuracy " << fmt_double(r.mean_accuracy) << " over " << r.n_users << " users\n";
  }
}

// Small self-contained instance so the gradient check needs no input files.
inline bool cmd_gradcheck(const RunConfig& cfg, const std::string& out_path) {
  if (cfg.meta.grad_mode != GradMode::exact) {
    throw ValidationError("the gradient check compares against exact meta-gradients; drop grad_mode=first_order");
  }
  PopulationSpec pop;
  pop.n_users = 4;
  pop.pairs_per_user = 12;
  pop.d = 6;
  pop.k_true = 2;
  pop.label_noise = 0.1;
  pop.seed = cfg.meta.seed;
  auto [corpus, truth] = gen_population(pop);
  (void)truth;
  corpus = split_population(std::move(corpus), cfg.meta.seed);

  MetaConfig meta = cfg.meta;
  meta.epochs = std::max(0, meta.epochs);
  std::vector<TaskSplit> tasks;
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    if (corpus.population[i] == PopulationTag::seen) {
      tasks.push_back(split_support_query(corpus.users[i], meta.support_fraction, meta.seed));
    }
  }
  ModelParams params = init_model(meta.k, pop.d, cfg.arch, cfg.hidden, derive_seed(meta.seed, "gradcheck-init"));
  GradCheckReport rep = finite_difference_check(params, tasks, meta, cfg.fd_step);
  if (!out_path.empty()) write_text_file(out_path, gradcheck_csv(rep));
  for (const auto& b : rep.blocks) {
    std::cout << b.name << ": max rel error " << fmt_double(b.max_rel_error) << "\n";
  }
  bool ok = rep.max_rel_error <= cfg.fd_tol;
  std::cout << (ok ? "OK" : "FAIL") << ": max rel error " << fmt_double(rep.max_rel_error) << " vs tolerance " << fmt_double(cfg.fd_tol) << "\n";
  return ok;
}

inline void cmd_params_count(const RunConfig& cfg, const std::vector<long long>& n_users_list, const std::string& out_path) {
  Variant variant = parse_variant(cfg.variant);
  std::string csv = "n_users,params\n";
  for (long long n : n_users_list) {
    long long c = count_trainable_params(variant, n, cfg.meta.k, cfg.population.d, cfg.arch, cfg.hidden);
    csv += std::to_string(n) + "," + std::to_string(c) + "\n";
  }
  if (!out_path.empty()) write_text_file(out_path, csv);
  std::cout << csv;
}

}  // namespace mrm
