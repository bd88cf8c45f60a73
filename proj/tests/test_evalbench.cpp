#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "mrm/evalbench.hpp"
#include "mrm/synthlab.hpp"
#include "testutil.hpp"

using namespace mrm;

namespace {

// accuracy fixture: bases pick out coordinates, so rewards are transparent
ModelParams coordinate_model(int k, int d) {
  ModelParams m;
  m.k = k;
  m.w0.assign(k, 1.0 / k);
  for (int kk = 0; kk < k; ++kk) {
    PhiParams p;
    p.arch = Arch::linear;
    p.dim = d;
    p.w1.assign(d, 0.0);
    p.w1[kk] = 1.0;
    p.b1.assign(1, 0.0);
    m.phis.push_back(std::move(p));
  }
  return m;
}

PreferencePair pair_with(Vec chosen, Vec rejected, SplitTag split = SplitTag::test) {
  PreferencePair p;
  p.user_id = "x";
  p.pair_id = "x-p";
  p.emb_chosen = std::move(chosen);
  p.emb_rejected = std::move(rejected);
  p.split = split;
  return p;
}

}  // namespace

TEST_CASE("user accuracy counts strict wins only") {
  ModelParams m = coordinate_model(2, 3);
  UserWeights w{{1.0, 0.0}};  // reward = first coordinate

  std::vector<PreferencePair> test;
  test.push_back(pair_with({2.0, 0.0, 0.0}, {1.0, 5.0, 0.0}));   // win
  test.push_back(pair_with({0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}));   // loss
  test.push_back(pair_with({3.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}));  // win

  UserResult r = user_accuracy(m, w, "x", PopulationTag::seen, test);
  CHECK(r.n_test == 3);
  CHECK(r.accuracy == 2.0 / 3.0);

  SECTION("ties are errors") {
    UserWeights zero{{0.0, 0.0}};
    CHECK(user_accuracy(m, zero, "x", PopulationTag::seen, test).accuracy == 0.0);
  }

  SECTION("no test pairs is an error") {
    std::vector<PreferencePair> none;
    CHECK_THROWS_AS(user_accuracy(m, w, "x", PopulationTag::seen, none), ValidationError);
  }
}

TEST_CASE("the true model is perfect on its own noiseless population") {
  PopulationSpec spec;
  spec.n_users = 5;
  spec.pairs_per_user = 12;
  spec.d = 6;
  spec.k_true = 3;
  spec.seed = 21;
  auto [corpus, truth] = gen_population(spec);

  ModelParams m;
  m.k = 3;
  m.w0.assign(3, 0.0);
  m.phis = truth.true_phis;
  for (const auto& user : corpus.users) {
    UserWeights w{truth.true_weights.at(user.user_id)};
    UserResult r = user_accuracy(m, w, user.user_id, PopulationTag::seen, test_pairs(user));
    CHECK(r.accuracy == 1.0);
  }
}

TEST_CASE("worst-k means over hand-picked accuracies") {
  std::vector<double> acc{0.6, 0.1, 1.0, 0.3, 0.2, 0.9, 0.4, 0.5, 0.8, 0.7};
  CHECK(worst_k_mean(acc, 10.0) == 0.1);
  CHECK(worst_k_mean(acc, 20.0) == Catch::Approx(0.15).margin(1e-15));
  CHECK(worst_k_mean(acc, 50.0) == Catch::Approx(0.3).margin(1e-15));
  CHECK(worst_k_mean(acc, 100.0) == Catch::Approx(0.55).margin(1e-15));

  SECTION("a tiny list still takes at least one element") {
    CHECK(worst_k_mean({0.4, 0.9, 0.7}, 10.0) == 0.4);
  }

  SECTION("bad inputs") {
    CHECK_THROWS_AS(worst_k_mean({}, 10.0), ValidationError);
    CHECK_THROWS_AS(worst_k_mean(acc, 0.0), ValidationError);
    CHECK_THROWS_AS(worst_k_mean(acc, 101.0), ValidationError);
  }
}

TEST_CASE("worst-k agrees with a direct scan and is monotone in k") {
  auto oracle = [](std::vector<double> a, double k) {
    std::size_t m = 1;
    while (m < a.size() && static_cast<double>(m) + 1e-9 < k * static_cast<double>(a.size()) / 100.0) ++m;
    std::sort(a.begin(), a.end());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a[i];
    return s / static_cast<double>(m);
  };

  Rng g(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 1 + below(g, 40);
    std::vector<double> acc(n);
    for (auto& a : acc) a = uniform01(g);
    double k = uniform(g, 1e-3, 100.0);
    CHECK(worst_k_mean(acc, k) == oracle(acc, k));
    double prev = worst_k_mean(acc, 10.0);
    for (double kk : {20.0, 50.0, 100.0}) {
      double cur = worst_k_mean(acc, kk);
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("report assembles sorted rows and summary statistics") {
  std::vector<UserResult> rows{
      {"d", PopulationTag::unseen, 4, 0.75},
      {"b", PopulationTag::seen, 4, 0.5},
      {"a", PopulationTag::seen, 4, 1.0},
      {"c", PopulationTag::unseen, 4, 0.25},
  };
  EvalReport rep = make_report(rows);

  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].user_id == "a");
  CHECK(rep.rows[3].user_id == "d");
  CHECK(rep.overall_mean == 0.625);
  CHECK(rep.overall_std == Catch::Approx(std::sqrt(0.078125)).margin(1e-15));
  CHECK(rep.worst10 == 0.25);
  CHECK(rep.worst20 == 0.25);
  CHECK(rep.worst50 == 0.375);
  CHECK(rep.seen_mean == 0.75);
  CHECK(rep.unseen_mean == 0.5);

  SECTION("missing population halves turn into NaN") {
    std::vector<UserResult> seen_only(rows.begin() + 1, rows.begin() + 3);
    EvalReport r2 = make_report(seen_only);
    CHECK(std::isnan(r2.unseen_mean));
    CHECK_FALSE(std::isnan(r2.seen_mean));
  }

  SECTION("empty input") {
    CHECK_THROWS_AS(make_report({}), ValidationError);
  }
}

TEST_CASE("shot prefixes nest and are reproducible") {
  Corpus corpus = testutil::random_corpus(2, 12, 3, 4, 33);
  const UserDataset& user = corpus.users[0];

  std::vector<PreferencePair> two = shot_prefix(user, 5, 2);
  std::vector<PreferencePair> five = shot_prefix(user, 5, 5);
  REQUIRE(two.size() == 2);
  REQUIRE(five.size() == 5);
  for (std::size_t i = 0; i < two.size(); ++i) {
    CHECK(two[i].pair_id == five[i].pair_id);
  }

  std::vector<PreferencePair> again = shot_prefix(user, 5, 5);
  for (std::size_t i = 0; i < five.size(); ++i) {
    CHECK(again[i].pair_id == five[i].pair_id);
  }

  SECTION("only train pairs are handed out, capped at the train count") {
    std::vector<PreferencePair> all = shot_prefix(user, 5, 1000);
    CHECK(all.size() == 12);
    for (const auto& p : all) CHECK(p.split == SplitTag::train);
  }

  SECTION("zero shots is an empty prefix") {
    CHECK(shot_prefix(user, 5, 0).empty());
  }

  SECTION("the draw depends on the seed") {
    std::vector<PreferencePair> other = shot_prefix(user, 6, 5);
    bool same = true;
    for (std::size_t i = 0; i < five.size(); ++i) {
      if (other[i].pair_id != five[i].pair_id) same = false;
    }
    CHECK_FALSE(same);
  }
}

TEST_CASE("corpus evaluation matches a manual sweep") {
  Corpus corpus = split_population(testutil::random_corpus(6, 8, 4, 4, 44), 44);
  ModelParams params = init_model(2, 4, Arch::linear, 0, 45);
  MetaConfig cfg;
  cfg.epochs = 0;

  EvalReport rep = evaluate_corpus(params, corpus, cfg, 0);
  REQUIRE(rep.rows.size() == 6);
  for (std::size_t i = 0; i < corpus.users.size(); ++i) {
    const UserDataset& user = corpus.users[i];
    UserResult manual = user_accuracy(params, UserWeights{params.w0}, user.user_id, corpus.population[i], test_pairs(user));
    auto it = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const UserResult& r) { return r.user_id == user.user_id; });
    REQUIRE(it != rep.rows.end());
    CHECK(it->accuracy == manual.accuracy);
    CHECK(it->population == manual.population);
    CHECK(it->n_test == 4);
  }

  SECTION("thread count changes nothing") {
    MetaConfig ct = cfg;
    ct.threads = 4;
    EvalReport r2 = evaluate_corpus(params, corpus, ct, 3);
    EvalReport r1 = evaluate_corpus(params, corpus, cfg, 3);
    REQUIRE(r2.rows.size() == r1.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
      CHECK(r2.rows[i].accuracy == r1.rows[i].accuracy);
    }
    CHECK(r2.overall_mean == r1.overall_mean);
  }

  SECTION("users without test pairs are dropped") {
    Corpus c2 = corpus;
    for (auto& p : c2.users[2].pairs) p.split = SplitTag::train;
    EvalReport r2 = evaluate_corpus(params, c2, cfg, 0);
    CHECK(r2.rows.size() == 5);
  }

  SECTION("untagged corpus is rejected") {
    Corpus raw = testutil::random_corpus(3, 4, 2, 4, 46);
    CHECK_THROWS_AS(evaluate_corpus(params, raw, cfg, 0), ValidationError);
  }
}

TEST_CASE("few-shot curve evaluates unseen users per shot count") {
  Corpus corpus = split_population(testutil::random_corpus(8, 10, 4, 4, 55), 55);
  ModelParams params = init_model(2, 4, Arch::linear, 0, 56);
  MetaConfig cfg;
  cfg.epochs = 0;

  std::size_t n_unseen = 0;
  for (auto tag : corpus.population) {
    if (tag == PopulationTag::unseen) ++n_unseen;
  }
  REQUIRE(n_unseen == 4);

  std::vector<FewshotRow> curve = fewshot_curve(params, corpus, {0, 2, 5, 10}, cfg);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].shots == 0);
  CHECK(curve[3].shots == 10);
  for (const auto& row : curve) {
    CHECK(row.n_users == 4);
    CHECK(row.mean_accuracy >= 0.0);
    CHECK(row.mean_accuracy <= 1.0);
  }

  SECTION("zero shots reproduces the unadapted unseen mean") {
    EvalReport rep = evaluate_corpus(params, corpus, cfg, 0);
    CHECK(curve[0].mean_accuracy == Catch::Approx(rep.unseen_mean).margin(1e-15));
  }

  SECTION("users without enough train pairs sit a count out") {
    Corpus c2 = corpus;
    for (std::size_t i = 0; i < c2.users.size(); ++i) {
      if (c2.population[i] != PopulationTag::unseen) continue;
      // bulk up one unseen user so it alone can serve a 12-shot request
      for (int extra = 0; extra < 4; ++extra) {
        PreferencePair p = c2.users[i].pairs[extra];
        p.pair_id += "-dup";
        p.split = SplitTag::train;
        c2.users[i].pairs.push_back(std::move(p));
      }
      break;
    }
    std::vector<FewshotRow> rows = fewshot_curve(params, c2, {12}, cfg);
    CHECK(rows[0].n_users == 1);
  }

  SECTION("a count nobody can serve is an error") {
    CHECK_THROWS_MATCHES(fewshot_curve(params, corpus, {11}, cfg), ValidationError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("shot")));
  }

  SECTION("empty count list is rejected") {
    CHECK_THROWS_AS(fewshot_curve(params, corpus, {}, cfg), ValidationError);
  }
}

TEST_CASE("trainable parameter counts") {
  SECTION("the meta model with two linear bases on 16 dims starts at 36") {
    CHECK(count_trainable_params(Variant::mrm, 0, 2, 16, Arch::linear, 0) == 36);
    CHECK(count_trainable_params(Variant::mrm, 1, 2, 16, Arch::linear, 0) == 38);
    CHECK(count_trainable_params(Variant::mrm, 10, 2, 16, Arch::linear, 0) == 56);
  }

  SECTION("adding a user costs exactly k slots") {
    for (long long n : {0LL, 1LL, 7LL, 100LL}) {
      long long a = count_trainable_params(Variant::mrm, n, 3, 8, Arch::linear, 0);
      long long b = count_trainable_params(Variant::mrm, n + 1, 3, 8, Arch::linear, 0);
      CHECK(b - a == 3);
      CHECK(count_trainable_params(Variant::mean_agg, n, 3, 8, Arch::linear, 0) == a);
    }
  }

  SECTION("the shared model ignores the user count") {
    long long c = count_trainable_params(Variant::shared_bt, 0, 2, 16, Arch::linear, 0);
    CHECK(c == 18);
    CHECK(count_trainable_params(Variant::shared_bt, 500, 2, 16, Arch::linear, 0) == c);
  }

  SECTION("per-user models multiply") {
    CHECK(count_trainable_params(Variant::per_user, 1, 2, 16, Arch::linear, 0) == 36);
    CHECK(count_trainable_params(Variant::per_user, 5, 2, 16, Arch::linear, 0) == 180);
  }

  SECTION("the single-net baseline stores one net per user plus the shared one") {
    long long s = 8LL * 16 + 2 * 8 + 1;
    CHECK(count_trainable_params(Variant::single_mlp, 3, 1, 16, Arch::mlp1, 8) == s * 4);
  }

  SECTION("bad shapes") {
    CHECK_THROWS_AS(count_trainable_params(Variant::mrm, -1, 2, 16, Arch::linear, 0), ValidationError);
    CHECK_THROWS_AS(count_trainable_params(Variant::mrm, 1, 0, 16, Arch::linear, 0), ValidationError);
    CHECK_THROWS_AS(count_trainable_params(Variant::single_mlp, 1, 1, 16, Arch::mlp1, 0), ValidationError);
  }
}

TEST_CASE("variant names round-trip and reject strangers") {
  for (Variant v : {Variant::mrm, Variant::mean_agg, Variant::shared_bt, Variant::per_user, Variant::single_mlp}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("zero-shot"), ValidationError);
}

TEST_CASE("baselines run end to end on a small population") {
  PopulationSpec spec;
  spec.n_users = 6;
  spec.pairs_per_user = 12;
  spec.d = 5;
  spec.k_true = 2;
  spec.seed = 3;
  auto [raw, truth] = gen_population(spec);
  (void)truth;
  Corpus corpus = split_population(std::move(raw), 3);

  MetaConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 3;
  cfg.alpha = 0.05;
  cfg.beta = 0.05;
  cfg.support_fraction = 0.3;

  SECTION("the mean-aggregate variant is the meta model without the cutoff") {
    EvalReport via_baseline = run_baseline(Variant::mean_agg, corpus, cfg, Arch::linear, 0, 3);
    MetaConfig c2 = cfg;
    c2.aggregate = AggregateMode::mean;
    auto [params, log] = meta_train(corpus, c2, Arch::linear, 0);
    EvalReport manual = evaluate_corpus(params, corpus, c2, 3);
    REQUIRE(via_baseline.rows.size() == manual.rows.size());
    for (std::size_t i = 0; i < manual.rows.size(); ++i) {
      CHECK(via_baseline.rows[i].accuracy == manual.rows[i].accuracy);
    }
    CHECK(via_baseline.overall_mean == manual.overall_mean);
  }

  SECTION("shared model trains and reports every user") {
    EvalReport rep = run_baseline(Variant::shared_bt, corpus, cfg, Arch::linear, 0, 3);
    CHECK(rep.rows.size() == 6);
  }

  SECTION("per-user baseline covers seen and unseen users") {
    EvalReport rep = run_baseline(Variant::per_user, corpus, cfg, Arch::linear, 0, 3);
    CHECK(rep.rows.size() == 6);
    for (const auto& r : rep.rows) {
      CHECK(r.accuracy >= 0.0);
      CHECK(r.accuracy <= 1.0);
    }
  }

  SECTION("single-net baseline adapts whole networks") {
    EvalReport rep = run_baseline(Variant::single_mlp, corpus, cfg, Arch::mlp1, 4, 3);
    CHECK(rep.rows.size() == 6);
  }

  SECTION("the meta variant itself trains and evaluates") {
    EvalReport rep = run_baseline(Variant::mrm, corpus, cfg, Arch::linear, 0, 3);
    CHECK(rep.rows.size() == 6);
  }
}
