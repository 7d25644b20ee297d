#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "beacon/synthbench.hpp"
#include "oracles.hpp"

using namespace beacon;
using namespace beacon::synth;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::ContractViolation;
}

SynthConfig small(std::uint64_t seed = 0) {
  SynthConfig c;
  c.num_domains = 3;
  c.dim = 16;
  c.train_per_domain = 80;
  c.validation_per_domain = 20;
  c.test_per_domain = 40;
  c.modes_per_domain = 10;
  c.seed = seed;
  return c;
}

SynthConfig separable(std::uint64_t seed = 0) {
  auto c = small(seed);
  c.num_domains = 2;
  c.inter_domain_distance = 6.0;
  c.family_spread = 2.0;
  c.corner_case_rate = 0.0;
  c.mode_spread = 0.1;
  c.entity_noise = 0.02;
  c.pair_noise = 0.0;
  c.label_strength = 3.0;
  return c;
}

/// Perceptron with bias; true when it reaches zero training errors.
bool linearly_separable(const std::vector<oracle::Vec>& xs, const std::vector<int>& ys, int epochs = 2000) {
  const std::size_t d = xs.front().size();
  std::vector<double> w(d + 1, 0.0);
  for (int ep = 0; ep < epochs; ++ep) {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double s = w[d];
      for (std::size_t k = 0; k < d; ++k) s += w[k] * xs[i][k];
      const int t = ys[i] ? 1 : -1;
      if (t * s <= 0) {
        ++errors;
        for (std::size_t k = 0; k < d; ++k) w[k] += t * xs[i][k];
        w[d] += t;
      }
    }
    if (errors == 0) return true;
  }
  return false;
}

oracle::Vec vec_of(const EmbeddingMatrix& m, SampleId id) {
  auto x = m.vector(id);
  return {x.begin(), x.end()};
}

SelectionPlan plan_of(const DomainId& dom, std::vector<std::pair<SampleId, std::size_t>> entries) {
  SelectionPlan p;
  p.target_domain = dom;
  for (auto [id, m] : entries) {
    PlanEntry e;
    e.id = id;
    e.multiplicity = m;
    p.entries.push_back(e);
    p.beta += m;
  }
  return p;
}

}  // namespace

TEST(Generate, DeterministicPerSeed) {
  auto a = generate(small(4)), b = generate(small(4)), c = generate(small(5));
  EXPECT_EQ(a.pool.fingerprint(), b.pool.fingerprint());
  EXPECT_EQ(a.pairwise, b.pairwise);
  EXPECT_EQ(a.singleton, b.singleton);
  EXPECT_FALSE(a.pairwise == c.pairwise);
}

TEST(Generate, CountsAndTargetOverrides) {
  auto cfg = small();
  cfg.target_train = 7;
  cfg.target_validation = 3;
  cfg.target_test = 11;
  auto w = generate(cfg);
  ASSERT_EQ(w.pool.domains().size(), 3u);
  EXPECT_EQ(w.target(), "dom00");
  const auto& t = w.pool.domain("dom00");
  EXPECT_EQ(t.train.size(), 7u);
  EXPECT_EQ(t.validation.size(), 3u);
  EXPECT_EQ(t.test.size(), 11u);
  const auto& o = w.pool.domain("dom02");
  EXPECT_EQ(o.train.size(), 80u);
  EXPECT_EQ(o.validation.size(), 20u);
  EXPECT_EQ(o.test.size(), 40u);
  EXPECT_EQ(w.truth.size(), w.pool.size());
  EXPECT_EQ(w.pairwise.rows(), w.pool.size());
  EXPECT_EQ(w.singleton.rows(), 2 * w.pool.size());
}

TEST(Generate, ValuesAreExactFloats) {
  auto w = generate(small());
  for (double v : w.pairwise.values()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
}

TEST(Generate, LabelsFollowModes) {
  auto w = generate(small(2));
  for (std::size_t i = 0; i < w.truth.size(); ++i) {
    const auto& t = w.truth[i];
    EXPECT_EQ(w.pool.records()[i].label == 1, t.left_mode == t.right_mode);
    EXPECT_FALSE(t.unseen);
  }
}

TEST(Generate, UnseenOnlyInTest) {
  auto cfg = small();
  cfg.unseen_rate = 1.0;
  auto w = generate(cfg);
  for (std::size_t i = 0; i < w.truth.size(); ++i)
    EXPECT_EQ(w.truth[i].unseen, w.pool.records()[i].split == Split::test);
}

TEST(Config, ValidationErrors) {
  auto bad = [](auto mutate) {
    auto c = small();
    mutate(c);
    return kind_of([&] { generate(c); });
  };
  EXPECT_EQ(bad([](SynthConfig& c) { c.num_domains = 1; }), ErrorKind::ConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.modes_per_domain = 1; }), ErrorKind::ConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.corner_case_rate = 1.5; }), ErrorKind::ConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.pair_noise = -1; }), ErrorKind::ConfigError);
  EXPECT_EQ(bad([](SynthConfig& c) { c.dim = 3; }), ErrorKind::ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto c = small(9);
  c.corner_case_rate = 0.125;
  auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  auto partial = config_from_json(nlohmann::json::parse(R"({"num_domains": 4})"));
  EXPECT_EQ(partial.num_domains, 4u);
  EXPECT_EQ(partial.dim, SynthConfig{}.dim);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json::parse(R"({"domains": 4})")); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { config_from_json(nlohmann::json::parse(R"({"dim": "big"})")); }), ErrorKind::ConfigError);
}

TEST(Separability, DomainsAndLabelsAreLinearlySeparable) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto w = generate(separable(seed));
    std::vector<oracle::Vec> xs;
    std::vector<int> dom;
    for (const auto& r : w.pool.records()) {
      xs.push_back(vec_of(w.pairwise, r.id));
      dom.push_back(r.domain == "dom01");
    }
    EXPECT_TRUE(linearly_separable(xs, dom)) << "seed " << seed;
    for (const auto& d : w.pool.domains()) {
      std::vector<oracle::Vec> dx;
      std::vector<int> y;
      for (auto id : w.pool.domain(d).train) {
        dx.push_back(vec_of(w.pairwise, id));
        y.push_back(w.pool.at(id).label);
      }
      EXPECT_TRUE(linearly_separable(dx, y)) << "seed " << seed << " " << d;
    }
  }
}

TEST(Separability, FullTrainOracleIsPerfect) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto w = generate(separable(seed));
    const auto& dom = w.target();
    const auto n = w.pool.domain(dom).train.size();
    auto plan = select_plan(w, Method::SPEC, dom, Budget(n), 0);
    EXPECT_DOUBLE_EQ(plan_f1(w, plan, dom), 1.0) << "seed " << seed;
  }
}

TEST(Separability, AllCornerCasesWithoutOffsetAreNearChance) {
  double acc = 0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small(seed);
    cfg.corner_case_rate = 1.0;
    cfg.corner_shrink = 0.0;
    cfg.test_per_domain = 200;
    auto w = generate(cfg);
    const auto& dom = w.target();
    auto plan = select_plan(w, Method::SPEC, dom, Budget(80), 0);
    const auto& test = w.pool.domain(dom).test;
    auto pred = oracle_predict(plan, w.pairwise, w.pool, test);
    auto lab = labels_of(w.pool, test);
    for (std::size_t i = 0; i < pred.size(); ++i, ++n) acc += pred[i] == lab[i];
  }
  EXPECT_NEAR(acc / n, 0.5, 0.1);
}

TEST(Oracle, MultiplicityEqualsDuplication) {
  auto w = generate(small(3));
  const auto& train = w.pool.domain(w.target()).train;
  auto weighted = plan_of(w.target(), {{train[0], 3}, {train[1], 1}, {train[2], 2}, {train[3], 1}});
  auto dup = plan_of(w.target(), {{train[0], 1}, {train[0], 1}, {train[0], 1}, {train[1], 1}, {train[2], 1},
                                  {train[2], 1}, {train[3], 1}});
  OracleMatcher a(weighted, w.pairwise, w.pool), b(dup, w.pairwise, w.pool);
  for (std::size_t i = 0; i < a.positive_centroid().size(); ++i) {
    EXPECT_NEAR(a.positive_centroid()[i], b.positive_centroid()[i], 1e-12);
    EXPECT_NEAR(a.negative_centroid()[i], b.negative_centroid()[i], 1e-12);
  }
  for (auto id : w.pool.domain(w.target()).test)
    EXPECT_NEAR(a.confidence(w.pairwise.vector(id)), b.confidence(w.pairwise.vector(id)), 1e-12);
}

TEST(Oracle, CentroidsMatchWeightedMeans) {
  auto w = generate(small(6));
  auto plan = select_plan(w, Method::GEN, w.target(), Budget(300), 1);
  std::vector<oracle::Vec> pos, neg;
  for (const auto& e : plan.entries)
    for (std::size_t k = 0; k < e.multiplicity; ++k)
      (w.pool.at(e.id).label ? pos : neg).push_back(vec_of(w.pairwise, e.id));
  OracleMatcher m(plan, w.pairwise, w.pool);
  auto p = oracle::mean(pos), n = oracle::mean(neg);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(m.positive_centroid()[i], p[i], 1e-9);
    EXPECT_NEAR(m.negative_centroid()[i], n[i], 1e-9);
  }
  auto x = w.pairwise.vector(w.pool.domain(w.target()).test[0]);
  oracle::Vec xv(x.begin(), x.end());
  const double want = std::clamp(0.5 + (oracle::cosine(xv, p) - oracle::cosine(xv, n)) / 4.0, 0.0, 1.0);
  EXPECT_NEAR(m.confidence(x), want, 1e-12);
}

TEST(Oracle, ErrorKinds) {
  auto w = generate(small());
  SampleId pos{0}, neg{0};
  for (auto id : w.pool.domain(w.target()).train) (w.pool.at(id).label ? pos : neg) = id;
  EXPECT_EQ(kind_of([&] { OracleMatcher(plan_of(w.target(), {{pos, 2}}), w.pairwise, w.pool); }),
            ErrorKind::OneClassPlan);
  EXPECT_EQ(kind_of([&] { OracleMatcher(plan_of(w.target(), {{neg, 1}}), w.pairwise, w.pool); }),
            ErrorKind::OneClassPlan);
  EXPECT_EQ(kind_of([&] { OracleMatcher(plan_of(w.target(), {{pos, 1}, {SampleId{999999}, 1}}), w.pairwise, w.pool); }),
            ErrorKind::UnknownSampleId);
  EXPECT_DOUBLE_EQ(plan_f1(w, plan_of(w.target(), {{pos, 1}}), w.target()), 0.0);
}

TEST(Overlap, DomainCentroidsSeparateWithDistance) {
  double prev = 2.0;
  for (double dist : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    auto cfg = small(1);
    cfg.inter_domain_distance = dist;
    auto w = generate(cfg);
    std::vector<oracle::Vec> cents;
    for (const auto& d : w.pool.domains()) {
      std::vector<oracle::Vec> xs;
      for (auto id : w.pool.domain(d).train) xs.push_back(vec_of(w.pairwise, id));
      cents.push_back(oracle::mean(xs));
    }
    double s = 0;
    int n = 0;
    for (std::size_t a = 0; a < cents.size(); ++a)
      for (std::size_t b = a + 1; b < cents.size(); ++b, ++n) s += oracle::cosine(cents[a], cents[b]);
    EXPECT_LT(s / n, prev) << "distance " << dist;
    prev = s / n;
  }
}

TEST(Composition, KcgCoversAtLeastAsManyDomainsAsTvdf) {
  std::size_t kcg = 0, tvdf = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = small(seed);
    cfg.num_domains = 6;
    cfg.target_train = 20;
    auto w = generate(cfg);
    kcg += composition(select_plan(w, Method::KCG, w.target(), Budget(80), seed), w.pool).size();
    tvdf += composition(select_plan(w, Method::TVDF, w.target(), Budget(80), seed), w.pool).size();
  }
  EXPECT_GE(kcg, tvdf);
}

TEST(Composition, CsvSharesSumToOne) {
  auto cfg = small(2);
  cfg.target_train = 10;
  auto w = generate(cfg);
  auto plan = select_plan(w, Method::KCG, w.target(), Budget(50), 0);
  auto comp = composition(plan, w.pool);
  std::size_t total = 0;
  for (const auto& [d, n] : comp) {
    EXPECT_NE(d, w.target());
    total += n;
  }
  EXPECT_EQ(total, 40u);
  std::ostringstream out;
  write_composition_csv(plan, w.pool, out);
  EXPECT_EQ(out.str().rfind("target_domain,method,source_domain,count,share\n", 0), 0u);
}

TEST(Stats, SignTestAndSd) {
  EXPECT_NEAR(sign_test_p(15, 5), 2.0 * 21700.0 / 1048576.0, 1e-12);
  EXPECT_NEAR(sign_test_p(5, 15), sign_test_p(15, 5), 1e-15);
  EXPECT_DOUBLE_EQ(sign_test_p(10, 10), 1.0);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 0), 1.0);
  EXPECT_NEAR(sign_test_p(6, 0), 2.0 / 64.0, 1e-12);
  std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(xs), 5.0);
  EXPECT_DOUBLE_EQ(population_sd(xs), 2.0);
}

TEST(Bench, ShapeSummaryAndJobsInvariance) {
  auto w = generate(small(1));
  const std::vector<std::string> methods{"gen", "kcg", "beacon"};
  const std::vector<std::size_t> budgets{60, 120};
  auto t1 = run_benchmark(w, methods, budgets, 3, {}, 1);
  auto t4 = run_benchmark(w, methods, budgets, 3, {}, 4);
  ASSERT_EQ(t1.cells.size(), 6u);
  ASSERT_EQ(t1.summary.size(), 3u);
  EXPECT_EQ(t1.cells[0].method, "GEN");
  EXPECT_EQ(t1.cells[5].method, "BEACON");
  EXPECT_EQ(t1.cells[5].budget, 120u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(t1.cells[i].macro_f1, t4.cells[i].macro_f1);
    EXPECT_EQ(t1.cells[i].weighted_f1, t4.cells[i].weighted_f1);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    const double a = t1.cells[2 * s].macro_f1, b = t1.cells[2 * s + 1].macro_f1;
    EXPECT_NEAR(t1.summary[s].macro_mean, (a + b) / 2, 1e-12);
    EXPECT_NEAR(t1.summary[s].macro_sd, std::abs(a - b) / 2, 1e-12);
  }
  std::ostringstream out;
  write_bench_csv(t1, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "method,budget,macro_f1,weighted_f1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6 + 2 * 3);
  EXPECT_EQ(kind_of([&] { run_benchmark(w, {"nope"}, budgets, 0); }), ErrorKind::ConfigError);
}

TEST(Plateau, SpecScoreIsConstantOverWholeCopies) {
  auto cfg = small(4);
  cfg.target_train = 25;
  auto w = generate(cfg);
  const double base = plan_f1(w, select_plan(w, Method::SPEC, w.target(), Budget(25), 0), w.target());
  for (std::size_t k = 2; k <= 6; ++k)
    EXPECT_EQ(plan_f1(w, select_plan(w, Method::SPEC, w.target(), Budget(25 * k), k), w.target()), base);
}

TEST(Beacon, MembersWeightedByValidationF1) {
  auto cfg = small(2);
  cfg.target_train = 20;
  auto w = generate(cfg);
  auto out = run_beacon(w, w.target(), Budget(100), 1);
  ASSERT_EQ(out.loop.rounds.size(), 3u);
  ASSERT_EQ(out.members.size(), 2u);
  EXPECT_EQ(out.members[0].model, "KCG");
  EXPECT_EQ(out.members[1].model, "TVDF");
  for (const auto& m : out.members) {
    EXPECT_GE(m.validation_f1, 0.0);
    EXPECT_LE(m.validation_f1, 1.0);
    EXPECT_EQ(m.confidences.size(), w.pool.domain(w.target()).test.size());
  }
  EXPECT_EQ(evaluate(w, Strategy::parse("BEACON"), w.target(), Budget(100), 1), out.f1);
}
