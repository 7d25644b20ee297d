#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <sstream>

#include "beacon/ensemble.hpp"
#include "oracles.hpp"

using namespace beacon;
using namespace beacon::ensemble;

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

std::vector<ModelVote> votes(const std::vector<double>& conf, const std::vector<double>& w, SampleId id = SampleId{1}) {
  std::vector<ModelVote> out;
  for (std::size_t i = 0; i < conf.size(); ++i) out.push_back({"m" + std::to_string(i), {{id, conf[i]}}, w[i]});
  return out;
}

}  // namespace

TEST(SoftVote, WorkedValue) {
  EXPECT_DOUBLE_EQ(soft_vote(votes({0.8, 0.4}, {0.9, 0.6}), SampleId{1}), 0.64);
}

TEST(SoftVote, EqualWeightsAndSingleModel) {
  EXPECT_DOUBLE_EQ(soft_vote(votes({0.2, 0.6, 0.7}, {0.5, 0.5, 0.5}), SampleId{1}), 0.5);
  EXPECT_DOUBLE_EQ(soft_vote(votes({0.37}, {0.2}), SampleId{1}), 0.37);
}

TEST(SoftVote, Errors) {
  EXPECT_EQ(kind_of([] { soft_vote(votes({0.3, 0.4}, {0.0, 0.0}), SampleId{1}); }), ErrorKind::DegenerateWeights);
  EXPECT_EQ(kind_of([] { soft_vote(votes({0.3}, {0.5}), SampleId{2}); }), ErrorKind::UnknownSampleId);
  EXPECT_EQ(kind_of([] { soft_vote(votes({1.3}, {0.5}), SampleId{1}); }), ErrorKind::ContractViolation);
  EXPECT_EQ(kind_of([] { soft_vote(votes({0.3}, {1.5}), SampleId{1}); }), ErrorKind::ContractViolation);
  EXPECT_EQ(kind_of([] { soft_vote({}, SampleId{1}); }), ErrorKind::EmptyInput);
}

TEST(SoftVote, ConvexAndWeightScaleInvariant) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 1 + g() % 6;
    std::vector<double> c(k), w(k);
    for (std::size_t i = 0; i < k; ++i) {
      c[i] = u(g);
      w[i] = 0.01 + 0.99 * u(g);
    }
    const double f = soft_vote(votes(c, w), SampleId{1});
    EXPECT_GE(f, *std::min_element(c.begin(), c.end()) - 1e-15);
    EXPECT_LE(f, *std::max_element(c.begin(), c.end()) + 1e-15);
    EXPECT_NEAR(f, oracle::soft_vote(c, w), 1e-12);
    const double s = 0.05 + 0.9 * u(g);
    auto ws = w;
    for (auto& x : ws) x *= s;
    EXPECT_NEAR(soft_vote(votes(c, ws), SampleId{1}), f, 1e-12);
  }
}

TEST(Classify, ThresholdConvention) {
  EXPECT_EQ(classify(0.64), 1);
  EXPECT_EQ(classify(0.5), 1);
  EXPECT_EQ(classify(0.49), 0);
  EXPECT_EQ(classify(0.7, 0.8), 0);
}

TEST(F1, WorkedValues) {
  std::vector<int> y{1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(f1(y, y), 1.0);
  EXPECT_DOUBLE_EQ(f1(std::vector<int>{1, 1, 0}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(f1(std::vector<int>{0, 0}, std::vector<int>{1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(f1(std::vector<int>{0, 0}, std::vector<int>{0, 0}), 1.0);
  EXPECT_EQ(kind_of([] { f1(std::vector<int>{1}, std::vector<int>{1, 0}); }), ErrorKind::LengthMismatch);
}

TEST(F1, MatchesConfusionOracle) {
  std::mt19937_64 g(8);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + g() % 30;
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = g() % 2;
      y[i] = g() % 3 == 0;
    }
    EXPECT_NEAR(f1(p, y), oracle::f1(p, y), 1e-12);
  }
}

TEST(Aggregate, WorkedValues) {
  std::vector<DomainScore> s{{"a", 0.5, 10}, {"b", 1.0, 30}};
  auto agg = aggregate_f1(s);
  EXPECT_DOUBLE_EQ(agg.macro, 0.75);
  EXPECT_DOUBLE_EQ(agg.weighted, 0.875);
  std::vector<DomainScore> same{{"a", 0.3, 5}, {"b", 0.3, 50}};
  EXPECT_DOUBLE_EQ(aggregate_f1(same).macro, 0.3);
  EXPECT_DOUBLE_EQ(aggregate_f1(same).weighted, 0.3);
  std::vector<DomainScore> one{{"a", 0.42, 7}};
  EXPECT_DOUBLE_EQ(aggregate_f1(one).macro, 0.42);
  EXPECT_DOUBLE_EQ(aggregate_f1(one).weighted, 0.42);
  EXPECT_EQ(kind_of([] { aggregate_f1({}); }), ErrorKind::EmptyInput);
}

TEST(Aggregate, BoundsAndEqualSizes) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + g() % 8;
    std::vector<DomainScore> s, eq;
    double lo = 1, hi = 0, sum = 0, wsum = 0, wtot = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = u(g);
      const std::size_t size = 1 + g() % 500;
      s.push_back({"d" + std::to_string(i), f, size});
      eq.push_back({"d" + std::to_string(i), f, 17});
      lo = std::min(lo, f);
      hi = std::max(hi, f);
      sum += f;
      wsum += f * size;
      wtot += size;
    }
    auto a = aggregate_f1(s);
    EXPECT_GE(a.weighted, lo - 1e-15);
    EXPECT_LE(a.weighted, hi + 1e-15);
    EXPECT_NEAR(a.macro, sum / n, 1e-12);
    EXPECT_NEAR(a.weighted, wsum / wtot, 1e-12);
    auto e = aggregate_f1(eq);
    EXPECT_NEAR(e.macro, e.weighted, 1e-12);
  }
}

TEST(Files, VotesRoundTrip) {
  std::vector<ModelVote> v{{"kcg", {{SampleId{3}, 0.25}, {SampleId{1}, 0.75}}, 0.8},
                           {"tvdf", {{SampleId{1}, 0.5}, {SampleId{3}, 1.0}}, 0.6}};
  std::stringstream ss;
  write_votes(v, ss);
  auto back = read_votes(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].model, "kcg");
  EXPECT_EQ(back[1].validation_f1, 0.6);
  EXPECT_EQ(back[0].confidences, v[0].confidences);
  EXPECT_DOUBLE_EQ(soft_vote(back, SampleId{1}), (0.75 * 0.8 + 0.5 * 0.6) / 1.4);
}

TEST(Files, EvalCsvLayout) {
  std::vector<DomainScore> s{{"a", 0.5, 10}, {"b", 1.0, 30}};
  std::ostringstream out;
  write_eval_csv(s, out);
  EXPECT_EQ(out.str(),
            "domain,test_size,f1\n"
            "a,10,0.500000\n"
            "b,30,1.000000\n"
            "macro,40,0.750000\n"
            "weighted,40,0.875000\n");
  std::stringstream js;
  write_scores(s, js);
  auto back = read_scores(js);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].test_size, 30u);
}

TEST(EvaluatePool, PerDomainF1) {
  auto inst = fixtures::build({{1, 0}}, {{0, 1}}, {}, 1, {1, 0});
  std::vector<CandidateRecord> recs;
  for (std::uint64_t i = 1; i <= 6; ++i)
    recs.push_back({SampleId{i}, fixtures::entity("l"), fixtures::entity("r"), i <= 3 ? 1 : 0, i % 2 ? "a" : "b",
                    Split::test});
  CandidatePool pool(recs);
  std::unordered_map<SampleId, int> pred;
  for (std::uint64_t i = 1; i <= 6; ++i) pred[SampleId{i}] = 1;
  auto scores = evaluate_pool(pool, pred);
  ASSERT_EQ(scores.size(), 2u);
  // a: ids 1,3,5 labels 1,1,0 all predicted 1 -> tp 2 fp 1 -> 0.8
  EXPECT_DOUBLE_EQ(scores[0].f1, 0.8);
  // b: ids 2,4,6 labels 1,0,0 -> tp 1 fp 2 -> 0.5
  EXPECT_DOUBLE_EQ(scores[1].f1, 0.5);
  pred.erase(SampleId{6});
  EXPECT_EQ(kind_of([&] { evaluate_pool(pool, pred); }), ErrorKind::UnknownSampleId);
}
