#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "beacon/ensemble.hpp"
#include "beacon/error.hpp"
#include "beacon/ingest.hpp"
#include "beacon/loop.hpp"
#include "beacon/model.hpp"
#include "beacon/parallel.hpp"
#include "beacon/rng.hpp"
#include "beacon/samplers.hpp"

// Synthetic multi-domain matching workloads with known ground truth.
//
// Geometry: every pair vector shares a common offset along axis 0. Domain
// means sit at inter_domain_distance along a latent "type" direction; types
// come in families, so some domains are close relatives of each other. Each
// domain has its own label direction (a global component plus a rotated copy
// of the type), which is what makes foreign training data more or less useful.
// Entities are drawn around per-domain modes; a match joins two entities of
// one mode, a non-match two different modes. The pair vector is the entity
// mean pushed ± along the domain's label direction, plus noise.
namespace beacon::synth {

struct SynthConfig {
  std::size_t num_domains = 6;
  std::size_t dim = 64;
  std::size_t train_per_domain = 300;
  std::size_t validation_per_domain = 60;
  std::size_t test_per_domain = 150;
  // Counts for the first domain; 0 keeps the per-domain value.
  std::size_t target_train = 0;
  std::size_t target_validation = 0;
  std::size_t target_test = 0;
  double inter_domain_distance = 2.0;
  double corner_case_rate = 0.3;
  double unseen_rate = 0.0;
  std::uint64_t seed = 0;

  std::size_t families = 3;
  double family_spread = 0.5;
  double base_offset = 3.0;
  double label_strength = 1.5;
  double domain_specificity = 1.0;
  std::size_t modes_per_domain = 30;
  double mode_spread = 0.6;
  double entity_noise = 0.25;
  double pair_noise = 0.8;
  double corner_shrink = 0.15;
  double positive_rate = 0.5;
};

inline void validate(const SynthConfig& c) {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::ConfigError, msg); };
  check(c.num_domains >= 2, "num_domains must be at least 2");
  check(c.dim >= 4, "dim must be at least 4");
  check(c.train_per_domain >= 1 && c.validation_per_domain >= 1 && c.test_per_domain >= 1,
        "per-domain counts must be at least 1");
  for (double r : {c.corner_case_rate, c.unseen_rate, c.positive_rate})
    check(r >= 0.0 && r <= 1.0, "rates must lie in [0,1]");
  check(c.modes_per_domain >= 2, "non-matching pairs need at least two modes per domain");
  check(c.families >= 1, "families must be at least 1");
  for (double v : {c.inter_domain_distance, c.family_spread, c.base_offset, c.label_strength, c.domain_specificity,
                   c.mode_spread, c.entity_noise, c.pair_noise, c.corner_shrink})
    check(std::isfinite(v) && v >= 0.0, "geometry parameters must be finite and non-negative");
}

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["num_domains"] = c.num_domains;
  j["dim"] = c.dim;
  j["train_per_domain"] = c.train_per_domain;
  j["validation_per_domain"] = c.validation_per_domain;
  j["test_per_domain"] = c.test_per_domain;
  j["target_train"] = c.target_train;
  j["target_validation"] = c.target_validation;
  j["target_test"] = c.target_test;
  j["inter_domain_distance"] = c.inter_domain_distance;
  j["corner_case_rate"] = c.corner_case_rate;
  j["unseen_rate"] = c.unseen_rate;
  j["seed"] = c.seed;
  j["families"] = c.families;
  j["family_spread"] = c.family_spread;
  j["base_offset"] = c.base_offset;
  j["label_strength"] = c.label_strength;
  j["domain_specificity"] = c.domain_specificity;
  j["modes_per_domain"] = c.modes_per_domain;
  j["mode_spread"] = c.mode_spread;
  j["entity_noise"] = c.entity_noise;
  j["pair_noise"] = c.pair_noise;
  j["corner_shrink"] = c.corner_shrink;
  j["positive_rate"] = c.positive_rate;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::ConfigError, "synthetic config must be a JSON object");
  SynthConfig c;
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items())
    require(known.contains(key), ErrorKind::ConfigError, "unknown synthetic config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("num_domains", c.num_domains);
    get("dim", c.dim);
    get("train_per_domain", c.train_per_domain);
    get("validation_per_domain", c.validation_per_domain);
    get("test_per_domain", c.test_per_domain);
    get("target_train", c.target_train);
    get("target_validation", c.target_validation);
    get("target_test", c.target_test);
    get("inter_domain_distance", c.inter_domain_distance);
    get("corner_case_rate", c.corner_case_rate);
    get("unseen_rate", c.unseen_rate);
    get("seed", c.seed);
    get("families", c.families);
    get("family_spread", c.family_spread);
    get("base_offset", c.base_offset);
    get("label_strength", c.label_strength);
    get("domain_specificity", c.domain_specificity);
    get("modes_per_domain", c.modes_per_domain);
    get("mode_spread", c.mode_spread);
    get("entity_noise", c.entity_noise);
    get("pair_noise", c.pair_noise);
    get("corner_shrink", c.corner_shrink);
    get("positive_rate", c.positive_rate);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("bad synthetic config value: ") + e.what());
  }
  validate(c);
  return c;
}

inline SynthConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, path + ": " + e.what());
  }
  return config_from_json(j);
}

struct PairTruth {
  std::size_t domain = 0;
  bool corner = false;
  bool unseen = false;
  std::size_t left_mode = 0;
  std::size_t right_mode = 0;
};

struct SynthWorkload {
  SynthConfig config;
  CandidatePool pool;
  EmbeddingMatrix pairwise;
  EmbeddingMatrix singleton;
  /// Aligned with pool.records().
  std::vector<PairTruth> truth;
  std::vector<DomainId> domain_names;
  std::vector<std::vector<double>> domain_means;

  const DomainId& target() const { return domain_names.front(); }
};

inline std::string domain_name(std::size_t d) {
  std::string s = std::to_string(d);
  return "dom" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

namespace detail {

inline void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  if (s < kZeroNorm) return;
  for (auto& x : v) x /= s;
}

inline std::vector<double> gaussian(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline std::vector<double> unit_gaussian(Rng& rng, std::size_t n) {
  auto v = gaussian(rng, n);
  normalize(v);
  return v;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
inline std::vector<std::vector<double>> random_rotation(Rng& rng, std::size_t n) {
  std::vector<std::vector<double>> q;
  while (q.size() < n) {
    auto v = gaussian(rng, n);
    for (const auto& b : q) {
      double p = 0.0;
      for (std::size_t i = 0; i < n; ++i) p += v[i] * b[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= p * b[i];
    }
    double s = 0.0;
    for (double x : v) s += x * x;
    if (s < 1e-8) continue;
    normalize(v);
    q.push_back(std::move(v));
  }
  return q;
}

inline double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace detail

/// Builds a workload. Values are rounded to 32-bit floats so that writing and
/// reloading the embeddings is lossless.
inline SynthWorkload generate(const SynthConfig& config) {
  validate(config);
  const std::size_t d = config.dim;
  const std::size_t j = config.num_domains;
  const std::size_t L = std::min<std::size_t>(6, (d - 2) / 2);
  Rng rng(config.seed);

  std::vector<std::vector<double>> families;
  for (std::size_t f = 0; f < config.families; ++f) families.push_back(detail::unit_gaussian(rng, L));
  std::vector<std::vector<double>> types(j);
  for (std::size_t k = 0; k < j; ++k) {
    types[k] = families[k % config.families];
    for (auto& x : types[k]) x += config.family_spread * rng.normal();
    detail::normalize(types[k]);
  }
  const auto rotation = detail::random_rotation(rng, L);

  SynthWorkload w;
  w.config = config;
  std::vector<std::vector<double>> label_dirs(j);
  std::vector<double> label_norm(j);
  for (std::size_t k = 0; k < j; ++k) {
    w.domain_names.push_back(domain_name(k));
    std::vector<double> mean(d, 0.0);
    mean[0] = config.base_offset;
    for (std::size_t i = 0; i < L; ++i) mean[2 + i] = config.inter_domain_distance * types[k][i];
    w.domain_means.push_back(std::move(mean));
    std::vector<double> u(d, 0.0);
    u[1] = 1.0;
    double ln = 0.0;
    for (std::size_t r = 0; r < L; ++r) {
      double x = 0.0;
      for (std::size_t c = 0; c < L; ++c) x += rotation[r][c] * types[k][c];
      u[2 + L + r] = config.domain_specificity * x;
      ln += x * x;
    }
    label_norm[k] = std::sqrt(ln);
    detail::normalize(u);
    label_dirs[k] = std::move(u);
  }

  std::vector<CandidateRecord> records;
  std::vector<SampleId> pair_ids, entity_ids;
  std::vector<double> pair_values, entity_values;
  std::uint64_t next_id = 1;
  std::uint64_t next_entity = 1;
  const std::size_t M = config.modes_per_domain;

  auto make_entity = [&](std::size_t dom, std::size_t mode, bool unseen, const std::vector<double>& v) {
    EntityRow row;
    row.attributes = {{"title", "item " + std::to_string(next_entity++) + " of mode " + std::to_string(mode) +
                                    (unseen ? " held out" : "")},
                      {"domain", w.domain_names[dom]}};
    entity_ids.push_back(ingest::entity_key(row));
    for (double x : v) entity_values.push_back(detail::to_f32(x));
    return row;
  };

  for (std::size_t k = 0; k < j; ++k) {
    auto modes = [&] {
      std::vector<std::vector<double>> m(M);
      for (auto& v : m) {
        v = w.domain_means[k];
        for (auto& x : v) x += config.mode_spread * rng.normal();
      }
      return m;
    };
    const auto seen = modes();
    const auto held_out = modes();
    const bool first = k == 0;
    const std::pair<Split, std::size_t> counts[] = {
        {Split::train, first && config.target_train ? config.target_train : config.train_per_domain},
        {Split::validation,
         first && config.target_validation ? config.target_validation : config.validation_per_domain},
        {Split::test, first && config.target_test ? config.target_test : config.test_per_domain}};
    for (const auto& [split, count] : counts) {
      for (std::size_t c = 0; c < count; ++c) {
        PairTruth t;
        t.domain = k;
        const std::vector<std::vector<double>>* mset = &seen;
        std::vector<double> u = label_dirs[k];
        if (split == Split::test && rng.bernoulli(config.unseen_rate)) {
          t.unseen = true;
          mset = &held_out;
          // Held-out entities follow their own matching rule.
          auto r = detail::unit_gaussian(rng, d);
          u.assign(d, 0.0);
          u[1] = 1.0;
          for (std::size_t i = 0; i < d; ++i) u[i] += config.domain_specificity * label_norm[k] * r[i];
          detail::normalize(u);
        }
        const int y = rng.bernoulli(config.positive_rate) ? 1 : 0;
        const std::size_t a = rng.below(M);
        const std::size_t b = y ? a : (a + 1 + rng.below(M - 1)) % M;
        t.left_mode = a;
        t.right_mode = b;
        std::vector<double> e1 = (*mset)[a], e2 = (*mset)[b];
        for (auto& x : e1) x += config.entity_noise * rng.normal();
        for (auto& x : e2) x += config.entity_noise * rng.normal();
        t.corner = rng.bernoulli(config.corner_case_rate);
        const double mag = config.label_strength * (t.corner ? config.corner_shrink : 1.0) * (y ? 1.0 : -1.0);
        std::vector<double> p(d);
        for (std::size_t i = 0; i < d; ++i)
          p[i] = 0.5 * (e1[i] + e2[i]) + mag * u[i] + config.pair_noise * rng.normal();

        CandidateRecord rec;
        rec.id = SampleId{next_id++};
        rec.label = y;
        rec.domain = w.domain_names[k];
        rec.split = split;
        rec.left = make_entity(k, a, t.unseen, e1);
        rec.right = make_entity(k, b, t.unseen, e2);
        pair_ids.push_back(rec.id);
        for (double x : p) pair_values.push_back(detail::to_f32(x));
        records.push_back(std::move(rec));
        w.truth.push_back(t);
      }
    }
  }
  w.pool = CandidatePool(std::move(records));
  w.pairwise = EmbeddingMatrix(d, std::move(pair_ids), std::move(pair_values), EmbeddingKind::pairwise);
  w.singleton = EmbeddingMatrix(d, std::move(entity_ids), std::move(entity_values), EmbeddingKind::singleton);
  return w;
}

// ---------------------------------------------------------------------------
// Oracle matcher: two multiplicity-weighted class centroids, cosine proximity.

class OracleMatcher {
 public:
  OracleMatcher(const SelectionPlan& plan, const EmbeddingMatrix& embeddings, const CandidatePool& pool) {
    require(!plan.entries.empty(), ErrorKind::ContractViolation, "oracle matcher needs a non-empty plan");
    const std::size_t d = embeddings.dim();
    std::vector<CompensatedSum> pos(d), neg(d);
    double wp = 0.0, wn = 0.0;
    for (const auto& e : plan.entries) {
      const auto& rec = pool.at(e.id);
      auto x = embeddings.vector(e.id);
      const double m = static_cast<double>(e.multiplicity);
      auto& acc = rec.label ? pos : neg;
      for (std::size_t i = 0; i < d; ++i) acc[i].add(m * x[i]);
      (rec.label ? wp : wn) += m;
    }
    require(wp > 0.0 && wn > 0.0, ErrorKind::OneClassPlan,
            "plan for '" + plan.target_domain + "' contains only " + (wp > 0.0 ? "matches" : "non-matches"));
    positive_.resize(d);
    negative_.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      positive_[i] = pos[i].value() / wp;
      negative_[i] = neg[i].value() / wn;
    }
  }

  double confidence(std::span<const double> x) const {
    return std::clamp(0.5 + (cosine(x, positive_) - cosine(x, negative_)) / 4.0, 0.0, 1.0);
  }

  int predict(std::span<const double> x, double threshold = 0.5) const {
    return ensemble::classify(confidence(x), threshold);
  }

  const std::vector<double>& positive_centroid() const { return positive_; }
  const std::vector<double>& negative_centroid() const { return negative_; }

 private:
  std::vector<double> positive_;
  std::vector<double> negative_;
};

inline std::vector<int> oracle_predict(const SelectionPlan& plan, const EmbeddingMatrix& embeddings,
                                       const CandidatePool& pool, std::span<const SampleId> ids,
                                       double threshold = 0.5) {
  const OracleMatcher m(plan, embeddings, pool);
  std::vector<int> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(m.predict(embeddings.vector(id), threshold));
  return out;
}

inline std::vector<int> labels_of(const CandidatePool& pool, std::span<const SampleId> ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(pool.at(id).label);
  return out;
}

// ---------------------------------------------------------------------------
// Cluster-sharpening trainer: after round r every vector moves toward its
// domain anchor, x' = a + rate^r (x − a). Anchors are the domain centroids of
// the train and validation rows of the initial embeddings.

class SharpeningTrainer : public loop::TrainerPort {
 public:
  SharpeningTrainer(const CandidatePool& pool, loop::RefreshedEmbeddings initial, double rate)
      : pool_(pool), initial_(std::move(initial)), rate_(rate) {
    require(rate > 0.0 && rate <= 1.0, ErrorKind::ConfigError, "sharpening rate must lie in (0,1]");
    const std::size_t d = initial_.pairwise.dim();
    std::map<DomainId, std::vector<CompensatedSum>> pair_sum, ent_sum;
    std::map<DomainId, double> pair_n, ent_n;
    for (const auto& r : pool_.records()) {
      pair_domain_[r.id] = r.domain;
      for (const auto* side : {&r.left, &r.right}) entity_domain_[ingest::entity_key(*side)] = r.domain;
      if (r.split == Split::test) continue;
      accumulate(pair_sum, pair_n, r.domain, initial_.pairwise, r.id, d);
      if (initial_.singleton)
        for (const auto* side : {&r.left, &r.right})
          accumulate(ent_sum, ent_n, r.domain, *initial_.singleton, ingest::entity_key(*side), d);
    }
    finish(pair_sum, pair_n, pair_anchor_);
    finish(ent_sum, ent_n, entity_anchor_);
  }

  std::string train_step(const SelectionPlan& plan, std::size_t round) override {
    ++steps_;
    return "sharpen:" + std::string(to_string(plan.method)) + ":" + std::to_string(round);
  }

  loop::RefreshedEmbeddings refresh_embeddings(const std::string& checkpoint) override {
    const auto pos = checkpoint.rfind(':');
    require(checkpoint.rfind("sharpen:", 0) == 0 && pos != std::string::npos, ErrorKind::ProtocolViolation,
            "unknown checkpoint '" + checkpoint + "'");
    const std::size_t round = std::stoul(checkpoint.substr(pos + 1));
    std::lock_guard lock(mutex_);
    auto it = cache_.find(round);
    if (it != cache_.end()) return it->second;
    const double f = std::pow(rate_, static_cast<double>(round));
    loop::RefreshedEmbeddings out{sharpen(initial_.pairwise, pair_domain_, pair_anchor_, f), std::nullopt};
    if (initial_.singleton) out.singleton = sharpen(*initial_.singleton, entity_domain_, entity_anchor_, f);
    return cache_.emplace(round, std::move(out)).first->second;
  }

  std::size_t steps() const { return steps_; }

 private:
  using Sums = std::map<DomainId, std::vector<CompensatedSum>>;

  static void accumulate(Sums& sums, std::map<DomainId, double>& n, const DomainId& dom, const EmbeddingMatrix& m,
                         SampleId id, std::size_t d) {
    auto r = m.index_of(id);
    if (!r) return;
    auto& s = sums[dom];
    s.resize(d);
    auto x = m.row(*r);
    for (std::size_t i = 0; i < d; ++i) s[i].add(x[i]);
    n[dom] += 1.0;
  }

  static void finish(const Sums& sums, std::map<DomainId, double>& n,
                     std::map<DomainId, std::vector<double>>& anchors) {
    for (const auto& [dom, s] : sums) {
      auto& a = anchors[dom];
      for (const auto& c : s) a.push_back(c.value() / n[dom]);
    }
  }

  static EmbeddingMatrix sharpen(const EmbeddingMatrix& m, const std::unordered_map<SampleId, DomainId>& domain_of,
                                 const std::map<DomainId, std::vector<double>>& anchors, double f) {
    std::vector<double> v(m.values());
    const std::size_t d = m.dim();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto dom = domain_of.find(m.ids()[r]);
      if (dom == domain_of.end()) continue;
      auto a = anchors.find(dom->second);
      if (a == anchors.end()) continue;
      for (std::size_t i = 0; i < d; ++i) v[r * d + i] = a->second[i] + f * (v[r * d + i] - a->second[i]);
    }
    return EmbeddingMatrix(d, m.ids(), std::move(v), m.kind());
  }

  const CandidatePool& pool_;
  loop::RefreshedEmbeddings initial_;
  double rate_;
  std::unordered_map<SampleId, DomainId> pair_domain_;
  std::unordered_map<SampleId, DomainId> entity_domain_;
  std::map<DomainId, std::vector<double>> pair_anchor_;
  std::map<DomainId, std::vector<double>> entity_anchor_;
  std::map<std::size_t, loop::RefreshedEmbeddings> cache_;
  std::mutex mutex_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  std::size_t rounds = 3;
  double sharpen_rate = 0.5;
  bool normalize = false;
  double threshold = 0.5;
};

/// A benchmark strategy: one selector, or "BEACON" (KCG and TVDF plans after
/// the dynamic loop, combined by weighted soft vote).
struct Strategy {
  std::string name;
  std::optional<Method> method;  // empty for BEACON

  static Strategy parse(std::string_view s) {
    std::string u(s);
    for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u == "BEACON") return {"BEACON", std::nullopt};
    auto m = parse_method(u);
    require(m.has_value(), ErrorKind::ConfigError, "unknown method '" + std::string(s) + "'");
    return {u, m};
  }
};

inline double plan_f1(const SynthWorkload& w, const SelectionPlan& plan, const DomainId& domain,
                      double threshold = 0.5) {
  const auto& test = w.pool.domain(domain).test;
  try {
    return ensemble::f1(oracle_predict(plan, w.pairwise, w.pool, test, threshold), labels_of(w.pool, test));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::OneClassPlan) return 0.0;
    throw;
  }
}

inline SelectionPlan select_plan(const SynthWorkload& w, Method method, const DomainId& domain, Budget budget,
                                 std::uint64_t seed, const EvalOptions& opt = {}) {
  samplers::SamplerContext ctx{w.pool, domain, budget, seed};
  ctx.embeddings = &w.pairwise;
  ctx.normalize = opt.normalize;
  return samplers::select(ctx, method, &w.pairwise);
}

struct BeaconOutcome {
  loop::LoopResult loop;
  std::vector<ensemble::ModelVote> members;
  double f1 = 0.0;
};

/// Runs the loop with the sharpening trainer, fits one oracle per final plan
/// on the initial embeddings, weights members by validation F1 and scores the
/// soft vote on the domain's test split. One-class members are left out; if
/// no member carries weight the run scores 0.
inline BeaconOutcome run_beacon(const SynthWorkload& w, const DomainId& domain, Budget budget, std::uint64_t seed,
                                const EvalOptions& opt = {}) {
  loop::LoopConfig cfg;
  cfg.target_domain = domain;
  cfg.total_rounds = opt.rounds;
  cfg.budget = budget;
  cfg.seed = seed;
  cfg.normalize = opt.normalize;
  loop::RefreshedEmbeddings initial{w.pairwise, std::nullopt};
  SharpeningTrainer trainer(w.pool, initial, opt.sharpen_rate);
  BeaconOutcome out;
  out.loop = loop::run_loop(w.pool, cfg, initial, trainer);

  const auto& val = w.pool.domain(domain).validation;
  const auto& test = w.pool.domain(domain).test;
  for (auto method : cfg.methods) {
    const auto& plan = out.loop.final_plan(method);
    std::optional<OracleMatcher> m;
    try {
      m.emplace(plan, w.pairwise, w.pool);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OneClassPlan) throw;
      continue;
    }
    ensemble::ModelVote v;
    v.model = std::string(to_string(method));
    std::vector<int> vp;
    for (auto id : val) vp.push_back(m->predict(w.pairwise.vector(id), opt.threshold));
    v.validation_f1 = val.empty() ? 0.0 : ensemble::f1(vp, labels_of(w.pool, val));
    for (auto id : test) v.confidences[id] = m->confidence(w.pairwise.vector(id));
    out.members.push_back(std::move(v));
  }
  double weight = 0.0;
  for (const auto& m : out.members) weight += m.validation_f1;
  if (weight <= 0.0) return out;
  std::vector<int> pred;
  for (auto id : test) pred.push_back(ensemble::classify(ensemble::soft_vote(out.members, id), opt.threshold));
  out.f1 = ensemble::f1(pred, labels_of(w.pool, test));
  return out;
}

/// Test F1 on one domain when that domain is the target.
inline double evaluate(const SynthWorkload& w, const Strategy& s, const DomainId& domain, Budget budget,
                       std::uint64_t seed, const EvalOptions& opt = {}) {
  if (!s.method) return run_beacon(w, domain, budget, seed, opt).f1;
  return plan_f1(w, select_plan(w, *s.method, domain, budget, seed, opt), domain, opt.threshold);
}

// ---------------------------------------------------------------------------
// Benchmark table

struct BenchCell {
  std::string method;
  std::size_t budget = 0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
};

struct BenchSummary {
  std::string method;
  double macro_mean = 0.0, macro_sd = 0.0;
  double weighted_mean = 0.0, weighted_sd = 0.0;
};

struct BenchTable {
  std::vector<BenchCell> cells;
  std::vector<BenchSummary> summary;
};

inline double mean(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::EmptyInput, "mean of nothing");
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

/// Population standard deviation.
inline double population_sd(std::span<const double> xs) {
  const double m = mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return std::sqrt(s.value() / static_cast<double>(xs.size()));
}

/// Two-sided exact sign test; ties are dropped before calling.
inline double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  const std::size_t k = std::max(wins, losses);
  double tail = 0.0;
  for (std::size_t i = k; i <= n; ++i)
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, 2.0 * tail);
}

/// Every (method, budget, domain) cell is independent; cells run in parallel
/// and are assembled by key, so the table does not depend on `jobs`.
inline BenchTable run_benchmark(const SynthWorkload& w, const std::vector<std::string>& methods,
                                const std::vector<std::size_t>& budgets, std::uint64_t seed,
                                const EvalOptions& opt = {}, unsigned jobs = 1) {
  require(!methods.empty() && !budgets.empty(), ErrorKind::ConfigError, "benchmark needs methods and budgets");
  std::vector<Strategy> strategies;
  for (const auto& m : methods) strategies.push_back(Strategy::parse(m));
  const auto domains = w.pool.domains();
  const std::size_t nd = domains.size();
  std::vector<double> f1s(strategies.size() * budgets.size() * nd);
  parallel_for(
      f1s.size(), jobs,
      [&](std::size_t i) {
        const std::size_t di = i % nd;
        const std::size_t bi = (i / nd) % budgets.size();
        const std::size_t si = i / (nd * budgets.size());
        f1s[i] = evaluate(w, strategies[si], domains[di], Budget(budgets[bi]), seed, opt);
      },
      2);
  BenchTable t;
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    std::vector<double> macro, weighted;
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
      std::vector<ensemble::DomainScore> scores;
      for (std::size_t di = 0; di < nd; ++di)
        scores.push_back({domains[di], f1s[(si * budgets.size() + bi) * nd + di],
                          w.pool.domain(domains[di]).test.size()});
      const auto agg = ensemble::aggregate_f1(scores);
      t.cells.push_back({strategies[si].name, budgets[bi], agg.macro, agg.weighted});
      macro.push_back(agg.macro);
      weighted.push_back(agg.weighted);
    }
    t.summary.push_back(
        {strategies[si].name, mean(macro), population_sd(macro), mean(weighted), population_sd(weighted)});
  }
  return t;
}

inline void write_bench_csv(const BenchTable& t, std::ostream& out) {
  char buf[96];
  out << "method,budget,macro_f1,weighted_f1\n";
  for (const auto& c : t.cells) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f", c.budget, c.macro_f1, c.weighted_f1);
    out << c.method << ',' << buf << '\n';
  }
  for (const auto& s : t.summary) {
    std::snprintf(buf, sizeof buf, "Mean,%.6f,%.6f", s.macro_mean, s.weighted_mean);
    out << s.method << ',' << buf << '\n';
    std::snprintf(buf, sizeof buf, "SD,%.6f,%.6f", s.macro_sd, s.weighted_sd);
    out << s.method << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Selection composition: where the out-of-domain part of a plan comes from.

inline std::map<DomainId, std::size_t> composition(const SelectionPlan& plan, const CandidatePool& pool) {
  std::map<DomainId, std::size_t> out;
  for (const auto& e : plan.entries)
    if (e.source == Source::out_of_domain) out[pool.at(e.id).domain] += e.multiplicity;
  return out;
}

inline void write_composition_csv(const SelectionPlan& plan, const CandidatePool& pool, std::ostream& out) {
  const auto comp = composition(plan, pool);
  std::size_t total = 0;
  for (const auto& [_, n] : comp) total += n;
  out << "target_domain,method,source_domain,count,share\n";
  char buf[32];
  for (const auto& [dom, n] : comp) {
    std::snprintf(buf, sizeof buf, "%.6f", total ? static_cast<double>(n) / static_cast<double>(total) : 0.0);
    out << plan.target_domain << ',' << to_string(plan.method) << ',' << dom << ',' << n << ',' << buf << '\n';
  }
}

}  // namespace beacon::synth
