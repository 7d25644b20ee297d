#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "beacon/error.hpp"
#include "beacon/hash.hpp"
#include "beacon/model.hpp"
#include "beacon/parallel.hpp"
#include "beacon/rng.hpp"

namespace beacon::samplers {

/// Everything a selector needs for one target domain.
struct SamplerContext {
  const CandidatePool& pool;
  DomainId target_domain;
  Budget budget;
  std::uint64_t rng_seed = 0;
  /// Selection vectors for candidate pairs; required by NN, TVDF and KCG.
  const EmbeddingMatrix* embeddings = nullptr;
  /// L2-normalize vectors before centroids and scores are computed.
  bool normalize = false;
  /// Experimental: re-center after each accepted TVDF candidate.
  bool adaptive_tvdf = false;
  unsigned jobs = 1;
};

// ---------------------------------------------------------------------------

/// Uniform sample of b items without replacement, returned in ascending order.
inline std::vector<SampleId> random_select(std::span<const SampleId> set, std::size_t b, Rng& rng) {
  require(b <= set.size(), ErrorKind::InsufficientPool,
          "cannot select " + std::to_string(b) + " items from " + std::to_string(set.size()));
  std::vector<SampleId> pool(set.begin(), set.end());
  std::sort(pool.begin(), pool.end());
  // Partial Fisher-Yates: the first b slots end up a uniform b-subset.
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(b);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::vector<SampleId> random_select(std::span<const SampleId> set, std::size_t b, std::uint64_t seed) {
  Rng rng(seed);
  return random_select(set, b, rng);
}

namespace detail {

using Multiplicities = std::vector<std::pair<SampleId, std::size_t>>;

// Fills `total` slots from `ids`: every id floor(total/|ids|) times plus a
// random (total mod |ids|) subset once more. Requires |ids| <= total.
inline Multiplicities oversample(std::span<const SampleId> ids, std::size_t total, Rng& rng) {
  const std::size_t base = total / ids.size();
  const auto extra = random_select(ids, total % ids.size(), rng);
  std::vector<SampleId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  Multiplicities out;
  out.reserve(sorted.size());
  std::size_t e = 0;
  for (auto id : sorted) {
    std::size_t m = base;
    if (e < extra.size() && extra[e] == id) {
      ++m;
      ++e;
    }
    if (m > 0) out.emplace_back(id, m);
  }
  return out;
}

// Draws `total` from `ids`: down-sampling when there is enough, otherwise
// the floor/mod oversampling structure.
inline Multiplicities draw_budget(std::span<const SampleId> ids, std::size_t total, Rng& rng) {
  if (ids.size() > total) {
    Multiplicities out;
    for (auto id : random_select(ids, total, rng)) out.emplace_back(id, 1);
    return out;
  }
  return oversample(ids, total, rng);
}

inline std::string input_hash(const SamplerContext& ctx, Method method, const EmbeddingMatrix* validation) {
  Fnv1a h;
  h.u64(ctx.pool.fingerprint()).str(ctx.target_domain).u64(ctx.budget.beta).u64(ctx.rng_seed);
  h.str(to_string(method)).u64(ctx.normalize ? 1 : 0).u64(ctx.adaptive_tvdf ? 1 : 0);
  if (method != Method::GEN && method != Method::SPEC && ctx.embeddings != nullptr)
    h.u64(ctx.embeddings->fingerprint());
  if (validation != nullptr) h.u64(validation->fingerprint());
  return h.hex();
}

inline SelectionPlan empty_plan(const SamplerContext& ctx, Method method,
                                const EmbeddingMatrix* validation = nullptr) {
  SelectionPlan plan;
  plan.target_domain = ctx.target_domain;
  plan.method = method;
  plan.beta = ctx.budget.beta;
  plan.seed = ctx.rng_seed;
  plan.input_hash = input_hash(ctx, method, validation);
  return plan;
}

inline void check_total(const SelectionPlan& plan) {
  require(plan.total() == plan.beta, ErrorKind::ContractViolation,
          "plan total " + std::to_string(plan.total()) + " differs from budget " + std::to_string(plan.beta));
}

inline const std::vector<SampleId>& domain_train(const SamplerContext& ctx) {
  require(ctx.pool.has_domain(ctx.target_domain), ErrorKind::EmptyDomain,
          "domain '" + ctx.target_domain + "' has no records");
  const auto& ids = ctx.pool.domain(ctx.target_domain).train;
  require(!ids.empty(), ErrorKind::EmptyDomain, "domain '" + ctx.target_domain + "' has no train samples");
  return ids;
}

// Out-of-domain train ids, ascending.
inline std::vector<SampleId> out_of_domain(const SamplerContext& ctx) {
  std::vector<SampleId> out;
  for (auto id : ctx.pool.train_ids())
    if (ctx.pool.at(id).domain != ctx.target_domain) out.push_back(id);
  return out;
}

// Selection vectors for `ids` as rows of a dense buffer, normalized when asked.
struct VectorSet {
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> operator[](std::size_t i) const { return {values.data() + i * dim, dim}; }
};

inline VectorSet gather(const EmbeddingMatrix& m, std::span<const SampleId> ids, bool normalize) {
  VectorSet vs;
  vs.dim = m.dim();
  vs.values.reserve(ids.size() * m.dim());
  for (auto id : ids) {
    auto r = m.index_of(id);
    require(r.has_value(), ErrorKind::UnknownSampleId,
            "no embedding row for SampleId " + std::to_string(id.value));
    auto v = m.row(*r);
    if (normalize) {
      auto n = l2_normalized(v);
      vs.values.insert(vs.values.end(), n.begin(), n.end());
    } else {
      vs.values.insert(vs.values.end(), v.begin(), v.end());
    }
  }
  return vs;
}

inline Centroid centroid_of(const VectorSet& vs, std::size_t n) {
  std::vector<std::span<const double>> views;
  views.reserve(n);
  for (std::size_t i = 0; i < n; ++i) views.push_back(vs[i]);
  return beacon::centroid_of(std::span<const std::span<const double>>(views));
}

inline const EmbeddingMatrix& embeddings(const SamplerContext& ctx, Method m) {
  require(ctx.embeddings != nullptr, ErrorKind::ContractViolation,
          std::string(to_string(m)) + " requires pair embeddings");
  return *ctx.embeddings;
}

// Indices of the k best scores, descending; ties by ascending id (ids sorted).
inline std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

struct Pick {
  SampleId id;
  double score;
};

// Shared budget structure of NN, TVDF and KCG: all of n_i first, then the k
// best out-of-domain picks. When the out pool is smaller than k it is taken
// whole and the in-domain part is oversampled to restore the budget.
template <typename SelectOut>
SelectionPlan distribution_aware(const SamplerContext& ctx, Method method, SelectOut&& select_out,
                                 const EmbeddingMatrix* validation = nullptr) {
  const auto& in = domain_train(ctx);
  const std::size_t beta = ctx.budget.beta;
  SelectionPlan plan = empty_plan(ctx, method, validation);
  Rng rng(ctx.rng_seed);
  if (in.size() >= beta) {
    for (auto id : random_select(in, beta, rng))
      plan.entries.push_back({id, 1, Source::in_domain, method, std::nullopt});
    check_total(plan);
    return plan;
  }
  const auto out = out_of_domain(ctx);
  const std::size_t k = std::min(beta - in.size(), out.size());
  std::vector<Pick> picks = k == 0 ? std::vector<Pick>{} : select_out(in, out, k);
  const std::size_t in_total = beta - picks.size();
  for (const auto& [id, m] : oversample(in, in_total, rng))
    plan.entries.push_back({id, m, Source::in_domain, method, std::nullopt});
  for (const auto& p : picks) plan.entries.push_back({p.id, 1, Source::out_of_domain, method, p.score});
  check_total(plan);
  return plan;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Random draw of β train samples regardless of domain.
inline SelectionPlan sample_gen(const SamplerContext& ctx) {
  const auto& all = ctx.pool.train_ids();
  require(!all.empty(), ErrorKind::EmptyDomain, "pool has no train samples");
  SelectionPlan plan = detail::empty_plan(ctx, Method::GEN);
  Rng rng(ctx.rng_seed);
  for (const auto& [id, m] : detail::draw_budget(all, ctx.budget.beta, rng)) {
    const auto src = ctx.pool.at(id).domain == ctx.target_domain ? Source::in_domain : Source::out_of_domain;
    plan.entries.push_back({id, m, src, Method::GEN, std::nullopt});
  }
  detail::check_total(plan);
  return plan;
}

/// In-domain only; oversampled with the floor/mod structure when |n_i| ≤ β.
inline SelectionPlan sample_spec(const SamplerContext& ctx) {
  const auto& in = detail::domain_train(ctx);
  SelectionPlan plan = detail::empty_plan(ctx, Method::SPEC);
  Rng rng(ctx.rng_seed);
  for (const auto& [id, m] : detail::draw_budget(in, ctx.budget.beta, rng))
    plan.entries.push_back({id, m, Source::in_domain, Method::SPEC, std::nullopt});
  detail::check_total(plan);
  return plan;
}

/// Out-of-domain pairs closest (cosine) to the in-domain centroid.
inline SelectionPlan sample_nn(const SamplerContext& ctx) {
  const auto& m = detail::embeddings(ctx, Method::NN);
  return detail::distribution_aware(ctx, Method::NN, [&](const auto& in, const auto& out, std::size_t k) {
    const auto in_vecs = detail::gather(m, in, ctx.normalize);
    const auto out_vecs = detail::gather(m, out, ctx.normalize);
    const Centroid mu = detail::centroid_of(in_vecs, in.size());
    std::vector<double> scores(out.size());
    parallel_for(out.size(), ctx.jobs, [&](std::size_t i) { scores[i] = cosine(mu.vector, out_vecs[i]); });
    std::vector<detail::Pick> picks;
    for (auto i : detail::top_k(scores, k)) picks.push_back({out[i], scores[i]});
    return picks;
  });
}

/// Out-of-domain pairs that most increase the cosine between the updated
/// train centroid and the validation centroid. Scores are computed once
/// against the original centroid unless ctx.adaptive_tvdf is set.
inline SelectionPlan sample_tvdf(const SamplerContext& ctx, const EmbeddingMatrix& validation_embeddings) {
  const auto& m = detail::embeddings(ctx, Method::TVDF);
  detail::domain_train(ctx);
  const auto& val_ids = ctx.pool.domain(ctx.target_domain).validation;
  require(!val_ids.empty(), ErrorKind::MissingValidation,
          "TVDF needs validation samples for domain '" + ctx.target_domain + "'");
  return detail::distribution_aware(
      ctx, Method::TVDF,
      [&](const auto& in, const auto& out, std::size_t k) {
        const auto in_vecs = detail::gather(m, in, ctx.normalize);
        const auto out_vecs = detail::gather(m, out, ctx.normalize);
        const auto val_vecs = detail::gather(validation_embeddings, val_ids, ctx.normalize);
        Centroid mu = detail::centroid_of(in_vecs, in.size());
        const Centroid mu_val = detail::centroid_of(val_vecs, val_ids.size());
        std::vector<double> scores(out.size());
        auto score_all = [&] {
          const double base = cosine(mu.vector, mu_val.vector);
          parallel_for(out.size(), ctx.jobs, [&](std::size_t i) {
            scores[i] = cosine(updated_centroid(mu, out_vecs[i]), mu_val.vector) - base;
          });
        };
        std::vector<detail::Pick> picks;
        if (!ctx.adaptive_tvdf) {
          score_all();
          for (auto i : detail::top_k(scores, k)) picks.push_back({out[i], scores[i]});
          return picks;
        }
        std::vector<bool> taken(out.size(), false);
        for (std::size_t round = 0; round < k; ++round) {
          score_all();
          std::size_t best = out.size();
          for (std::size_t i = 0; i < out.size(); ++i)
            if (!taken[i] && (best == out.size() || scores[i] > scores[best])) best = i;
          taken[best] = true;
          picks.push_back({out[best], scores[best]});
          mu.vector = updated_centroid(mu, out_vecs[best]);
          mu.count += 1;
        }
        return picks;
      },
      &validation_embeddings);
}

/// Farthest-first traversal seeded with the in-domain vectors as centers,
/// under d(x, c) = 1 − cos(x, c). Each pick's score is its distance to the
/// nearest center at the time it was chosen.
inline SelectionPlan sample_kcg(const SamplerContext& ctx) {
  const auto& m = detail::embeddings(ctx, Method::KCG);
  return detail::distribution_aware(ctx, Method::KCG, [&](const auto& in, const auto& out, std::size_t k) {
    // Cosine only needs directions; unit rows make each distance one dot product.
    const auto centers = detail::gather(m, in, true);
    const auto cands = detail::gather(m, out, true);
    // A zero row stays zero after normalization, so its distance is 1 (cosine 0).
    auto distance = [](std::span<const double> a, std::span<const double> b) {
      return 1.0 - std::clamp(dot(a, b), -1.0, 1.0);
    };
    std::vector<double> min_dist(out.size());
    parallel_for(out.size(), ctx.jobs, [&](std::size_t i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < in.size(); ++c) best = std::min(best, distance(cands[i], centers[c]));
      min_dist[i] = best;
    });
    std::vector<bool> taken(out.size(), false);
    std::vector<detail::Pick> picks;
    picks.reserve(k);
    for (std::size_t round = 0; round < k; ++round) {
      std::size_t best = out.size();
      for (std::size_t i = 0; i < out.size(); ++i)
        if (!taken[i] && (best == out.size() || min_dist[i] > min_dist[best])) best = i;
      taken[best] = true;
      picks.push_back({out[best], min_dist[best]});
      const auto newest = cands[best];
      parallel_for(out.size(), ctx.jobs, [&](std::size_t i) {
        if (!taken[i]) min_dist[i] = std::min(min_dist[i], distance(cands[i], newest));
      });
    }
    return picks;
  });
}

/// Dispatch by method. TVDF uses `validation` when given, else the context's
/// embeddings (which then must cover the validation split).
inline SelectionPlan select(const SamplerContext& ctx, Method method, const EmbeddingMatrix* validation = nullptr) {
  switch (method) {
    case Method::GEN: return sample_gen(ctx);
    case Method::SPEC: return sample_spec(ctx);
    case Method::NN: return sample_nn(ctx);
    case Method::TVDF: return sample_tvdf(ctx, validation != nullptr ? *validation : detail::embeddings(ctx, method));
    case Method::KCG: return sample_kcg(ctx);
  }
  fail(ErrorKind::ContractViolation, "unknown method");
}

// ---------------------------------------------------------------------------
// Plan files: one header line, then one line per entry.

inline nlohmann::ordered_json plan_header_json(const SelectionPlan& plan) {
  nlohmann::ordered_json h;
  h["target_domain"] = plan.target_domain;
  h["beta"] = plan.beta;
  h["method"] = std::string(to_string(plan.method));
  h["seed"] = plan.seed;
  h["input_hash"] = plan.input_hash;
  h["total"] = plan.total();
  return h;
}

inline nlohmann::ordered_json entry_json(const PlanEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id.value;
  j["multiplicity"] = e.multiplicity;
  j["source"] = std::string(to_string(e.source));
  j["method"] = std::string(to_string(e.method));
  j["score"] = e.score ? nlohmann::ordered_json(*e.score) : nlohmann::ordered_json(nullptr);
  return j;
}

inline void write_plan(const SelectionPlan& plan, std::ostream& out) {
  out << plan_header_json(plan).dump() << '\n';
  for (const auto& e : plan.entries) out << entry_json(e).dump() << '\n';
}

inline std::string plan_text(const SelectionPlan& plan) {
  std::ostringstream ss;
  write_plan(plan, ss);
  return ss.str();
}

inline std::string plan_hash(const SelectionPlan& plan) {
  const auto text = plan_text(plan);
  return Fnv1a{}.bytes(text.data(), text.size()).hex();
}

inline SelectionPlan plan_from_json(const nlohmann::json& header, const std::vector<nlohmann::json>& entries) {
  SelectionPlan plan;
  plan.target_domain = header.at("target_domain").get<std::string>();
  plan.beta = header.at("beta").get<std::size_t>();
  auto method = parse_method(header.at("method").get<std::string>());
  require(method.has_value(), ErrorKind::IngestError, "plan header has unknown method");
  plan.method = *method;
  plan.seed = header.at("seed").get<std::uint64_t>();
  plan.input_hash = header.at("input_hash").get<std::string>();
  for (const auto& j : entries) {
    PlanEntry e;
    e.id = SampleId{j.at("id").get<std::uint64_t>()};
    e.multiplicity = j.at("multiplicity").get<std::size_t>();
    e.source = j.at("source").get<std::string>() == "in_domain" ? Source::in_domain : Source::out_of_domain;
    auto m = parse_method(j.at("method").get<std::string>());
    require(m.has_value(), ErrorKind::IngestError, "plan entry has unknown method");
    e.method = *m;
    if (!j.at("score").is_null()) e.score = j.at("score").get<double>();
    plan.entries.push_back(e);
  }
  return plan;
}

inline SelectionPlan read_plan(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::IngestError, "empty plan file");
  const auto header = nlohmann::json::parse(line);
  std::vector<nlohmann::json> entries;
  while (std::getline(in, line))
    if (!line.empty()) entries.push_back(nlohmann::json::parse(line));
  return plan_from_json(header, entries);
}

}  // namespace beacon::samplers
