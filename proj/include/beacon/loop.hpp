#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "beacon/error.hpp"
#include "beacon/hash.hpp"
#include "beacon/ingest.hpp"
#include "beacon/model.hpp"
#include "beacon/samplers.hpp"

namespace beacon::loop {

struct LoopConfig {
  DomainId target_domain;
  std::size_t total_rounds = 3;
  std::vector<Method> methods{Method::KCG, Method::TVDF};
  Budget budget{1};
  std::uint64_t seed = 0;
  bool normalize = false;
  unsigned jobs = 1;
};

/// Embeddings produced at a checkpoint. Pairwise vectors are always present;
/// singleton (per-entity) vectors are optional.
struct RefreshedEmbeddings {
  EmbeddingMatrix pairwise;
  std::optional<EmbeddingMatrix> singleton;
};

/// The external training side of the loop. Calls are made one at a time.
class TrainerPort {
 public:
  virtual ~TrainerPort() = default;
  /// Trains on `plan` for one phase and returns an opaque checkpoint token.
  virtual std::string train_step(const SelectionPlan& plan, std::size_t round) = 0;
  /// Embeddings regenerated from the model state at `checkpoint`.
  virtual RefreshedEmbeddings refresh_embeddings(const std::string& checkpoint) = 0;
};

/// Trainer whose embeddings never change.
class StaticTrainer : public TrainerPort {
 public:
  explicit StaticTrainer(RefreshedEmbeddings embeddings) : embeddings_(std::move(embeddings)) {}

  std::string train_step(const SelectionPlan& plan, std::size_t round) override {
    return "static/" + std::string(to_string(plan.method)) + "/" + std::to_string(round);
  }
  RefreshedEmbeddings refresh_embeddings(const std::string&) override { return embeddings_; }

 private:
  RefreshedEmbeddings embeddings_;
};

struct MethodRound {
  Method method = Method::KCG;
  SelectionPlan plan;
  std::string checkpoint;
  std::string embedding_mode;  // "pairwise" or "singleton-mean"
  std::string embedding_hash;
};

struct RoundRecord {
  std::size_t round = 1;
  std::vector<MethodRound> methods;
};

struct LoopResult {
  std::vector<RoundRecord> rounds;

  /// Plan of `method` in the last round.
  const SelectionPlan& final_plan(Method method) const {
    for (const auto& m : rounds.back().methods)
      if (m.method == method) return m.plan;
    fail(ErrorKind::ContractViolation, "method not part of the loop");
  }
};

namespace detail {

inline std::string describe_missing(const std::vector<SampleId>& missing) {
  std::string s;
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
    if (i) s += ',';
    s += std::to_string(missing[i].value);
  }
  if (missing.size() > 10) s += ",... (" + std::to_string(missing.size()) + " total)";
  return s;
}

}  // namespace detail

/// Per-pair selection vectors from singleton entity vectors: the mean of the
/// left and right entity rows. Train and validation pairs must be covered;
/// test pairs are included when both entities are present.
inline EmbeddingMatrix pair_vectors_from_singletons(const CandidatePool& pool, const EmbeddingMatrix& singleton) {
  std::vector<SampleId> ids;
  std::vector<double> values;
  std::vector<SampleId> missing;
  const std::size_t d = singleton.dim();
  for (const auto& r : pool.records()) {
    auto l = singleton.index_of(ingest::entity_key(r.left));
    auto rr = singleton.index_of(ingest::entity_key(r.right));
    if (!l || !rr) {
      if (r.split != Split::test) missing.push_back(r.id);
      continue;
    }
    ids.push_back(r.id);
    auto a = singleton.row(*l);
    auto b = singleton.row(*rr);
    for (std::size_t i = 0; i < d; ++i) values.push_back(0.5 * (a[i] + b[i]));
  }
  require(missing.empty(), ErrorKind::ProtocolViolation,
          "singleton embeddings miss entities of SampleIds " + detail::describe_missing(missing));
  return EmbeddingMatrix(d, std::move(ids), std::move(values), EmbeddingKind::pairwise);
}

inline void check_coverage(const CandidatePool& pool, const EmbeddingMatrix& pairwise) {
  std::vector<SampleId> missing;
  for (const auto& r : pool.records())
    if (r.split != Split::test && !pairwise.contains(r.id)) missing.push_back(r.id);
  require(missing.empty(), ErrorKind::ProtocolViolation,
          "refreshed embeddings miss SampleIds " + detail::describe_missing(missing));
}

struct SelectionVectors {
  EmbeddingMatrix vectors;
  std::string mode;
};

/// Singleton-derived pair vectors when singleton embeddings are supplied,
/// pairwise vectors otherwise.
inline SelectionVectors selection_vectors(const CandidatePool& pool, const RefreshedEmbeddings& e) {
  check_coverage(pool, e.pairwise);
  if (e.singleton) return {pair_vectors_from_singletons(pool, *e.singleton), "singleton-mean"};
  return {e.pairwise, "pairwise"};
}

inline void validate(const LoopConfig& c) {
  require(c.total_rounds >= 1, ErrorKind::ConfigError, "total_rounds must be at least 1");
  require(!c.methods.empty(), ErrorKind::ConfigError, "loop needs at least one method");
  for (auto m : c.methods)
    require(m == Method::NN || m == Method::TVDF || m == Method::KCG, ErrorKind::ConfigError,
            "loop methods must be NN, TVDF or KCG");
}

/// One selection for one method over the given embeddings; what every round
/// of the loop does.
inline MethodRound select_once(const CandidatePool& pool, const LoopConfig& config, Method method,
                               const RefreshedEmbeddings& embeddings) {
  auto sel = selection_vectors(pool, embeddings);
  samplers::SamplerContext ctx{pool, config.target_domain, config.budget, config.seed};
  ctx.embeddings = &sel.vectors;
  ctx.normalize = config.normalize;
  ctx.jobs = config.jobs;
  MethodRound mr;
  mr.method = method;
  mr.plan = samplers::select(ctx, method, &sel.vectors);
  mr.embedding_mode = sel.mode;
  mr.embedding_hash = Fnv1a::to_hex(sel.vectors.fingerprint());
  return mr;
}

/// Alternates selection and training. Each method keeps its own checkpoint
/// chain: round r refreshes from that method's round r−1 checkpoint and
/// re-selects from scratch with the same seed.
inline LoopResult run_loop(const CandidatePool& pool, const LoopConfig& config, const RefreshedEmbeddings& initial,
                           TrainerPort& trainer) {
  validate(config);
  LoopResult result;
  std::vector<std::string> checkpoints(config.methods.size());
  for (std::size_t round = 1; round <= config.total_rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    for (std::size_t q = 0; q < config.methods.size(); ++q) {
      const Method method = config.methods[q];
      try {
        MethodRound mr = round == 1 ? select_once(pool, config, method, initial)
                                    : select_once(pool, config, method, trainer.refresh_embeddings(checkpoints[q]));
        checkpoints[q] = trainer.train_step(mr.plan, round);
        mr.checkpoint = checkpoints[q];
        rec.methods.push_back(std::move(mr));
      } catch (const Error& e) {
        throw Error(e.kind(), "round " + std::to_string(round) + ", " + std::string(to_string(method)) + ": " +
                                  e.what());
      }
    }
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Audit trail: a header line, then one line per (round, method).

inline nlohmann::ordered_json plan_json(const SelectionPlan& plan) {
  nlohmann::ordered_json j;
  j["header"] = samplers::plan_header_json(plan);
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : plan.entries) j["entries"].push_back(samplers::entry_json(e));
  return j;
}

inline nlohmann::ordered_json config_json(const LoopConfig& c) {
  nlohmann::ordered_json j;
  j["target_domain"] = c.target_domain;
  j["total_rounds"] = c.total_rounds;
  j["methods"] = nlohmann::ordered_json::array();
  for (auto m : c.methods) j["methods"].push_back(std::string(to_string(m)));
  j["budget"] = c.budget.beta;
  j["seed"] = c.seed;
  j["normalize"] = c.normalize;
  return j;
}

inline LoopConfig config_from_json(const nlohmann::json& j) {
  LoopConfig c;
  c.target_domain = j.at("target_domain").get<std::string>();
  c.total_rounds = j.at("total_rounds").get<std::size_t>();
  c.methods.clear();
  for (const auto& m : j.at("methods")) {
    auto parsed = parse_method(m.get<std::string>());
    require(parsed.has_value(), ErrorKind::ConfigError, "unknown method in audit config");
    c.methods.push_back(*parsed);
  }
  c.budget = Budget(j.at("budget").get<std::size_t>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.normalize = j.value("normalize", false);
  return c;
}

/// `header` carries whatever the caller needs to rebuild the run (input
/// paths, their hashes, trainer settings); the loop config is added to it.
inline void write_audit(const LoopResult& result, const LoopConfig& config, nlohmann::ordered_json header,
                        std::ostream& out) {
  header["type"] = "header";
  header["config"] = config_json(config);
  out << header.dump() << '\n';
  for (const auto& rec : result.rounds) {
    for (const auto& m : rec.methods) {
      nlohmann::ordered_json j;
      j["type"] = "round";
      j["round"] = rec.round;
      j["method"] = std::string(to_string(m.method));
      j["embedding_mode"] = m.embedding_mode;
      j["embedding_hash"] = m.embedding_hash;
      j["checkpoint"] = m.checkpoint;
      j["plan_hash"] = samplers::plan_hash(m.plan);
      j["plan"] = plan_json(m.plan);
      out << j.dump() << '\n';
    }
  }
}

struct AuditEntry {
  std::size_t round = 0;
  Method method = Method::KCG;
  std::string embedding_mode;
  std::string embedding_hash;
  std::string checkpoint;
  std::string plan_hash;
  SelectionPlan plan;
};

struct Audit {
  nlohmann::json header;
  LoopConfig config;
  std::vector<AuditEntry> entries;
};

inline Audit read_audit(std::istream& in) {
  Audit a;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::IngestError, "empty audit trail");
  a.header = nlohmann::json::parse(line);
  require(a.header.value("type", "") == "header", ErrorKind::IngestError, "audit trail must start with a header");
  a.config = config_from_json(a.header.at("config"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    AuditEntry e;
    e.round = j.at("round").get<std::size_t>();
    auto m = parse_method(j.at("method").get<std::string>());
    require(m.has_value(), ErrorKind::IngestError, "unknown method in audit trail");
    e.method = *m;
    e.embedding_mode = j.at("embedding_mode").get<std::string>();
    e.embedding_hash = j.at("embedding_hash").get<std::string>();
    e.checkpoint = j.at("checkpoint").get<std::string>();
    e.plan_hash = j.at("plan_hash").get<std::string>();
    const auto& p = j.at("plan");
    std::vector<nlohmann::json> entries(p.at("entries").begin(), p.at("entries").end());
    e.plan = samplers::plan_from_json(p.at("header"), entries);
    a.entries.push_back(std::move(e));
  }
  return a;
}

/// Compares a re-executed loop against a recorded audit; returns one line per
/// difference (empty when the replay is exact).
inline std::vector<std::string> compare(const Audit& audit, const LoopResult& replayed) {
  std::vector<std::string> diffs;
  std::size_t i = 0;
  for (const auto& rec : replayed.rounds) {
    for (const auto& m : rec.methods) {
      const std::string where = "round " + std::to_string(rec.round) + " " + std::string(to_string(m.method));
      if (i >= audit.entries.size()) {
        diffs.push_back(where + ": not in audit trail");
        continue;
      }
      const auto& e = audit.entries[i++];
      if (e.round != rec.round || e.method != m.method) diffs.push_back(where + ": order differs from audit trail");
      if (e.embedding_hash != m.embedding_hash) diffs.push_back(where + ": embedding hash differs");
      if (e.checkpoint != m.checkpoint) diffs.push_back(where + ": checkpoint differs");
      if (e.plan_hash != samplers::plan_hash(m.plan)) diffs.push_back(where + ": plan differs");
    }
  }
  if (i < audit.entries.size()) diffs.push_back("audit trail has entries the replay did not produce");
  return diffs;
}

}  // namespace beacon::loop
