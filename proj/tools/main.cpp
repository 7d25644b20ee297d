// beacon: command-line front end for partitioning, selection, the dynamic
// loop, voting, evaluation, benchmarking and replay.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"

#include "beacon/beacon.hpp"

namespace fs = std::filesystem;
using namespace beacon;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned jobs = default_jobs();
};

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("BEACON_SEED"); env != nullptr && *env != '\0') {
    std::size_t pos = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(env, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    require(pos == std::string(env).size(), ErrorKind::ConfigError,
            std::string("BEACON_SEED is not an unsigned integer: '") + env + "'");
    return v;
  }
  return 0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::IoError, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& text) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::IoError, "cannot write " + path);
  out << text;
  require(out.good(), ErrorKind::IoError, "write failed for " + path);
}

ojson file_ref(const std::string& path) {
  ojson j;
  j["path"] = path;
  j["hash"] = ingest::file_hash(path);
  return j;
}

/// Run manifest: the command, its effective config, input hashes and output
/// hashes. No timestamps, so identical runs give identical manifests.
class Manifest {
 public:
  explicit Manifest(std::string command) { j_["command"] = std::move(command); }

  ojson& config() { return j_["config"]; }
  void input(const std::string& role, const std::string& path) { j_["inputs"][role] = file_ref(path); }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& path) {
    j_["outputs"] = ojson::array();
    for (const auto& p : outputs_) j_["outputs"].push_back(file_ref(p));
    write_file(path, j_.dump(2) + "\n");
  }

 private:
  ojson j_ = ojson::object();
  std::vector<std::string> outputs_;
};

std::string manifest_path_for(const std::string& out, const std::string& command, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!out.empty()) return out + ".manifest.json";
  return command + ".manifest.json";
}

/// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text, Manifest& m) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  write_file(path, text);
  m.output(path);
}

// ---------------------------------------------------------------------------
// Pool and embedding inputs

struct PoolArgs {
  std::string path;
  std::string domain_attribute = "domain";
  std::size_t min_domain_size = 100;

  void add(CLI::App* app) {
    app->add_option("--pool", path, "Pool file (JSON-Lines)")->required();
    app->add_option("--domain-attribute", domain_attribute, "Attribute naming the domain")->capture_default_str();
    app->add_option("--min-domain-size", min_domain_size, "Drop domains with fewer labeled samples")
        ->capture_default_str();
  }

  ingest::PartitionConfig partition() const { return {domain_attribute, min_domain_size, true}; }

  /// The partitioned pool plus every labeled row of the file. Embeddings are
  /// validated against the latter since producers embed the whole file,
  /// including domains that fall under the size threshold.
  std::pair<CandidatePool, CandidatePool> load() const {
    const auto rows = ingest::read_pool_rows(path);
    auto all = partition();
    all.min_domain_size = 1;
    return {ingest::partition(rows, partition()), ingest::partition(rows, all)};
  }

  ojson json() const {
    ojson j;
    j["domain_attribute"] = domain_attribute;
    j["min_domain_size"] = min_domain_size;
    return j;
  }
};

struct EmbeddingArgs {
  std::string manifest;
  std::string matrix;

  bool given() const { return !manifest.empty(); }

  void check() const {
    if (manifest.empty() != matrix.empty())
      throw CLI::ValidationError("--embeddings and --matrix must be given together");
  }
};

void add_embedding_args(CLI::App* app, EmbeddingArgs& e, const std::string& prefix, const std::string& what) {
  app->add_option("--" + prefix + "embeddings", e.manifest, what + " embedding manifest (JSON-Lines)");
  app->add_option("--" + prefix + "matrix", e.matrix, what + " embedding matrix (f32le)");
}

/// Exact match first, then a unique case-insensitive match.
DomainId resolve_domain(const CandidatePool& pool, const std::string& name) {
  if (pool.has_domain(name)) return name;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  std::vector<DomainId> hits;
  for (const auto& d : pool.domains())
    if (lower(d) == lower(name)) hits.push_back(d);
  require(hits.size() == 1, ErrorKind::EmptyDomain,
          hits.empty() ? "pool has no domain '" + name + "'" : "domain '" + name + "' is ambiguous");
  return hits.front();
}

ojson embedding_ref(const EmbeddingArgs& e) {
  if (!e.given()) return nullptr;
  ojson j;
  j["manifest"] = file_ref(e.manifest);
  j["matrix"] = file_ref(e.matrix);
  return j;
}

// ---------------------------------------------------------------------------
// Trainers for the dynamic loop

/// Reads precomputed checkpoint embeddings from a directory: after training
/// METHOD in round r the token is "METHOD-rR" and its embeddings live in
/// TOKEN.manifest.jsonl / TOKEN.f32 (plus TOKEN.singleton.manifest.jsonl /
/// TOKEN.singleton.f32 when present).
class DirectoryTrainer : public loop::TrainerPort {
 public:
  DirectoryTrainer(std::string dir, const CandidatePool& pool) : dir_(std::move(dir)), pool_(pool) {}

  std::string train_step(const SelectionPlan& plan, std::size_t round) override {
    return std::string(to_string(plan.method)) + "-r" + std::to_string(round);
  }

  loop::RefreshedEmbeddings refresh_embeddings(const std::string& checkpoint) override {
    const auto base = (fs::path(dir_) / checkpoint).string();
    require(fs::exists(base + ".manifest.jsonl"), ErrorKind::ProtocolViolation,
            "trainer directory has no embeddings for checkpoint '" + checkpoint + "'");
    loop::RefreshedEmbeddings out{ingest::load_embeddings(base + ".manifest.jsonl", base + ".f32", &pool_),
                                  std::nullopt};
    if (fs::exists(base + ".singleton.manifest.jsonl"))
      out.singleton = ingest::load_embeddings(base + ".singleton.manifest.jsonl", base + ".singleton.f32");
    return out;
  }

 private:
  std::string dir_;
  const CandidatePool& pool_;
};

struct TrainerArgs {
  std::string kind = "static";
  double rate = 0.5;
  std::string dir;

  void add(CLI::App* app) {
    app->add_option("--trainer", kind, "static, sharpen or dir")
        ->check(CLI::IsMember({"static", "sharpen", "dir"}))
        ->capture_default_str();
    app->add_option("--sharpen-rate", rate, "Per-round contraction for --trainer sharpen")->capture_default_str();
    app->add_option("--trainer-dir", dir, "Checkpoint embeddings for --trainer dir");
  }

  ojson json() const {
    ojson j;
    j["kind"] = kind;
    if (kind == "sharpen") j["rate"] = rate;
    if (kind == "dir") j["dir"] = dir;
    return j;
  }

  static TrainerArgs from_json(const nlohmann::json& j) {
    TrainerArgs t;
    t.kind = j.at("kind").get<std::string>();
    t.rate = j.value("rate", 0.5);
    t.dir = j.value("dir", "");
    return t;
  }

  std::unique_ptr<loop::TrainerPort> make(const CandidatePool& pool, const CandidatePool& file_pool,
                                          const loop::RefreshedEmbeddings& initial) const {
    if (kind == "sharpen") return std::make_unique<synth::SharpeningTrainer>(pool, initial, rate);
    if (kind == "dir") {
      require(!dir.empty(), ErrorKind::ConfigError, "--trainer dir needs --trainer-dir");
      return std::make_unique<DirectoryTrainer>(dir, file_pool);
    }
    return std::make_unique<loop::StaticTrainer>(initial);
  }
};

// ---------------------------------------------------------------------------
// Loop runs (shared by `loop`, `select --method beacon` and `replay`)

struct LoopInputs {
  std::string command;
  PoolArgs pool;
  EmbeddingArgs pairwise;
  EmbeddingArgs singleton;
  TrainerArgs trainer;
  loop::LoopConfig config;
};

std::string round_plan_name(std::size_t round, Method m) {
  return "round" + std::to_string(round) + "." + std::string(to_string(m)) + ".plan.jsonl";
}

std::string final_plan_name(Method m) { return std::string(to_string(m)) + ".plan.jsonl"; }

struct LoopRun {
  loop::LoopResult result;
  ojson header;
};

LoopRun execute_loop(const LoopInputs& in) {
  const auto [pool, file_pool] = in.pool.load();
  auto config = in.config;
  config.target_domain = resolve_domain(pool, config.target_domain);
  require(in.pairwise.given(), ErrorKind::ConfigError, "the loop needs --embeddings and --matrix");
  loop::RefreshedEmbeddings initial{ingest::load_embeddings(in.pairwise.manifest, in.pairwise.matrix, &file_pool),
                                    std::nullopt};
  if (in.singleton.given())
    initial.singleton = ingest::load_embeddings(in.singleton.manifest, in.singleton.matrix);
  auto trainer = in.trainer.make(pool, file_pool, initial);

  LoopRun run;
  run.result = loop::run_loop(pool, config, initial, *trainer);
  run.header["command"] = in.command;
  run.header["pool"] = file_ref(in.pool.path);
  run.header["partition"] = in.pool.json();
  run.header["embeddings"] = embedding_ref(in.pairwise);
  run.header["singleton_embeddings"] = embedding_ref(in.singleton);
  run.header["trainer"] = in.trainer.json();
  return run;
}

/// Plan files keyed by file name: one per (round, method) and the final plan
/// per method.
std::vector<std::pair<std::string, std::string>> loop_plan_files(const loop::LoopResult& r) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& rec : r.rounds)
    for (const auto& m : rec.methods) files.emplace_back(round_plan_name(rec.round, m.method), samplers::plan_text(m.plan));
  for (const auto& m : r.rounds.back().methods) files.emplace_back(final_plan_name(m.method), samplers::plan_text(m.plan));
  return files;
}

void write_loop_outputs(const LoopRun& run, const loop::LoopConfig& config, const std::string& dir, Manifest& m) {
  fs::create_directories(dir);
  for (const auto& [name, text] : loop_plan_files(run.result)) {
    const auto path = (fs::path(dir) / name).string();
    write_file(path, text);
    m.output(path);
  }
  std::ostringstream audit;
  auto cfg = config;
  loop::write_audit(run.result, cfg, run.header, audit);
  const auto audit_path = (fs::path(dir) / "audit.jsonl").string();
  write_file(audit_path, audit.str());
  m.output(audit_path);
}

void loop_manifest(Manifest& m, const LoopInputs& in, const Common& c) {
  m.input("pool", in.pool.path);
  if (in.pairwise.given()) {
    m.input("embeddings", in.pairwise.manifest);
    m.input("matrix", in.pairwise.matrix);
  }
  if (in.singleton.given()) {
    m.input("singleton_embeddings", in.singleton.manifest);
    m.input("singleton_matrix", in.singleton.matrix);
  }
  auto& cfg = m.config();
  cfg = loop::config_json(in.config);
  cfg["partition"] = in.pool.json();
  cfg["trainer"] = in.trainer.json();
  cfg["jobs"] = c.jobs;
}

// ---------------------------------------------------------------------------
// Subcommands

struct PartitionCmd {
  PoolArgs pool;
  std::string out, manifest;

  int run(const Common&) {
    const auto p = ingest::load_pool(pool.path, pool.partition());
    Manifest m("partition");
    m.input("pool", pool.path);
    m.config() = pool.json();
    std::ostringstream ss;
    ingest::write_pool(p, ss);
    emit(out, ss.str(), m);
    m.write(manifest_path_for(out, "partition", manifest));
    return 0;
  }
};

struct StatsCmd {
  PoolArgs pool;
  std::string out, manifest;

  int run(const Common&) {
    const auto p = ingest::load_pool(pool.path, pool.partition());
    Manifest m("stats");
    m.input("pool", pool.path);
    m.config() = pool.json();
    std::ostringstream ss;
    ingest::write_stats_csv(ingest::stats_report(p), ss);
    emit(out, ss.str(), m);
    m.write(manifest_path_for(out, "stats", manifest));
    return 0;
  }
};

struct SelectCmd {
  PoolArgs pool;
  EmbeddingArgs pairwise, singleton;
  TrainerArgs trainer;
  std::string method, target, out, manifest;
  std::size_t budget = 0;
  std::size_t rounds = 3;
  bool normalize = false;
  bool adaptive = false;

  int run(const Common& c) {
    pairwise.check();
    singleton.check();
    const std::uint64_t seed = resolve_seed(c);
    std::string upper = method;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));

    if (upper == "BEACON") {
      require(!out.empty(), ErrorKind::ConfigError, "--method beacon writes a directory; give --out");
      LoopInputs in{"select", pool, pairwise, singleton, trainer, {}};
      in.config.target_domain = target;
      in.config.total_rounds = rounds;
      in.config.budget = Budget(budget);
      in.config.seed = seed;
      in.config.normalize = normalize;
      in.config.jobs = c.jobs;
      Manifest m("select");
      loop_manifest(m, in, c);
      m.config()["method"] = "BEACON";
      auto run = execute_loop(in);
      write_loop_outputs(run, in.config, out, m);
      m.write(manifest.empty() ? (fs::path(out) / "manifest.json").string() : manifest);
      return 0;
    }

    auto m_opt = parse_method(upper);
    require(m_opt.has_value(), ErrorKind::ConfigError, "unknown method '" + method + "'");
    const auto [p, file_pool] = pool.load();
    std::optional<EmbeddingMatrix> emb;
    if (pairwise.given()) {
      emb = ingest::load_embeddings(pairwise.manifest, pairwise.matrix, &file_pool);
    } else if (singleton.given()) {
      emb = loop::pair_vectors_from_singletons(p, ingest::load_embeddings(singleton.manifest, singleton.matrix));
    }
    samplers::SamplerContext ctx{p, resolve_domain(p, target), Budget(budget), seed};
    ctx.embeddings = emb ? &*emb : nullptr;
    ctx.normalize = normalize;
    ctx.adaptive_tvdf = adaptive;
    ctx.jobs = c.jobs;
    const auto plan = samplers::select(ctx, *m_opt, ctx.embeddings);

    Manifest m("select");
    m.input("pool", pool.path);
    if (pairwise.given()) {
      m.input("embeddings", pairwise.manifest);
      m.input("matrix", pairwise.matrix);
    }
    if (singleton.given()) {
      m.input("singleton_embeddings", singleton.manifest);
      m.input("singleton_matrix", singleton.matrix);
    }
    auto& cfg = m.config();
    cfg["method"] = std::string(to_string(*m_opt));
    cfg["target_domain"] = ctx.target_domain;
    cfg["budget"] = budget;
    cfg["seed"] = seed;
    cfg["normalize"] = normalize;
    cfg["adaptive_tvdf"] = adaptive;
    cfg["partition"] = pool.json();
    cfg["jobs"] = c.jobs;
    emit(out, samplers::plan_text(plan), m);
    m.write(manifest_path_for(out, "select", manifest));
    return 0;
  }
};

struct LoopCmd {
  PoolArgs pool;
  EmbeddingArgs pairwise, singleton;
  TrainerArgs trainer;
  std::vector<std::string> methods{"kcg", "tvdf"};
  std::string target, out_dir, manifest;
  std::size_t budget = 0;
  std::size_t rounds = 3;
  bool normalize = false;

  int run(const Common& c) {
    pairwise.check();
    singleton.check();
    LoopInputs in{"loop", pool, pairwise, singleton, trainer, {}};
    in.config.target_domain = target;
    in.config.total_rounds = rounds;
    in.config.methods.clear();
    for (const auto& s : methods) {
      auto m = parse_method(s);
      require(m.has_value(), ErrorKind::ConfigError, "unknown method '" + s + "'");
      in.config.methods.push_back(*m);
    }
    in.config.budget = Budget(budget);
    in.config.seed = resolve_seed(c);
    in.config.normalize = normalize;
    in.config.jobs = c.jobs;
    Manifest m("loop");
    loop_manifest(m, in, c);
    auto run = execute_loop(in);
    write_loop_outputs(run, in.config, out_dir, m);
    m.write(manifest.empty() ? (fs::path(out_dir) / "manifest.json").string() : manifest);
    return 0;
  }
};

struct VoteCmd {
  std::string votes, out, manifest;
  double threshold = 0.5;

  int run(const Common&) {
    std::ifstream in(votes);
    require(in.good(), ErrorKind::IoError, "cannot open " + votes);
    const auto members = ensemble::read_votes(in);
    require(!members.empty(), ErrorKind::EmptyInput, "votes file has no models");
    std::vector<SampleId> ids;
    for (const auto& [id, _] : members.front().confidences) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    std::ostringstream ss;
    for (auto id : ids) {
      const double conf = ensemble::soft_vote(members, id);
      ojson j;
      j["id"] = id.value;
      j["confidence"] = conf;
      j["prediction"] = ensemble::classify(conf, threshold);
      ss << j.dump() << '\n';
    }
    Manifest m("vote");
    m.input("votes", votes);
    m.config()["threshold"] = threshold;
    emit(out, ss.str(), m);
    m.write(manifest_path_for(out, "vote", manifest));
    return 0;
  }
};

struct EvalCmd {
  PoolArgs pool;
  std::string predictions, out, manifest;
  double threshold = 0.5;

  int run(const Common&) {
    const auto p = ingest::load_pool(pool.path, pool.partition());
    std::ifstream in(predictions);
    require(in.good(), ErrorKind::IoError, "cannot open " + predictions);
    std::unordered_map<SampleId, int> pred;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      const SampleId id{j.at("id").get<std::uint64_t>()};
      if (j.contains("prediction")) {
        pred[id] = j["prediction"].get<int>() != 0;
      } else {
        require(j.contains("confidence"), ErrorKind::IngestError,
                "line " + std::to_string(lineno) + ": needs 'prediction' or 'confidence'");
        pred[id] = ensemble::classify(j["confidence"].get<double>(), threshold);
      }
    }
    std::ostringstream ss;
    ensemble::write_eval_csv(ensemble::evaluate_pool(p, pred), ss);
    Manifest m("eval");
    m.input("pool", pool.path);
    m.input("predictions", predictions);
    m.config() = pool.json();
    m.config()["threshold"] = threshold;
    emit(out, ss.str(), m);
    m.write(manifest_path_for(out, "eval", manifest));
    return 0;
  }
};

struct BenchCmd {
  std::string config, out, manifest;
  std::vector<std::string> methods;
  std::vector<std::size_t> budgets;
  synth::EvalOptions opt;

  int run(const Common& c) {
    const auto cfg = config.empty() ? synth::SynthConfig{} : synth::load_config(config);
    const auto seed = resolve_seed(c);
    const auto w = synth::generate(cfg);
    const auto table = synth::run_benchmark(w, methods, budgets, seed, opt, c.jobs);
    std::ostringstream ss;
    synth::write_bench_csv(table, ss);
    Manifest m("bench");
    if (!config.empty()) m.input("config", config);
    auto& j = m.config();
    j["synth"] = synth::to_json(cfg);
    j["methods"] = methods;
    j["budgets"] = budgets;
    j["seed"] = seed;
    j["rounds"] = opt.rounds;
    j["sharpen_rate"] = opt.sharpen_rate;
    j["normalize"] = opt.normalize;
    j["threshold"] = opt.threshold;
    j["jobs"] = c.jobs;
    emit(out, ss.str(), m);
    m.write(manifest_path_for(out, "bench", manifest));
    return 0;
  }
};

struct SynthCmd {
  std::string config, out_dir;

  int run(const Common& c) {
    auto cfg = config.empty() ? synth::SynthConfig{} : synth::load_config(config);
    if (c.seed || std::getenv("BEACON_SEED") != nullptr) cfg.seed = resolve_seed(c);
    const auto w = synth::generate(cfg);
    fs::create_directories(out_dir);
    auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
    Manifest m("synth");
    if (!config.empty()) m.input("config", config);
    m.config() = synth::to_json(cfg);
    ingest::write_pool(w.pool, path("pool.jsonl"));
    ingest::save_embeddings(w.pairwise, path("pairwise.manifest.jsonl"), path("pairwise.f32"));
    ingest::save_embeddings(w.singleton, path("singleton.manifest.jsonl"), path("singleton.f32"));
    for (const char* f : {"pool.jsonl", "pairwise.manifest.jsonl", "pairwise.f32", "singleton.manifest.jsonl",
                          "singleton.f32"})
      m.output(path(f));
    m.write(path("manifest.json"));
    return 0;
  }
};

struct ReplayCmd {
  std::string audit, out_dir;

  int run(const Common& c) {
    std::ifstream in(audit);
    require(in.good(), ErrorKind::IoError, "cannot open " + audit);
    const auto recorded = loop::read_audit(in);
    const auto& h = recorded.header;

    auto check_ref = [](const nlohmann::json& ref) {
      const auto path = ref.at("path").get<std::string>();
      const auto want = ref.at("hash").get<std::string>();
      const auto got = ingest::file_hash(path);
      require(got == want, ErrorKind::ReplayMismatch,
              "input " + path + " changed since the run (hash " + got + ", recorded " + want + ")");
      return path;
    };
    auto embedding_args = [&](const nlohmann::json& ref) {
      EmbeddingArgs e;
      if (ref.is_null()) return e;
      e.manifest = check_ref(ref.at("manifest"));
      e.matrix = check_ref(ref.at("matrix"));
      return e;
    };

    LoopInputs li;
    li.command = h.value("command", "loop");
    li.pool.path = check_ref(h.at("pool"));
    li.pool.domain_attribute = h.at("partition").at("domain_attribute").get<std::string>();
    li.pool.min_domain_size = h.at("partition").at("min_domain_size").get<std::size_t>();
    li.pairwise = embedding_args(h.at("embeddings"));
    li.singleton = embedding_args(h.value("singleton_embeddings", nlohmann::json()));
    li.trainer = TrainerArgs::from_json(h.at("trainer"));
    li.config = recorded.config;
    li.config.jobs = c.jobs;

    const auto run = execute_loop(li);
    auto diffs = loop::compare(recorded, run.result);

    const auto audit_dir = fs::path(audit).parent_path();
    const auto dir = out_dir.empty() ? (audit_dir / "replay").string() : out_dir;
    fs::create_directories(dir);
    std::size_t compared = 0;
    for (const auto& [name, text] : loop_plan_files(run.result)) {
      write_file((fs::path(dir) / name).string(), text);
      const auto original = audit_dir / name;
      if (!fs::exists(original)) continue;
      ++compared;
      if (read_file(original.string()) != text) diffs.push_back(name + ": bytes differ from the original plan file");
    }
    for (std::size_t i = 0; i < recorded.entries.size(); ++i)
      if (samplers::plan_hash(recorded.entries[i].plan) != recorded.entries[i].plan_hash)
        diffs.push_back("audit entry " + std::to_string(i + 1) + " does not match its recorded hash");

    ojson report;
    report["audit"] = audit;
    report["out_dir"] = dir;
    report["plans_compared"] = compared;
    report["identical"] = diffs.empty();
    report["differences"] = diffs;
    std::cout << report.dump() << '\n';
    if (!diffs.empty())
      throw Error(ErrorKind::ReplayMismatch, "replay differs from the audit trail: " + diffs.front());
    return 0;
  }
};

int report_error(const std::string& kind, const std::string& message) {
  ojson j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-aware training-set selection for multi-domain entity matching"};
  app.require_subcommand(1);
  Common common;
  auto common_opts = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed (fallback: BEACON_SEED, then 0)");
    sub->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };

  PartitionCmd partition;
  auto* p = app.add_subcommand("partition", "Assign domains and drop small ones");
  partition.pool.add(p);
  p->add_option("--out", partition.out, "Partitioned pool file (default stdout)");
  p->add_option("--manifest", partition.manifest, "Run manifest path");
  common_opts(p);

  StatsCmd stats;
  auto* s = app.add_subcommand("stats", "Per-domain sample counts and match rates");
  stats.pool.add(s);
  s->add_option("--out", stats.out, "CSV file (default stdout)");
  s->add_option("--manifest", stats.manifest, "Run manifest path");
  common_opts(s);

  SelectCmd select;
  auto* sel = app.add_subcommand("select", "Build a budgeted training plan for one domain");
  select.pool.add(sel);
  add_embedding_args(sel, select.pairwise, "", "Pairwise");
  add_embedding_args(sel, select.singleton, "singleton-", "Singleton");
  select.trainer.add(sel);
  sel->add_option("--method", select.method, "gen, spec, nn, tvdf, kcg or beacon")->required();
  sel->add_option("--budget", select.budget, "Training budget")->required()->check(CLI::PositiveNumber);
  sel->add_option("--target-domain", select.target, "Target domain")->required();
  sel->add_option("--rounds", select.rounds, "Loop rounds for --method beacon")->capture_default_str();
  sel->add_flag("--normalize", select.normalize, "L2-normalize vectors before selection");
  sel->add_flag("--adaptive-tvdf", select.adaptive, "Re-center TVDF after each pick");
  sel->add_option("--out", select.out, "Plan file, or output directory for beacon (default stdout)");
  sel->add_option("--manifest", select.manifest, "Run manifest path");
  common_opts(sel);

  LoopCmd loopc;
  auto* l = app.add_subcommand("loop", "Alternate selection and training for several rounds");
  loopc.pool.add(l);
  add_embedding_args(l, loopc.pairwise, "", "Initial pairwise");
  add_embedding_args(l, loopc.singleton, "singleton-", "Initial singleton");
  loopc.trainer.add(l);
  l->add_option("--methods", loopc.methods, "Selectors, comma separated")->delimiter(',')->capture_default_str();
  l->add_option("--budget", loopc.budget, "Training budget per round")->required()->check(CLI::PositiveNumber);
  l->add_option("--target-domain", loopc.target, "Target domain")->required();
  l->add_option("--rounds", loopc.rounds, "Number of rounds")->capture_default_str();
  l->add_flag("--normalize", loopc.normalize, "L2-normalize vectors before selection");
  l->add_option("--out-dir", loopc.out_dir, "Directory for plans, audit trail and manifest")->required();
  l->add_option("--manifest", loopc.manifest, "Run manifest path");
  common_opts(l);

  VoteCmd vote;
  auto* v = app.add_subcommand("vote", "Weighted soft vote over member confidences");
  v->add_option("--votes", vote.votes, "Votes file (JSON-Lines)")->required();
  v->add_option("--threshold", vote.threshold, "Decision threshold")->capture_default_str();
  v->add_option("--out", vote.out, "Predictions file (default stdout)");
  v->add_option("--manifest", vote.manifest, "Run manifest path");
  common_opts(v);

  EvalCmd eval;
  auto* e = app.add_subcommand("eval", "Per-domain test F1 with macro and weighted totals");
  eval.pool.add(e);
  e->add_option("--predictions", eval.predictions, "Predictions file (JSON-Lines)")->required();
  e->add_option("--threshold", eval.threshold, "Threshold for confidence-only rows")->capture_default_str();
  e->add_option("--out", eval.out, "CSV file (default stdout)");
  e->add_option("--manifest", eval.manifest, "Run manifest path");
  common_opts(e);

  BenchCmd bench;
  auto* b = app.add_subcommand("bench", "Method by budget table on a synthetic workload");
  b->add_option("--config", bench.config, "Synthetic workload config (JSON)");
  b->add_option("--methods", bench.methods, "Methods, comma separated")->delimiter(',')->required();
  b->add_option("--budgets", bench.budgets, "Budgets, comma separated")->delimiter(',')->required();
  b->add_option("--rounds", bench.opt.rounds, "Loop rounds for beacon")->capture_default_str();
  b->add_option("--sharpen-rate", bench.opt.sharpen_rate, "Sharpening trainer rate")->capture_default_str();
  b->add_flag("--normalize", bench.opt.normalize, "L2-normalize vectors before selection");
  b->add_option("--threshold", bench.opt.threshold, "Decision threshold")->capture_default_str();
  b->add_option("--out", bench.out, "CSV file (default stdout)");
  b->add_option("--manifest", bench.manifest, "Run manifest path");
  common_opts(b);

  SynthCmd synthc;
  auto* y = app.add_subcommand("synth", "Write a synthetic pool and its embeddings");
  y->add_option("--config", synthc.config, "Synthetic workload config (JSON)");
  y->add_option("--out-dir", synthc.out_dir, "Output directory")->required();
  common_opts(y);

  ReplayCmd replay;
  auto* r = app.add_subcommand("replay", "Re-run a loop from its audit trail and compare plans byte for byte");
  r->add_option("--audit", replay.audit, "Audit trail (audit.jsonl)")->required();
  r->add_option("--out-dir", replay.out_dir, "Where to write replayed plans (default: replay/ next to the audit)");
  common_opts(r);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (p->parsed()) return partition.run(common);
    if (s->parsed()) return stats.run(common);
    if (sel->parsed()) return select.run(common);
    if (l->parsed()) return loopc.run(common);
    if (v->parsed()) return vote.run(common);
    if (e->parsed()) return eval.run(common);
    if (b->parsed()) return bench.run(common);
    if (y->parsed()) return synthc.run(common);
    if (r->parsed()) return replay.run(common);
  } catch (const CLI::ValidationError& ex) {
    std::cerr << ex.what() << '\n';
    return 2;
  } catch (const Error& ex) {
    return report_error(std::string(to_string(ex.kind())), ex.what());
  } catch (const nlohmann::json::exception& ex) {
    return report_error("IngestError", ex.what());
  } catch (const std::exception& ex) {
    return report_error("InternalError", ex.what());
  }
  return 2;
}
