#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "beacon/error.hpp"
#include "beacon/hash.hpp"
#include "beacon/model.hpp"

namespace beacon::ingest {

// ---------------------------------------------------------------------------
// Serialization: "[COL] name [VAL] value ..." and "[CLS] left [SEP] right".

inline constexpr std::array<std::string_view, 4> kReservedTokens{"[COL]", "[VAL]", "[CLS]", "[SEP]"};

inline bool contains_reserved_token(std::string_view text) {
  for (auto tok : kReservedTokens)
    if (text.find(tok) != std::string_view::npos) return true;
  return false;
}

inline std::string serialize_entity(const EntityRow& row) {
  require(!row.attributes.empty(), ErrorKind::ContractViolation,
          "cannot serialize an entity without attributes");
  std::string out;
  for (const auto& [name, value] : row.attributes) {
    if (!out.empty()) out += ' ';
    out += "[COL] ";
    out += name;
    out += " [VAL] ";
    out += value;
  }
  return out;
}

inline std::string serialize_pair(const EntityRow& left, const EntityRow& right) {
  return "[CLS] " + serialize_entity(left) + " [SEP] " + serialize_entity(right);
}

/// Inverse of serialize_entity for attribute lists free of reserved tokens.
inline EntityRow parse_entity(std::string_view text) {
  constexpr std::string_view kCol = "[COL] ";
  constexpr std::string_view kVal = " [VAL] ";
  constexpr std::string_view kNext = " [COL] ";
  require(text.substr(0, kCol.size()) == kCol, ErrorKind::IngestError,
          "serialized entity must start with [COL]");
  EntityRow row;
  std::size_t pos = kCol.size();
  while (true) {
    const auto val = text.find(kVal, pos);
    require(val != std::string_view::npos, ErrorKind::IngestError, "[COL] without matching [VAL]");
    std::string name(text.substr(pos, val - pos));
    const std::size_t vstart = val + kVal.size();
    const auto next = text.find(kNext, vstart);
    if (next == std::string_view::npos) {
      row.attributes.emplace_back(std::move(name), std::string(text.substr(vstart)));
      break;
    }
    row.attributes.emplace_back(std::move(name), std::string(text.substr(vstart, next - vstart)));
    pos = next + kNext.size();
  }
  return row;
}

/// Stable key for a singleton entity: FNV-1a of its serialized form. Singleton
/// embedding rows are keyed by this value.
inline SampleId entity_key(const EntityRow& row) { return SampleId{fnv1a64(serialize_entity(row))}; }

// ---------------------------------------------------------------------------
// Candidate pool files

struct PartitionConfig {
  std::string domain_attribute = "domain";
  std::size_t min_domain_size = 100;
  bool preserve_splits = true;
};

/// One line of a pool file before partitioning.
struct PoolRow {
  SampleId id;
  Split split = Split::train;
  int label = 0;
  EntityRow left;
  EntityRow right;
  std::map<std::string, std::string> fields;  // top-level scalar fields, e.g. "domain"
};

namespace detail {

inline std::string scalar_text(const nlohmann::ordered_json& v) {
  if (v.is_null()) return {};
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline EntityRow entity_from_json(const nlohmann::ordered_json& obj, std::size_t line) {
  require(obj.is_object(), ErrorKind::IngestError,
          "line " + std::to_string(line) + ": entity must be a JSON object");
  EntityRow row;
  for (const auto& [name, value] : obj.items()) {
    std::string text = scalar_text(value);
    require(!contains_reserved_token(name) && !contains_reserved_token(text), ErrorKind::IngestError,
            "line " + std::to_string(line) + ": attribute '" + name + "' contains a reserved token");
    row.attributes.emplace_back(name, std::move(text));
  }
  return row;
}

inline nlohmann::ordered_json entity_to_json(const EntityRow& row) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  for (const auto& [name, value] : row.attributes) obj[name] = value;
  return obj;
}

}  // namespace detail

inline std::vector<PoolRow> read_pool_rows(std::istream& in) {
  std::vector<PoolRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::IngestError, "line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto where = "line " + std::to_string(lineno) + ": ";
    require(j.is_object() && j.contains("id") && j["id"].is_number_unsigned(), ErrorKind::IngestError,
            where + "missing unsigned 'id'");
    PoolRow r;
    r.id = SampleId{j["id"].get<std::uint64_t>()};
    require(j.contains("split") && j["split"].is_string(), ErrorKind::IngestError, where + "missing 'split'");
    auto split = parse_split(j["split"].get<std::string>());
    require(split.has_value(), ErrorKind::IngestError, where + "split must be train|validation|test");
    r.split = *split;
    require(j.contains("label") && j["label"].is_number_integer(), ErrorKind::IngestError,
            where + "missing integer 'label'");
    r.label = j["label"].get<int>();
    require(r.label == 0 || r.label == 1, ErrorKind::IngestError, where + "label must be 0 or 1");
    require(j.contains("left") && j.contains("right"), ErrorKind::IngestError,
            where + "missing 'left' or 'right'");
    r.left = detail::entity_from_json(j["left"], lineno);
    r.right = detail::entity_from_json(j["right"], lineno);
    for (const auto& [key, value] : j.items()) {
      if (key == "left" || key == "right" || value.is_structured()) continue;
      r.fields[key] = detail::scalar_text(value);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<PoolRow> read_pool_rows(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open pool file " + path);
  return read_pool_rows(in);
}

/// Resolves the domain of each row from the configured attribute (top-level
/// field first, then the entity attributes), drops domains with fewer than
/// min_domain_size labeled samples across all splits, and keeps splits as-is.
inline CandidatePool partition(const std::vector<PoolRow>& rows, const PartitionConfig& config) {
  require(config.min_domain_size >= 1, ErrorKind::ConfigError, "min_domain_size must be at least 1");
  auto attr = [](const EntityRow& e, const std::string& name) -> const std::string* {
    for (const auto& [n, v] : e.attributes)
      if (n == name) return &v;
    return nullptr;
  };
  std::vector<CandidateRecord> records;
  records.reserve(rows.size());
  std::map<DomainId, std::size_t> counts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::string domain;
    if (auto it = row.fields.find(config.domain_attribute); it != row.fields.end()) {
      domain = it->second;
    } else {
      const auto* l = attr(row.left, config.domain_attribute);
      const auto* r = attr(row.right, config.domain_attribute);
      require(l != nullptr || r != nullptr, ErrorKind::IngestError,
              "row " + std::to_string(i) + ": missing domain attribute '" + config.domain_attribute + "'");
      require(l == nullptr || r == nullptr || *l == *r, ErrorKind::IngestError,
              "row " + std::to_string(i) + ": left and right entities disagree on domain");
      domain = l != nullptr ? *l : *r;
    }
    require(!domain.empty(), ErrorKind::IngestError,
            "row " + std::to_string(i) + ": empty domain attribute '" + config.domain_attribute + "'");
    counts[domain] += 1;
    records.push_back(CandidateRecord{row.id, row.left, row.right, row.label, domain, row.split});
  }
  std::erase_if(records, [&](const CandidateRecord& r) { return counts[r.domain] < config.min_domain_size; });
  require(!records.empty(), ErrorKind::EmptyPartition,
          "no domain has at least " + std::to_string(config.min_domain_size) + " labeled samples");
  return CandidatePool(std::move(records));
}

inline void write_pool(const CandidatePool& pool, std::ostream& out) {
  for (const auto& r : pool.records()) {
    nlohmann::ordered_json j;
    j["id"] = r.id.value;
    j["domain"] = r.domain;
    j["split"] = std::string(to_string(r.split));
    j["label"] = r.label;
    j["left"] = detail::entity_to_json(r.left);
    j["right"] = detail::entity_to_json(r.right);
    out << j.dump() << '\n';
  }
}

inline void write_pool(const CandidatePool& pool, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::IoError, "cannot write pool file " + path);
  write_pool(pool, out);
}

inline CandidatePool load_pool(const std::string& path, const PartitionConfig& config = {}) {
  return partition(read_pool_rows(path), config);
}

// ---------------------------------------------------------------------------
// Statistics

struct SplitStats {
  std::size_t count = 0;
  std::size_t positives = 0;

  /// Percentage of positives rounded half-up to one decimal, in tenths.
  long pct_tenths() const {
    if (count == 0) return 0;
    return static_cast<long>((2000 * positives + count) / (2 * count));
  }
  double pct_positive() const { return static_cast<double>(pct_tenths()) / 10.0; }
};

struct DomainStats {
  DomainId domain;
  SplitStats train, validation, test;

  SplitStats& split(Split s) {
    return s == Split::train ? train : (s == Split::validation ? validation : test);
  }
};

struct StatsReport {
  std::vector<DomainStats> domains;
  DomainStats totals{"Total", {}, {}, {}};
};

inline StatsReport stats_report(const CandidatePool& pool) {
  StatsReport report;
  std::map<DomainId, DomainStats> by;
  for (const auto& r : pool.records()) {
    auto& d = by[r.domain];
    d.domain = r.domain;
    auto& s = d.split(r.split);
    s.count += 1;
    s.positives += static_cast<std::size_t>(r.label);
    auto& t = report.totals.split(r.split);
    t.count += 1;
    t.positives += static_cast<std::size_t>(r.label);
  }
  for (auto& [_, d] : by) report.domains.push_back(d);
  return report;
}

inline std::string format_pct(const SplitStats& s) {
  const long t = s.pct_tenths();
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

inline void write_stats_csv(const StatsReport& report, std::ostream& out) {
  out << "domain,train_samples,train_pct_pos,validation_samples,validation_pct_pos,test_samples,test_pct_pos\n";
  auto row = [&](const DomainStats& d) {
    out << d.domain << ',' << d.train.count << ',' << format_pct(d.train) << ',' << d.validation.count << ','
        << format_pct(d.validation) << ',' << d.test.count << ',' << format_pct(d.test) << '\n';
  };
  for (const auto& d : report.domains) row(d);
  row(report.totals);
}

// ---------------------------------------------------------------------------
// Embedding files: JSON-Lines manifest plus raw little-endian f32 matrix.

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void write_le32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Loads and validates an embedding matrix. When `pool` is given every id must
/// belong to it.
inline EmbeddingMatrix load_embeddings(const std::string& manifest_path, const std::string& matrix_path,
                                       const CandidatePool* pool = nullptr) {
  std::ifstream manifest(manifest_path);
  require(manifest.good(), ErrorKind::IoError, "cannot open manifest " + manifest_path);
  std::string line;
  require(static_cast<bool>(std::getline(manifest, line)), ErrorKind::IngestError, "empty manifest");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::IngestError, std::string("manifest header: ") + e.what());
  }
  require(header.contains("dim") && header.contains("count") && header.value("dtype", "") == "f32le",
          ErrorKind::IngestError, "manifest header needs dim, count and dtype f32le");
  const auto dim = header["dim"].get<std::size_t>();
  const auto count = header["count"].get<std::size_t>();
  require(dim > 0, ErrorKind::DimensionMismatch, "manifest dim must be positive");

  std::vector<SampleId> ids(count);
  std::vector<bool> seen(count, false);
  std::optional<EmbeddingKind> kind;
  std::size_t lines = 0;
  while (std::getline(manifest, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::IngestError, std::string("manifest row: ") + e.what());
    }
    ++lines;
    const auto row = j.at("row").get<std::size_t>();
    require(row < count, ErrorKind::RowCountMismatch,
            "manifest row " + std::to_string(row) + " outside count " + std::to_string(count));
    require(!seen[row], ErrorKind::IngestError, "manifest row " + std::to_string(row) + " listed twice");
    seen[row] = true;
    ids[row] = SampleId{j.at("id").get<std::uint64_t>()};
    const auto k = j.at("kind").get<std::string>();
    require(k == "pairwise" || k == "singleton", ErrorKind::IngestError, "unknown embedding kind " + k);
    const auto this_kind = k == "pairwise" ? EmbeddingKind::pairwise : EmbeddingKind::singleton;
    require(!kind || *kind == this_kind, ErrorKind::IngestError, "manifest mixes embedding kinds");
    kind = this_kind;
  }
  require(lines == count, ErrorKind::RowCountMismatch,
          "manifest lists " + std::to_string(lines) + " rows, header says " + std::to_string(count));

  const std::string bytes = detail::read_all(matrix_path);
  require(bytes.size() % (dim * 4) == 0, ErrorKind::DimensionMismatch,
          "matrix size " + std::to_string(bytes.size()) + " bytes is not a multiple of dim " + std::to_string(dim));
  require(bytes.size() / (dim * 4) == count, ErrorKind::RowCountMismatch,
          "matrix holds " + std::to_string(bytes.size() / (dim * 4)) + " rows, manifest says " +
              std::to_string(count));

  std::vector<double> values(count * dim);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = std::bit_cast<float>(detail::read_le32(p + 4 * i));
    require(std::isfinite(f), ErrorKind::NonFinite, "non-finite embedding value at row " + std::to_string(i / dim));
    values[i] = static_cast<double>(f);
  }
  if (pool != nullptr && kind.value_or(EmbeddingKind::pairwise) == EmbeddingKind::pairwise) {
    for (auto id : ids)
      require(pool->find(id) != nullptr, ErrorKind::UnknownSampleId,
              "embedding row for SampleId " + std::to_string(id.value) + " not in pool");
  }
  return EmbeddingMatrix(dim, std::move(ids), std::move(values), kind.value_or(EmbeddingKind::pairwise));
}

inline void save_embeddings(const EmbeddingMatrix& m, const std::string& manifest_path,
                            const std::string& matrix_path) {
  std::ofstream manifest(manifest_path, std::ios::binary);
  require(manifest.good(), ErrorKind::IoError, "cannot write " + manifest_path);
  nlohmann::ordered_json header;
  header["dim"] = m.dim();
  header["count"] = m.rows();
  header["dtype"] = "f32le";
  manifest << header.dump() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json j;
    j["row"] = r;
    j["id"] = m.ids()[r].value;
    j["kind"] = std::string(to_string(m.kind()));
    manifest << j.dump() << '\n';
  }
  std::string bytes(m.values().size() * 4, '\0');
  auto* p = reinterpret_cast<unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < m.values().size(); ++i)
    detail::write_le32(std::bit_cast<std::uint32_t>(static_cast<float>(m.values()[i])), p + 4 * i);
  std::ofstream matrix(matrix_path, std::ios::binary);
  require(matrix.good(), ErrorKind::IoError, "cannot write " + matrix_path);
  matrix.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Content hash of a file, for run manifests.
inline std::string file_hash(const std::string& path) {
  const std::string bytes = detail::read_all(path);
  return Fnv1a{}.bytes(bytes.data(), bytes.size()).hex();
}

}  // namespace beacon::ingest
