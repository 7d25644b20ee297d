#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "beacon/error.hpp"
#include "beacon/hash.hpp"

namespace beacon {

struct SampleId {
  std::uint64_t value = 0;
  auto operator<=>(const SampleId&) const = default;
};

using DomainId = std::string;

enum class Split { train, validation, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

/// One structured record: attribute names in input order, values possibly empty.
struct EntityRow {
  std::vector<std::pair<std::string, std::string>> attributes;

  bool operator==(const EntityRow&) const = default;
};

struct CandidateRecord {
  SampleId id;
  EntityRow left;
  EntityRow right;
  int label = 0;
  DomainId domain;
  Split split = Split::train;
};

}  // namespace beacon

template <>
struct std::hash<beacon::SampleId> {
  std::size_t operator()(const beacon::SampleId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

namespace beacon {

/// Labeled candidate pairs partitioned into disjoint domains and splits.
/// Records are held in ascending SampleId order, which is the tie-break
/// order used by every selector.
class CandidatePool {
 public:
  struct DomainIndex {
    std::vector<SampleId> train;
    std::vector<SampleId> validation;
    std::vector<SampleId> test;

    const std::vector<SampleId>& split(Split s) const {
      switch (s) {
        case Split::train: return train;
        case Split::validation: return validation;
        case Split::test: return test;
      }
      return train;
    }
    std::size_t size() const { return train.size() + validation.size() + test.size(); }
  };

  CandidatePool() = default;

  explicit CandidatePool(std::vector<CandidateRecord> records) : records_(std::move(records)) {
    std::sort(records_.begin(), records_.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    by_id_.reserve(records_.size());
    Fnv1a h;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      require(r.label == 0 || r.label == 1, ErrorKind::ContractViolation,
              "record " + std::to_string(r.id.value) + " has label outside {0,1}");
      require(by_id_.emplace(r.id, i).second, ErrorKind::ContractViolation,
              "duplicate SampleId " + std::to_string(r.id.value));
      auto& idx = domains_[r.domain];
      switch (r.split) {
        case Split::train: idx.train.push_back(r.id); break;
        case Split::validation: idx.validation.push_back(r.id); break;
        case Split::test: idx.test.push_back(r.id); break;
      }
      if (r.split == Split::train) train_.push_back(r.id);
      h.u64(r.id.value).str(r.domain).u64(static_cast<std::uint64_t>(r.split)).u64(
          static_cast<std::uint64_t>(r.label));
    }
    fingerprint_ = h.value();
  }

  const std::vector<CandidateRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  const CandidateRecord* find(SampleId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  const CandidateRecord& at(SampleId id) const {
    const auto* r = find(id);
    if (r == nullptr) fail(ErrorKind::UnknownSampleId, "unknown SampleId " + std::to_string(id.value));
    return *r;
  }

  std::vector<DomainId> domains() const {
    std::vector<DomainId> out;
    out.reserve(domains_.size());
    for (const auto& [name, _] : domains_) out.push_back(name);
    return out;
  }

  bool has_domain(const DomainId& d) const { return domains_.count(d) != 0; }

  const DomainIndex& domain(const DomainId& d) const {
    auto it = domains_.find(d);
    if (it == domains_.end()) fail(ErrorKind::ContractViolation, "unknown domain '" + d + "'");
    return it->second;
  }

  /// Train-split ids across all domains, ascending.
  const std::vector<SampleId>& train_ids() const { return train_; }

  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::vector<CandidateRecord> records_;
  std::unordered_map<SampleId, std::size_t> by_id_;
  std::map<DomainId, DomainIndex> domains_;
  std::vector<SampleId> train_;
  std::uint64_t fingerprint_ = Fnv1a::kOffset;
};

enum class EmbeddingKind { pairwise, singleton };

inline std::string_view to_string(EmbeddingKind k) {
  return k == EmbeddingKind::pairwise ? "pairwise" : "singleton";
}

/// Dense row-major vectors keyed by SampleId. Values are held as double; the
/// on-disk format is 32-bit.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::size_t dim, std::vector<SampleId> ids, std::vector<double> values,
                  EmbeddingKind kind = EmbeddingKind::pairwise)
      : dim_(dim), ids_(std::move(ids)), values_(std::move(values)), kind_(kind) {
    require(dim_ > 0, ErrorKind::DimensionMismatch, "embedding dimension must be positive");
    require(values_.size() == ids_.size() * dim_, ErrorKind::RowCountMismatch,
            "embedding holds " + std::to_string(values_.size()) + " values, expected " +
                std::to_string(ids_.size()) + " x " + std::to_string(dim_));
    index_.reserve(ids_.size());
    Fnv1a h;
    h.u64(dim_).u64(static_cast<std::uint64_t>(kind_));
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      require(index_.emplace(ids_[r], r).second, ErrorKind::ContractViolation,
              "duplicate SampleId " + std::to_string(ids_[r].value) + " in embedding rows");
      h.u64(ids_[r].value);
      for (double v : row(r)) {
        require(std::isfinite(v), ErrorKind::NonFinite,
                "non-finite embedding value at row " + std::to_string(r));
        h.f64(v);
      }
    }
    fingerprint_ = h.value();
  }

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return ids_.size(); }
  EmbeddingKind kind() const { return kind_; }
  const std::vector<SampleId>& ids() const { return ids_; }
  const std::vector<double>& values() const { return values_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * dim_, dim_};
  }

  bool contains(SampleId id) const { return index_.count(id) != 0; }

  std::optional<std::size_t> index_of(SampleId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> vector(SampleId id) const {
    auto r = index_of(id);
    if (!r) fail(ErrorKind::UnknownSampleId, "no embedding row for SampleId " + std::to_string(id.value));
    return row(*r);
  }

  EmbeddingMatrix scaled(double c) const {
    std::vector<double> v(values_);
    for (auto& x : v) x *= c;
    return EmbeddingMatrix(dim_, ids_, std::move(v), kind_);
  }

  bool operator==(const EmbeddingMatrix& o) const {
    return dim_ == o.dim_ && kind_ == o.kind_ && ids_ == o.ids_ && values_ == o.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<SampleId> ids_;
  std::vector<double> values_;
  EmbeddingKind kind_ = EmbeddingKind::pairwise;
  std::unordered_map<SampleId, std::size_t> index_;
  std::uint64_t fingerprint_ = Fnv1a::kOffset;
};

struct Centroid {
  std::vector<double> vector;
  std::size_t count = 0;
};

struct Budget {
  std::size_t beta = 1;

  explicit Budget(std::size_t b) : beta(b) {
    require(b >= 1, ErrorKind::ContractViolation, "budget must be at least 1");
  }
};

enum class Method { GEN, SPEC, NN, TVDF, KCG };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::GEN: return "GEN";
    case Method::SPEC: return "SPEC";
    case Method::NN: return "NN";
    case Method::TVDF: return "TVDF";
    case Method::KCG: return "KCG";
  }
  return "GEN";
}

inline std::optional<Method> parse_method(std::string_view s) {
  std::string u(s);
  for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (Method m : {Method::GEN, Method::SPEC, Method::NN, Method::TVDF, Method::KCG})
    if (u == to_string(m)) return m;
  return std::nullopt;
}

enum class Source { in_domain, out_of_domain };

inline std::string_view to_string(Source s) {
  return s == Source::in_domain ? "in_domain" : "out_of_domain";
}

struct PlanEntry {
  SampleId id;
  std::size_t multiplicity = 1;
  Source source = Source::in_domain;
  Method method = Method::GEN;
  std::optional<double> score;

  bool operator==(const PlanEntry&) const = default;
};

/// A budgeted training set for one target domain. Oversampling is expressed
/// through multiplicity; entries are unique by id.
struct SelectionPlan {
  DomainId target_domain;
  Method method = Method::GEN;
  std::size_t beta = 0;
  std::uint64_t seed = 0;
  std::string input_hash;
  std::vector<PlanEntry> entries;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& e : entries) t += e.multiplicity;
    return t;
  }

  std::size_t multiplicity_of(SampleId id) const {
    for (const auto& e : entries)
      if (e.id == id) return e.multiplicity;
    return 0;
  }

  bool operator==(const SelectionPlan&) const = default;
};

// ---------------------------------------------------------------------------
// Vector arithmetic

/// Neumaier's compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline constexpr double kZeroNorm = 1e-12;

/// Cosine similarity; 0 when either vector has norm below 1e-12.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::ContractViolation,
          "cosine of vectors with dimensions " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline Centroid centroid_of(std::span<const std::span<const double>> vectors) {
  require(!vectors.empty(), ErrorKind::EmptyDomain, "centroid of an empty set");
  const std::size_t d = vectors.front().size();
  std::vector<CompensatedSum> acc(d);
  for (const auto& v : vectors) {
    require(v.size() == d, ErrorKind::DimensionMismatch, "centroid over vectors of mixed dimension");
    for (std::size_t i = 0; i < d; ++i) acc[i].add(v[i]);
  }
  Centroid c;
  c.count = vectors.size();
  c.vector.resize(d);
  for (std::size_t i = 0; i < d; ++i) c.vector[i] = acc[i].value() / static_cast<double>(c.count);
  return c;
}

inline Centroid centroid_of(const std::vector<std::vector<double>>& vectors) {
  std::vector<std::span<const double>> views(vectors.begin(), vectors.end());
  return centroid_of(std::span<const std::span<const double>>(views));
}

/// Centroid of the rows of `m` selected by `ids`.
inline Centroid centroid_of(const EmbeddingMatrix& m, std::span<const SampleId> ids) {
  std::vector<std::span<const double>> views;
  views.reserve(ids.size());
  for (auto id : ids) views.push_back(m.vector(id));
  return centroid_of(std::span<const std::span<const double>>(views));
}

/// Centroid after adding one vector to a set with centroid `c`:
/// (|n|·mu + x) / (|n| + 1).
inline std::vector<double> updated_centroid(const Centroid& c, std::span<const double> x) {
  const double n = static_cast<double>(c.count);
  std::vector<double> out(c.vector.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (n * c.vector[i] + x[i]) / (n + 1.0);
  return out;
}

inline std::vector<double> l2_normalized(std::span<const double> v) {
  const double n = norm(v);
  std::vector<double> out(v.begin(), v.end());
  if (n >= kZeroNorm)
    for (auto& x : out) x /= n;
  return out;
}

inline EmbeddingMatrix l2_normalized(const EmbeddingMatrix& m) {
  std::vector<double> values;
  values.reserve(m.values().size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto v = l2_normalized(m.row(r));
    values.insert(values.end(), v.begin(), v.end());
  }
  return EmbeddingMatrix(m.dim(), m.ids(), std::move(values), m.kind());
}

}  // namespace beacon
