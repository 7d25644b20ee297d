#pragma once

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "beacon/error.hpp"
#include "beacon/model.hpp"

namespace beacon::ensemble {

struct ModelVote {
  std::string model;
  std::unordered_map<SampleId, double> confidences;
  double validation_f1 = 0.0;
};

struct DomainScore {
  DomainId domain;
  double f1 = 0.0;
  std::size_t test_size = 1;
};

struct AggregateF1 {
  double macro = 0.0;
  double weighted = 0.0;
};

/// Validation-F1 weighted mean of the member confidences for one candidate.
inline double soft_vote(std::span<const ModelVote> votes, SampleId id) {
  require(!votes.empty(), ErrorKind::EmptyInput, "soft_vote needs at least one model");
  double num = 0.0;
  double den = 0.0;
  for (const auto& v : votes) {
    require(v.validation_f1 >= 0.0 && v.validation_f1 <= 1.0, ErrorKind::ContractViolation,
            "validation F1 of model '" + v.model + "' outside [0,1]");
    auto it = v.confidences.find(id);
    require(it != v.confidences.end(), ErrorKind::UnknownSampleId,
            "model '" + v.model + "' has no confidence for SampleId " + std::to_string(id.value));
    require(it->second >= 0.0 && it->second <= 1.0, ErrorKind::ContractViolation,
            "confidence outside [0,1] for SampleId " + std::to_string(id.value));
    num += it->second * v.validation_f1;
    den += v.validation_f1;
  }
  require(den > 0.0, ErrorKind::DegenerateWeights, "all validation F1 weights are zero");
  return num / den;
}

inline int classify(double confidence, double threshold = 0.5) { return confidence >= threshold ? 1 : 0; }

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size(), ErrorKind::LengthMismatch,
          "predictions (" + std::to_string(predictions.size()) + ") and labels (" +
              std::to_string(labels.size()) + ") differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Positive-class F1. With no predicted and no actual positives the score is
/// 1.0; predicting nothing when positives exist scores 0.
inline double f1(std::span<const int> predictions, std::span<const int> labels) {
  const auto c = confusion(predictions, labels);
  if (c.tp + c.fp + c.fn == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

inline AggregateF1 aggregate_f1(std::span<const DomainScore> scores) {
  require(!scores.empty(), ErrorKind::EmptyInput, "aggregate_f1 of no domains");
  double sum = 0.0, wsum = 0.0, wtot = 0.0;
  for (const auto& s : scores) {
    require(s.test_size >= 1, ErrorKind::ContractViolation, "domain '" + s.domain + "' has empty test split");
    sum += s.f1;
    wsum += s.f1 * static_cast<double>(s.test_size);
    wtot += static_cast<double>(s.test_size);
  }
  return {sum / static_cast<double>(scores.size()), wsum / wtot};
}

// ---------------------------------------------------------------------------
// Files.
//
// Votes JSON-Lines: {"model": m, "validation_f1": w} declares a member and
// {"model": m, "id": u64, "confidence": c} records one confidence.

inline std::vector<ModelVote> read_votes(std::istream& in) {
  std::map<std::string, ModelVote> by;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    const auto name = j.at("model").get<std::string>();
    auto [it, fresh] = by.try_emplace(name);
    if (fresh) {
      it->second.model = name;
      order.push_back(name);
    }
    if (j.contains("validation_f1")) it->second.validation_f1 = j["validation_f1"].get<double>();
    if (j.contains("id"))
      it->second.confidences[SampleId{j["id"].get<std::uint64_t>()}] = j.at("confidence").get<double>();
  }
  std::vector<ModelVote> out;
  for (const auto& name : order) out.push_back(std::move(by[name]));
  return out;
}

inline void write_votes(std::span<const ModelVote> votes, std::ostream& out) {
  for (const auto& v : votes) {
    nlohmann::ordered_json h;
    h["model"] = v.model;
    h["validation_f1"] = v.validation_f1;
    out << h.dump() << '\n';
    std::vector<std::pair<SampleId, double>> rows(v.confidences.begin(), v.confidences.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [id, c] : rows) {
      nlohmann::ordered_json j;
      j["model"] = v.model;
      j["id"] = id.value;
      j["confidence"] = c;
      out << j.dump() << '\n';
    }
  }
}

/// Per-domain rows then macro and weighted footers.
inline void write_eval_csv(std::span<const DomainScore> scores, std::ostream& out) {
  const auto agg = aggregate_f1(scores);
  out << "domain,test_size,f1\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.6f", s.f1);
    out << s.domain << ',' << s.test_size << ',' << buf << '\n';
  }
  std::size_t total = 0;
  for (const auto& s : scores) total += s.test_size;
  std::snprintf(buf, sizeof buf, "%.6f", agg.macro);
  out << "macro," << total << ',' << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.6f", agg.weighted);
  out << "weighted," << total << ',' << buf << '\n';
}

inline void write_scores(std::span<const DomainScore> scores, std::ostream& out) {
  for (const auto& s : scores) {
    nlohmann::ordered_json j;
    j["domain"] = s.domain;
    j["f1"] = s.f1;
    j["test_size"] = s.test_size;
    out << j.dump() << '\n';
  }
}

inline std::vector<DomainScore> read_scores(std::istream& in) {
  std::vector<DomainScore> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("domain").get<std::string>(), j.at("f1").get<double>(), j.at("test_size").get<std::size_t>()});
  }
  return out;
}

/// Per-domain test F1 of binary predictions keyed by SampleId. Test records
/// without a prediction are a contract error.
inline std::vector<DomainScore> evaluate_pool(const CandidatePool& pool,
                                              const std::unordered_map<SampleId, int>& predictions) {
  std::vector<DomainScore> out;
  for (const auto& d : pool.domains()) {
    const auto& test = pool.domain(d).test;
    if (test.empty()) continue;
    std::vector<int> pred, lab;
    for (auto id : test) {
      auto it = predictions.find(id);
      require(it != predictions.end(), ErrorKind::UnknownSampleId,
              "no prediction for test SampleId " + std::to_string(id.value));
      pred.push_back(it->second);
      lab.push_back(pool.at(id).label);
    }
    out.push_back({d, f1(pred, lab), test.size()});
  }
  require(!out.empty(), ErrorKind::EmptyInput, "pool has no test samples");
  return out;
}

}  // namespace beacon::ensemble
