#pragma once

// Brute-force reference implementations used as test oracles. They follow
// the textbook formulas directly and share no code with the library beyond
// its data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "beacon/model.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline long double dot(const Vec& a, const Vec& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

inline double cosine(const Vec& a, const Vec& b) {
  const long double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na < 1e-12L || nb < 1e-12L) return 0.0;
  return static_cast<double>(std::clamp(dot(a, b) / (na * nb), -1.0L, 1.0L));
}

inline Vec mean(const std::vector<Vec>& xs) {
  std::vector<long double> s(xs.front().size(), 0.0L);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < x.size(); ++i) s[i] += x[i];
  Vec out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<double>(s[i] / xs.size());
  return out;
}

/// Indices of the k largest scores; ties go to the smaller index.
inline std::vector<std::size_t> exhaustive_top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline std::vector<double> nn_scores(const std::vector<Vec>& in, const std::vector<Vec>& out) {
  const Vec mu = mean(in);
  std::vector<double> s;
  for (const auto& x : out) s.push_back(cosine(x, mu));
  return s;
}

/// Gain in train/validation centroid alignment from adding x, with the
/// enlarged centroid recomputed from scratch.
inline std::vector<double> tvdf_scores(const std::vector<Vec>& in, const std::vector<Vec>& out,
                                       const std::vector<Vec>& val) {
  const Vec mu = mean(in), mv = mean(val);
  const double base = cosine(mu, mv);
  std::vector<double> s;
  for (const auto& x : out) {
    auto grown = in;
    grown.push_back(x);
    s.push_back(cosine(mean(grown), mv) - base);
  }
  return s;
}

inline double cos_distance(const Vec& a, const Vec& b) { return 1.0 - cosine(a, b); }

/// Farthest-first traversal recomputing every min-distance from scratch.
inline std::vector<std::size_t> greedy_k_center(const std::vector<Vec>& centers, const std::vector<Vec>& cands,
                                                std::size_t k, double (*dist)(const Vec&, const Vec&) = cos_distance) {
  std::vector<Vec> chosen = centers;
  std::vector<bool> taken(cands.size(), false);
  std::vector<std::size_t> picks;
  for (std::size_t r = 0; r < k && r < cands.size(); ++r) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (taken[i]) continue;
      double m = std::numeric_limits<double>::infinity();
      for (const auto& c : chosen) m = std::min(m, dist(cands[i], c));
      if (m > best + 1e-12) {
        best = m;
        arg = i;
      }
    }
    taken[arg] = true;
    picks.push_back(arg);
    chosen.push_back(cands[arg]);
  }
  return picks;
}

/// max over `points` of the distance to the nearest of `centers`.
inline double covering_radius(const std::vector<Vec>& points, const std::vector<Vec>& centers,
                              double (*dist)(const Vec&, const Vec&)) {
  double r = 0;
  for (const auto& p : points) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : centers) m = std::min(m, dist(p, c));
    r = std::max(r, m);
  }
  return r;
}

/// Optimal covering radius over all k-subsets of `cands` added to `fixed`.
inline double optimal_k_center_radius(const std::vector<Vec>& fixed, const std::vector<Vec>& cands, std::size_t k,
                                      const std::vector<Vec>& points, double (*dist)(const Vec&, const Vec&)) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> mask(cands.size(), false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(std::min(k, cands.size())), true);
  do {
    auto centers = fixed;
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (mask[i]) centers.push_back(cands[i]);
    best = std::min(best, covering_radius(points, centers, dist));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

inline double soft_vote(const std::vector<double>& conf, const std::vector<double>& w) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    num += conf[i] * w[i];
    den += w[i];
  }
  return num / den;
}

inline double f1(const std::vector<int>& pred, const std::vector<int>& lab) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] == 1 && lab[i] == 1;
    fp += pred[i] == 1 && lab[i] == 0;
    fn += pred[i] == 0 && lab[i] == 1;
  }
  if (tp + fp + fn == 0) return 1.0;
  const double p = tp + fp ? double(tp) / (tp + fp) : 0.0;
  const double r = tp + fn ? double(tp) / (tp + fn) : 0.0;
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

}  // namespace oracle

namespace fixtures {

using beacon::CandidatePool;
using beacon::CandidateRecord;
using beacon::EmbeddingMatrix;
using beacon::EntityRow;
using beacon::SampleId;
using beacon::Split;

inline EntityRow entity(const std::string& name) { return EntityRow{{{"title", name}}}; }

/// A target domain "t" with `in` train vectors and `val` validation vectors,
/// plus out-of-domain train vectors spread over domains "o0", "o1", ...
/// Ids: in-domain 1.., then out-of-domain, then validation.
struct Instance {
  CandidatePool pool;
  EmbeddingMatrix emb;
  std::vector<oracle::Vec> in, out, val;
  std::vector<SampleId> out_ids;
};

inline Instance build(const std::vector<oracle::Vec>& in, const std::vector<oracle::Vec>& out,
                      const std::vector<oracle::Vec>& val = {}, std::size_t out_domains = 2,
                      const std::vector<int>& labels = {}) {
  Instance inst{{}, {}, in, out, val, {}};
  std::vector<CandidateRecord> recs;
  std::vector<SampleId> ids;
  std::vector<double> values;
  std::uint64_t next = 1;
  auto add = [&](const oracle::Vec& v, const std::string& dom, Split split) {
    const SampleId id{next};
    const int label = labels.size() >= next ? labels[next - 1] : static_cast<int>(next % 2);
    ++next;
    recs.push_back({id, entity("l" + std::to_string(id.value)), entity("r" + std::to_string(id.value)), label, dom,
                    split});
    ids.push_back(id);
    values.insert(values.end(), v.begin(), v.end());
    return id;
  };
  for (const auto& v : in) add(v, "t", Split::train);
  for (std::size_t i = 0; i < out.size(); ++i)
    inst.out_ids.push_back(add(out[i], "o" + std::to_string(i % out_domains), Split::train));
  for (const auto& v : val) add(v, "t", Split::validation);
  const std::size_t dim = !in.empty() ? in.front().size() : out.front().size();
  inst.pool = CandidatePool(std::move(recs));
  inst.emb = EmbeddingMatrix(dim, std::move(ids), std::move(values));
  return inst;
}

inline oracle::Vec random_vec(std::mt19937_64& g, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  oracle::Vec v(d);
  for (auto& x : v) x = n(g);
  return v;
}

inline std::vector<oracle::Vec> random_vecs(std::mt19937_64& g, std::size_t n, std::size_t d) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vec(g, d));
  return out;
}

}  // namespace fixtures

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 g(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("beacon-" + tag + "-" + std::to_string(g()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Unpartitioned pool rows shaped like the WDC product corpus: the domain is
/// the entities' "category" attribute. Automotive has 120 train rows (69
/// matches), Computers 6473 (3314 matches), Toys only 60 rows in total.
inline void write_wdc_fixture(const std::string& path) {
  std::ofstream out(path);
  std::uint64_t id = 1;
  auto emit = [&](const std::string& cat, const char* split, std::size_t n, std::size_t pos) {
    for (std::size_t i = 0; i < n; ++i) {
      nlohmann::ordered_json j;
      j["id"] = id;
      j["split"] = split;
      j["label"] = i < pos ? 1 : 0;
      j["left"] = {{"title", cat + " offer " + std::to_string(id)}, {"category", cat}, {"price", std::to_string(id % 97)}};
      j["right"] = {{"title", cat + " listing " + std::to_string(id)}, {"category", cat}, {"price", ""}};
      out << j.dump() << '\n';
      ++id;
    }
  };
  emit("Automotive", "train", 120, 69);
  emit("Automotive", "validation", 30, 15);
  emit("Automotive", "test", 40, 20);
  emit("Computers", "train", 6473, 3314);
  emit("Computers", "validation", 400, 200);
  emit("Computers", "test", 1100, 550);
  emit("Toys", "train", 40, 20);
  emit("Toys", "test", 20, 10);
}

}  // namespace fixtures
