#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace reidaug::eval {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EmbeddingMatrix = Matrix;

enum class Metric { euclidean, squared_euclidean };

struct DistanceMatrix {
  Matrix values; // n_query x n_gallery
  Metric metric = Metric::euclidean;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  double operator()(Eigen::Index q, Eigen::Index g) const { return values(q, g); }
};

/// Pairwise distances by direct summation; d(x, x) is exactly 0.
inline DistanceMatrix pairwise_distances(const EmbeddingMatrix &query, const EmbeddingMatrix &gallery,
                                         Metric metric = Metric::euclidean) {
  if (query.cols() != gallery.cols())
    throw ArgumentError("pairwise_distances: feature widths differ (" + std::to_string(query.cols()) + " vs " +
                        std::to_string(gallery.cols()) + ")");
  DistanceMatrix d{Matrix(query.rows(), gallery.rows()), metric};
  for (Eigen::Index i = 0; i < query.rows(); ++i)
    for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
      const double sq = (query.row(i) - gallery.row(j)).squaredNorm();
      d.values(i, j) = metric == Metric::euclidean ? std::sqrt(sq) : sq;
    }
  return d;
}

struct SampleMeta {
  int identity = 0;
  int camera = 0;
  bool operator==(const SampleMeta &) const = default;
};

enum class QueryMode { single, multi };
enum class NoMatchPolicy { exclude, score_zero };
enum class Pooling { mean, max };

struct EvalProtocol {
  bool exclude_same_id_same_cam = true;
  std::set<int> junk_ids{-1};
  QueryMode query_mode = QueryMode::single;
  NoMatchPolicy no_match = NoMatchPolicy::exclude;
  Pooling pooling = Pooling::mean;
};

struct EvalReport {
  double mAP = 0.0;
  std::vector<double> cmc; // cmc[k-1] = Rank-k accuracy, k = 1..n_gallery
  std::size_t n_query = 0;
  std::size_t n_gallery = 0;
  std::size_t excluded_queries = 0;
  EvalProtocol protocol;
  std::uint64_t seed = 0;

  /// Rank-k accuracy; ranks past the gallery size saturate.
  double rank(std::size_t k) const {
    if (cmc.empty() || k == 0)
      return 0.0;
    return cmc[std::min(k, cmc.size()) - 1];
  }
};

/// Per-query ranking after protocol filtering: 1-based positions of true matches.
struct QueryRanking {
  std::vector<std::size_t> match_positions;
  bool valid() const noexcept { return !match_positions.empty(); }
};

/**
 * Ranks the gallery for query q: drops junk identities and (optionally) same
 * identity + same camera entries, sorts ascending by distance with ties broken
 * by gallery index.
 */
inline QueryRanking rank_query(const DistanceMatrix &dist, Eigen::Index q, const std::vector<SampleMeta> &q_meta,
                               const std::vector<SampleMeta> &g_meta, const EvalProtocol &protocol) {
  const auto &qm = q_meta[static_cast<std::size_t>(q)];
  std::vector<std::size_t> kept;
  for (std::size_t g = 0; g < g_meta.size(); ++g) {
    const auto &gm = g_meta[g];
    if (protocol.junk_ids.count(gm.identity))
      continue;
    if (protocol.exclude_same_id_same_cam && gm.identity == qm.identity && gm.camera == qm.camera)
      continue;
    kept.push_back(g);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    return dist(q, static_cast<Eigen::Index>(a)) < dist(q, static_cast<Eigen::Index>(b));
  });
  QueryRanking r;
  for (std::size_t pos = 0; pos < kept.size(); ++pos)
    if (g_meta[kept[pos]].identity == qm.identity)
      r.match_positions.push_back(pos + 1);
  return r;
}

/// Mean over true matches of precision at that match's rank.
inline double average_precision(const QueryRanking &r) {
  if (r.match_positions.empty())
    return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < r.match_positions.size(); ++i)
    acc += static_cast<double>(i + 1) / static_cast<double>(r.match_positions[i]);
  return acc / static_cast<double>(r.match_positions.size());
}

/**
 * CMC and mAP. Queries whose identity is junk, or that have no valid true
 * match, are excluded (or scored zero under NoMatchPolicy::score_zero) and counted.
 */
inline EvalReport evaluate(const DistanceMatrix &dist, const std::vector<SampleMeta> &q_meta,
                           const std::vector<SampleMeta> &g_meta, const EvalProtocol &protocol = {},
                           std::uint64_t seed = 0) {
  if (static_cast<std::size_t>(dist.rows()) != q_meta.size() || static_cast<std::size_t>(dist.cols()) != g_meta.size())
    throw ArgumentError("evaluate: metadata lengths do not match the distance matrix");
  EvalReport rep;
  rep.n_query = q_meta.size();
  rep.n_gallery = g_meta.size();
  rep.protocol = protocol;
  rep.seed = seed;
  std::vector<double> hits(g_meta.size() + 1, 0.0); // hits[p] = queries whose first match is at p
  double ap_sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t q = 0; q < q_meta.size(); ++q) {
    QueryRanking r;
    if (!protocol.junk_ids.count(q_meta[q].identity))
      r = rank_query(dist, static_cast<Eigen::Index>(q), q_meta, g_meta, protocol);
    if (!r.valid()) {
      ++rep.excluded_queries;
      if (protocol.no_match == NoMatchPolicy::score_zero)
        ++scored;
      continue;
    }
    ap_sum += average_precision(r);
    hits[r.match_positions.front()] += 1.0;
    ++scored;
  }
  rep.cmc.assign(g_meta.size(), 0.0);
  if (scored > 0) {
    double running = 0.0;
    for (std::size_t k = 1; k <= g_meta.size(); ++k) {
      running += hits[k];
      rep.cmc[k - 1] = running / static_cast<double>(scored);
    }
    rep.mAP = ap_sum / static_cast<double>(scored);
  }
  return rep;
}

/// Pools query rows per (identity, camera) group, groups ordered by first appearance.
inline std::pair<EmbeddingMatrix, std::vector<SampleMeta>>
pool_multi_query(const EmbeddingMatrix &features, const std::vector<SampleMeta> &q_meta,
                 Pooling pooling = Pooling::mean) {
  if (static_cast<std::size_t>(features.rows()) != q_meta.size())
    throw ArgumentError("pool_multi_query: metadata length does not match feature rows");
  std::vector<SampleMeta> groups;
  std::vector<std::vector<Eigen::Index>> members;
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t i = 0; i < q_meta.size(); ++i) {
    auto key = std::make_pair(q_meta[i].identity, q_meta[i].camera);
    auto [it, inserted] = index.try_emplace(key, groups.size());
    if (inserted) {
      groups.push_back(q_meta[i]);
      members.emplace_back();
    }
    members[it->second].push_back(static_cast<Eigen::Index>(i));
  }
  EmbeddingMatrix pooled(static_cast<Eigen::Index>(groups.size()), features.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto row = pooled.row(static_cast<Eigen::Index>(g));
    row = features.row(members[g].front());
    for (std::size_t k = 1; k < members[g].size(); ++k) {
      if (pooling == Pooling::mean)
        row += features.row(members[g][k]);
      else
        row = row.cwiseMax(features.row(members[g][k]));
    }
    if (pooling == Pooling::mean)
      row /= static_cast<double>(members[g].size());
  }
  return {std::move(pooled), std::move(groups)};
}

// ---------------------------------------------------------------------------
// k-reciprocal re-ranking
// ---------------------------------------------------------------------------

struct RerankParams {
  int k1 = 20;
  int k2 = 6;
  double lambda = 0.3;
};

namespace detail {

/// Row-wise ascending order, ties by column index.
inline std::vector<std::vector<int>> argsort_rows(const Matrix &m) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto &r = out[static_cast<std::size_t>(i)];
    r.resize(static_cast<std::size_t>(m.cols()));
    std::iota(r.begin(), r.end(), 0);
    std::stable_sort(r.begin(), r.end(), [&](int a, int b) { return m(i, a) < m(i, b); });
  }
  return out;
}

/// Members of the top-(k+1) list of `i` whose own top-(k+1) list contains `i`, in rank order.
inline std::vector<int> k_reciprocal(const std::vector<std::vector<int>> &rank, int i, int k) {
  std::vector<int> out;
  const auto &fwd = rank[static_cast<std::size_t>(i)];
  for (int t = 0; t <= k && t < static_cast<int>(fwd.size()); ++t) {
    const int cand = fwd[static_cast<std::size_t>(t)];
    const auto &back = rank[static_cast<std::size_t>(cand)];
    const auto stop = back.begin() + std::min<std::ptrdiff_t>(k + 1, static_cast<std::ptrdiff_t>(back.size()));
    if (std::find(back.begin(), stop, i) != stop)
      out.push_back(cand);
  }
  return out;
}

} // namespace detail

/**
 * k-reciprocal encoding re-ranking.
 *
 * Neighbourhoods are computed on the joint (query + gallery) squared
 * distances, column-normalized by their maximum. Each sample's k1-reciprocal
 * set is expanded with the round(k1/2)-reciprocal sets of its members that
 * overlap it by more than 2/3, encoded as Gaussian-weighted vectors, averaged
 * over the k2 nearest neighbours, and compared by a Jaccard distance. The
 * result is lambda * d_original + (1 - lambda) * d_jaccard on the query x gallery block.
 */
inline DistanceMatrix rerank_k_reciprocal(const DistanceMatrix &qg, const DistanceMatrix &qq, const DistanceMatrix &gg,
                                          const RerankParams &p = {}) {
  const Eigen::Index nq = qg.rows(), ng = qg.cols();
  if (qq.rows() != nq || qq.cols() != nq || gg.rows() != ng || gg.cols() != ng)
    throw ArgumentError("rerank_k_reciprocal: inconsistent distance matrix dimensions");
  if (!(p.k2 >= 1 && p.k1 > p.k2))
    throw ArgumentError("rerank_k_reciprocal: need k1 > k2 >= 1");
  if (p.k1 >= ng)
    throw ArgumentError("rerank_k_reciprocal: k1 (" + std::to_string(p.k1) + ") must be smaller than the gallery size (" +
                        std::to_string(ng) + ")");
  if (!(p.lambda >= 0.0 && p.lambda <= 1.0))
    throw ArgumentError("rerank_k_reciprocal: lambda must be in [0,1]");
  if (p.lambda == 1.0)
    return qg;

  const Eigen::Index n = nq + ng;
  Matrix all(n, n);
  all.topLeftCorner(nq, nq) = qq.values;
  all.topRightCorner(nq, ng) = qg.values;
  all.bottomLeftCorner(ng, nq) = qg.values.transpose();
  all.bottomRightCorner(ng, ng) = gg.values;
  if (qg.metric == Metric::euclidean)
    all = all.array().square().matrix();
  // Normalize each column by its maximum, then transpose (row i holds column i).
  Matrix norm(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mx = all.col(j).maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
      norm(j, i) = mx > 0.0 ? all(i, j) / mx : 0.0;
  }
  const auto rank = detail::argsort_rows(norm);
  const int half = static_cast<int>(std::nearbyint(p.k1 / 2.0));

  Matrix V = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto recip = detail::k_reciprocal(rank, i, p.k1);
    std::vector<int> expanded = recip;
    for (int cand : recip) {
      const auto cand_recip = detail::k_reciprocal(rank, cand, half);
      std::size_t overlap = 0;
      for (int c : cand_recip)
        if (std::find(recip.begin(), recip.end(), c) != recip.end())
          ++overlap;
      if (static_cast<double>(overlap) > 2.0 / 3.0 * static_cast<double>(cand_recip.size()))
        expanded.insert(expanded.end(), cand_recip.begin(), cand_recip.end());
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    double total = 0.0;
    for (int j : expanded)
      total += std::exp(-norm(i, j));
    for (int j : expanded)
      V(i, j) = std::exp(-norm(i, j)) / total;
  }
  if (p.k2 != 1) {
    Matrix Vqe = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < p.k2; ++t)
        Vqe.row(i) += V.row(rank[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]);
      Vqe.row(i) /= static_cast<double>(p.k2);
    }
    V = std::move(Vqe);
  }

  // Inverted index: for each column, the rows with non-zero weight.
  std::vector<std::vector<int>> inv(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (V(i, j) != 0.0)
        inv[static_cast<std::size_t>(j)].push_back(i);

  DistanceMatrix out{Matrix(nq, ng), qg.metric};
  std::vector<double> min_sum(static_cast<std::size_t>(n));
  for (int i = 0; i < nq; ++i) {
    std::fill(min_sum.begin(), min_sum.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      if (V(i, j) == 0.0)
        continue;
      for (int r : inv[static_cast<std::size_t>(j)])
        min_sum[static_cast<std::size_t>(r)] += std::min(V(i, j), V(r, j));
    }
    for (Eigen::Index g = 0; g < ng; ++g) {
      const double m = min_sum[static_cast<std::size_t>(nq + g)];
      const double jaccard = 1.0 - m / (2.0 - m);
      out.values(i, g) = p.lambda * qg.values(i, g) + (1.0 - p.lambda) * jaccard;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json protocol_json(const EvalProtocol &p) {
  nlohmann::ordered_json j;
  j["exclude_same_id_same_cam"] = p.exclude_same_id_same_cam;
  j["junk_ids"] = std::vector<int>(p.junk_ids.begin(), p.junk_ids.end());
  j["query_mode"] = p.query_mode == QueryMode::single ? "single" : "multi";
  j["no_match"] = p.no_match == NoMatchPolicy::exclude ? "exclude" : "score_zero";
  j["pooling"] = p.pooling == Pooling::mean ? "mean" : "max";
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport &r) {
  nlohmann::ordered_json j;
  j["map"] = r.mAP;
  j["cmc"] = {{"1", r.rank(1)}, {"5", r.rank(5)}, {"10", r.rank(10)}};
  j["n_query"] = r.n_query;
  j["n_gallery"] = r.n_gallery;
  j["excluded_queries"] = r.excluded_queries;
  j["protocol"] = protocol_json(r.protocol);
  j["seed"] = r.seed;
  return j;
}

} // namespace reidaug::eval
