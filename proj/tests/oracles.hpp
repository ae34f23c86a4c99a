#pragma once

// Deliberately naive reference implementations used to cross-check the evaluation kit.
// They favour obviousness over speed: explicit sets, full sorts, dense loops.

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "reidaug/evalkit.hpp"
#include "reidaug/rng.hpp"

namespace reidaug::testing {

struct OracleMetrics {
  double map = 0.0;
  std::vector<double> cmc;
  std::size_t excluded = 0;
};

/// Single-query CMC / mAP by explicit sorting of (distance, index) pairs.
inline OracleMetrics oracle_metrics(const eval::Matrix &d, const std::vector<eval::SampleMeta> &q,
                                    const std::vector<eval::SampleMeta> &g, const std::set<int> &junk,
                                    bool drop_same_cam) {
  OracleMetrics out;
  out.cmc.assign(g.size(), 0.0);
  std::size_t scored = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> list;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (junk.count(g[j].identity))
        continue;
      if (drop_same_cam && g[j].identity == q[i].identity && g[j].camera == q[i].camera)
        continue;
      list.emplace_back(d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), j);
    }
    std::sort(list.begin(), list.end()); // lexicographic: distance, then index
    std::vector<int> relevant;
    for (const auto &e : list)
      relevant.push_back(g[e.second].identity == q[i].identity ? 1 : 0);
    const int n_rel = std::count(relevant.begin(), relevant.end(), 1);
    if (junk.count(q[i].identity) || n_rel == 0) {
      ++out.excluded;
      continue;
    }
    ++scored;
    double ap = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < relevant.size(); ++k)
      if (relevant[k]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    out.map += ap / n_rel;
    const auto first = static_cast<std::size_t>(std::find(relevant.begin(), relevant.end(), 1) - relevant.begin());
    for (std::size_t k = first; k < g.size(); ++k)
      out.cmc[k] += 1.0;
  }
  if (scored) {
    out.map /= static_cast<double>(scored);
    for (auto &c : out.cmc)
      c /= static_cast<double>(scored);
  }
  return out;
}

/// Round half to even.
inline int round_half_even(double x) {
  const double f = std::floor(x);
  const double diff = x - f;
  if (diff < 0.5)
    return static_cast<int>(f);
  if (diff > 0.5)
    return static_cast<int>(f) + 1;
  return static_cast<int>(f) % 2 == 0 ? static_cast<int>(f) : static_cast<int>(f) + 1;
}

/// k-reciprocal re-ranking with explicit neighbour sets.
inline eval::Matrix oracle_rerank(const eval::Matrix &qg, const eval::Matrix &qq, const eval::Matrix &gg, int k1,
                                  int k2, double lambda, bool squared_input) {
  const int nq = static_cast<int>(qg.rows()), ng = static_cast<int>(qg.cols()), n = nq + ng;
  auto raw = [&](int a, int b) {
    double v;
    if (a < nq && b < nq)
      v = qq(a, b);
    else if (a < nq)
      v = qg(a, b - nq);
    else if (b < nq)
      v = qg(b, a - nq);
    else
      v = gg(a - nq, b - nq);
    return squared_input ? v : v * v;
  };
  // Row a of the normalized matrix holds column a of the joint matrix divided by that column's maximum.
  std::vector<std::vector<double>> dist(n, std::vector<double>(n));
  for (int a = 0; a < n; ++a) {
    double mx = 0.0;
    for (int b = 0; b < n; ++b)
      mx = std::max(mx, raw(b, a));
    for (int b = 0; b < n; ++b)
      dist[a][b] = mx > 0.0 ? raw(b, a) / mx : 0.0;
  }
  std::vector<std::vector<int>> order(n);
  for (int a = 0; a < n; ++a) {
    std::vector<std::pair<double, int>> row;
    for (int b = 0; b < n; ++b)
      row.emplace_back(dist[a][b], b);
    std::sort(row.begin(), row.end());
    for (const auto &e : row)
      order[a].push_back(e.second);
  }
  auto top = [&](int a, int k) {
    std::set<int> s;
    for (int t = 0; t <= k && t < n; ++t)
      s.insert(order[a][t]);
    return s;
  };
  auto reciprocal = [&](int a, int k) {
    std::set<int> s;
    for (int c : top(a, k))
      if (top(c, k).count(a))
        s.insert(c);
    return s;
  };
  const int half = round_half_even(k1 / 2.0);
  std::vector<std::vector<double>> V(n, std::vector<double>(n, 0.0));
  for (int a = 0; a < n; ++a) {
    const auto R = reciprocal(a, k1);
    std::set<int> expanded = R;
    for (int c : R) {
      const auto C = reciprocal(c, half);
      int common = 0;
      for (int x : C)
        common += R.count(x) ? 1 : 0;
      if (3 * common > 2 * static_cast<int>(C.size()))
        expanded.insert(C.begin(), C.end());
    }
    double z = 0.0;
    for (int b : expanded)
      z += std::exp(-dist[a][b]);
    for (int b : expanded)
      V[a][b] = std::exp(-dist[a][b]) / z;
  }
  if (k2 != 1) {
    auto W = V;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double s = 0.0;
        for (int t = 0; t < k2; ++t)
          s += V[order[a][t]][b];
        W[a][b] = s / k2;
      }
    V = W;
  }
  eval::Matrix out(nq, ng);
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < ng; ++j) {
      double inter = 0.0;
      for (int b = 0; b < n; ++b)
        inter += std::min(V[i][b], V[nq + j][b]);
      const double jac = 1.0 - inter / (2.0 - inter);
      out(i, j) = lambda * qg(i, j) + (1.0 - lambda) * jac;
    }
  return out;
}

/// Random embeddings with labels; identities drawn from a small pool so matches are common.
struct RandomInstance {
  eval::Matrix q, g;
  std::vector<eval::SampleMeta> q_meta, g_meta;
};

inline RandomInstance random_instance(Rng &rng, int nq, int ng, int dim, int n_ids, double junk_rate = 0.0) {
  RandomInstance r{eval::Matrix(nq, dim), eval::Matrix(ng, dim), {}, {}};
  for (int i = 0; i < nq; ++i) {
    for (int k = 0; k < dim; ++k)
      r.q(i, k) = rng.normal();
    r.q_meta.push_back({static_cast<int>(rng.uniform_int(0, n_ids - 1)), static_cast<int>(rng.uniform_int(1, 3))});
  }
  for (int j = 0; j < ng; ++j) {
    for (int k = 0; k < dim; ++k)
      r.g(j, k) = rng.normal();
    const int id = rng.uniform() < junk_rate ? -1 : static_cast<int>(rng.uniform_int(0, n_ids - 1));
    r.g_meta.push_back({id, static_cast<int>(rng.uniform_int(1, 3))});
  }
  return r;
}

/// Worst absolute disagreement between the library metrics and the oracle on one random instance.
inline double metric_disagreement(Rng &rng) {
  const int nq = static_cast<int>(rng.uniform_int(1, 12)), ng = static_cast<int>(rng.uniform_int(1, 30));
  const auto inst = random_instance(rng, nq, ng, static_cast<int>(rng.uniform_int(1, 6)),
                                    static_cast<int>(rng.uniform_int(1, 6)), 0.1);
  const bool drop = rng.uniform() < 0.8;
  const auto d = eval::pairwise_distances(inst.q, inst.g);
  eval::EvalProtocol proto;
  proto.exclude_same_id_same_cam = drop;
  const auto rep = eval::evaluate(d, inst.q_meta, inst.g_meta, proto);
  const auto ref = oracle_metrics(d.values, inst.q_meta, inst.g_meta, proto.junk_ids, drop);
  double worst = std::abs(rep.mAP - ref.map);
  for (std::size_t k = 0; k < ref.cmc.size(); ++k)
    worst = std::max(worst, std::abs(rep.cmc[k] - ref.cmc[k]));
  if (rep.excluded_queries != ref.excluded || rep.cmc.size() != ref.cmc.size())
    worst = std::max(worst, 1.0);
  return worst;
}

/// Worst absolute disagreement between the library re-ranking and the oracle on one random instance.
inline double rerank_disagreement(Rng &rng) {
  const int nq = static_cast<int>(rng.uniform_int(1, 8));
  const int k1 = static_cast<int>(rng.uniform_int(2, 9));
  const int k2 = static_cast<int>(rng.uniform_int(1, k1 - 1));
  const int ng = static_cast<int>(rng.uniform_int(k1 + 1, k1 + 15));
  const double lambda = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
  const auto inst = random_instance(rng, nq, ng, static_cast<int>(rng.uniform_int(2, 6)), 4);
  const auto metric = rng.uniform() < 0.5 ? eval::Metric::euclidean : eval::Metric::squared_euclidean;
  const auto qg = eval::pairwise_distances(inst.q, inst.g, metric);
  const auto qq = eval::pairwise_distances(inst.q, inst.q, metric);
  const auto gg = eval::pairwise_distances(inst.g, inst.g, metric);
  const auto got = eval::rerank_k_reciprocal(qg, qq, gg, {k1, k2, lambda});
  const auto ref =
      oracle_rerank(qg.values, qq.values, gg.values, k1, k2, lambda, metric == eval::Metric::squared_euclidean);
  return (got.values - ref).cwiseAbs().maxCoeff();
}

} // namespace reidaug::testing
