#include "profs/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <thread>

namespace profs {

namespace {

using Neighbor = std::pair<double, int>;  // (distance, index); lexicographic order breaks ties

void check_retrieval_args(const Matrix& e, const std::vector<int>& labels,
                          const std::vector<int>& ks) {
  if (static_cast<std::size_t>(e.cols()) != labels.size())
    throw Error("embedding count does not match label count");
  for (int k : ks) {
    if (k < 1) throw Error("K must be positive");
    if (k >= static_cast<int>(labels.size()))
      throw Error("K = " + std::to_string(k) + " must be smaller than the number of samples");
  }
}

std::vector<Neighbor> distance_row(const Matrix& e, int q) {
  std::vector<Neighbor> row;
  row.reserve(static_cast<std::size_t>(e.cols()) - 1);
  for (int j = 0; j < e.cols(); ++j)
    if (j != q) row.emplace_back((e.col(q) - e.col(j)).norm(), j);
  return row;
}

// Rank of the first same-label neighbour, or the row length when none.
int first_hit(const std::vector<Neighbor>& sorted, const std::vector<int>& labels, int q, int limit) {
  for (int r = 0; r < limit; ++r)
    if (labels[sorted[r].second] == labels[q]) return r;
  return limit;
}

std::map<int, double> summarize(const std::vector<int>& hit_rank, const std::vector<int>& ks) {
  std::map<int, double> out;
  const double n = static_cast<double>(hit_rank.size());
  for (int k : ks) {
    const auto hits = std::count_if(hit_rank.begin(), hit_rank.end(), [k](int r) { return r < k; });
    out[k] = static_cast<double>(hits) / n;
  }
  return out;
}

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.col(i) - b.col(j)).squaredNorm();
}

}  // namespace

std::map<int, double> recall_at_k(const Matrix& e, const std::vector<int>& labels,
                                  const std::vector<int>& ks, int threads) {
  check_retrieval_args(e, labels, ks);
  const int n = static_cast<int>(labels.size());
  const int k_max = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  std::vector<int> hit_rank(static_cast<std::size_t>(n));

  auto work = [&](int begin, int end) {
    for (int q = begin; q < end; ++q) {
      auto row = distance_row(e, q);
      std::partial_sort(row.begin(), row.begin() + k_max, row.end());
      hit_rank[q] = first_hit(row, labels, q, k_max);
    }
  };
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return summarize(hit_rank, ks);
}

std::map<int, double> brute_force_retrieval_oracle(const Matrix& e, const std::vector<int>& labels,
                                                   const std::vector<int>& ks) {
  check_retrieval_args(e, labels, ks);
  const int n = static_cast<int>(labels.size());
  std::vector<int> hit_rank(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) {
    auto row = distance_row(e, q);
    std::sort(row.begin(), row.end());
    hit_rank[q] = first_hit(row, labels, q, static_cast<int>(row.size()));
  }
  return summarize(hit_rank, ks);
}

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed) {
  const int n = static_cast<int>(x.cols());
  if (k < 1) throw Error("k must be positive");
  if (k > n) throw Error("k = " + std::to_string(k) + " exceeds the number of points");

  Rng rng(seed);
  KMeansResult res;
  res.centroids.resize(x.rows(), k);

  // k-means++ seeding.
  std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  int pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
  for (int c = 0; c < k; ++c) {
    chosen[pick] = 1;
    res.centroids.col(c) = x.col(pick);
    if (c + 1 == k) break;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], sq_dist(x, i, res.centroids, c));
      total += min_d2[i];
    }
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = -1;
      for (int i = 0; i < n; ++i) {
        target -= min_d2[i];
        if (target < 0.0 && min_d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0)
        for (int i = n - 1; i >= 0; --i)
          if (min_d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      std::vector<int> rest;
      for (int i = 0; i < n; ++i)
        if (!chosen[i]) rest.push_back(i);
      pick = rest[std::uniform_int_distribution<int>(0, static_cast<int>(rest.size()) - 1)(rng)];
    }
  }

  res.assignments.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < kKMeansMaxIterations; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(x, i, res.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      inertia += best_d;
      if (res.assignments[i] != best) {
        res.assignments[i] = best;
        changed = true;
      }
    }
    res.inertia_history.push_back(inertia);
    res.iterations = iter + 1;
    if (!changed) break;

    Matrix sums = Matrix::Zero(x.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.col(res.assignments[i]) += x.col(i);
      ++counts[res.assignments[i]];
    }
    // Empty clusters keep their previous centroid.
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) res.centroids.col(c) = sums.col(c) / static_cast<double>(counts[c]);
  }

  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) res.inertia += sq_dist(x, i, res.centroids, res.assignments[i]);
  res.inertia_history.push_back(res.inertia);
  return res;
}

double nmi(const std::vector<int>& a, const std::vector<int>& l) {
  if (a.size() != l.size()) throw Error("assignment and label lengths differ");
  if (a.empty()) throw Error("nmi of an empty input");
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca, cl;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cl[l[i]] += 1.0;
    joint[{a[i], l[i]}] += 1.0;
  }
  auto entropy = [n](const std::map<int, double>& c) {
    double h = 0.0;
    for (const auto& [_, v] : c) h -= (v / n) * std::log(v / n);
    return h;
  };
  const double ha = entropy(ca);
  const double hl = entropy(cl);
  if (ha + hl <= 0.0) return 1.0;  // both trivial partitions: identical
  double mi = 0.0;
  for (const auto& [key, v] : joint) mi += (v / n) * std::log(n * v / (ca[key.first] * cl[key.second]));
  return std::clamp(2.0 * mi / (ha + hl), 0.0, 1.0);
}

double pairwise_f1(const std::vector<int>& a, const std::vector<int>& l) {
  if (a.size() != l.size()) throw Error("assignment and label lengths differ");
  if (a.size() < 2) throw Error("pairwise F1 needs at least 2 samples");
  auto pairs = [](double c) { return c * (c - 1.0) / 2.0; };
  std::map<int, double> ca, cl;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cl[l[i]] += 1.0;
    joint[{a[i], l[i]}] += 1.0;
  }
  double tp = 0.0, predicted = 0.0, actual = 0.0;
  for (const auto& [_, v] : joint) tp += pairs(v);
  for (const auto& [_, v] : ca) predicted += pairs(v);
  for (const auto& [_, v] : cl) actual += pairs(v);
  if (predicted == 0.0 || actual == 0.0) return 0.0;
  const double precision = tp / predicted;
  const double recall = tp / actual;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate_embeddings(const Matrix& e, const std::vector<int>& labels,
                               const std::vector<int>& ks, std::uint64_t seed, int threads) {
  EvalReport r;
  r.recall_at = recall_at_k(e, labels, ks, threads);
  r.num_queries = static_cast<int>(labels.size());
  const int k = static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
  const auto km = kmeans(e, k, seed);
  r.nmi = nmi(km.assignments, labels);
  r.f1 = pairwise_f1(km.assignments, labels);
  r.kmeans_inertia = km.inertia;
  return r;
}

}  // namespace profs
