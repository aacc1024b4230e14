#ifndef PROFS_EVALMETRICS_HPP_
#define PROFS_EVALMETRICS_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "profs/numcore.hpp"

namespace profs {

struct EvalReport {
  std::map<int, double> recall_at;
  double nmi = 0.0;
  double f1 = 0.0;
  int num_queries = 0;
  double kmeans_inertia = 0.0;
};

/// Fraction of queries with a same-label sample among their K nearest
/// neighbours (query excluded, ties to the lower index). `threads` splits
/// the queries; the result does not depend on it.
std::map<int, double> recall_at_k(const Matrix& embeddings, const std::vector<int>& labels,
                                  const std::vector<int>& ks, int threads = 1);

/// Same quantity by fully sorting every query's distance row.
std::map<int, double> brute_force_retrieval_oracle(const Matrix& embeddings,
                                                   const std::vector<int>& labels,
                                                   const std::vector<int>& ks);

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centroids;
  double inertia = 0.0;
  /// Inertia after each assignment step, then after the final update.
  std::vector<double> inertia_history;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 300;

/// k-means++ seeding then Lloyd iterations until the assignment stops
/// changing or kKMeansMaxIterations is reached.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed);

/// 2 I(A; L) / (H(A) + H(L)).
double nmi(const std::vector<int>& assignments, const std::vector<int>& labels);

/// Pair-counting F1 over all unordered sample pairs.
double pairwise_f1(const std::vector<int>& assignments, const std::vector<int>& labels);

/// Recall@K for `ks`, plus k-means (k = number of labels) scored by NMI and F1.
EvalReport evaluate_embeddings(const Matrix& embeddings, const std::vector<int>& labels,
                               const std::vector<int>& ks, std::uint64_t seed, int threads = 1);

}  // namespace profs

#endif  // PROFS_EVALMETRICS_HPP_
