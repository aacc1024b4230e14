#include "profs/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace profs {

namespace {

void tally(FeasibilityReport& r, const Matrix& e, const std::vector<int>& labels, int i, int j,
           const ConstraintSpec& spec) {
  const double d = (e.col(i) - e.col(j)).norm();
  const bool positive = labels[i] == labels[j];
  const double excess = positive ? d - spec.eps_plus : spec.eps_minus - d;
  ++r.pairs_checked;
  if (excess <= spec.tolerance) return;
  if (positive)
    ++r.positive_violations;
  else
    ++r.negative_violations;
  const std::pair<int, int> key{std::min(i, j), std::max(i, j)};
  if (!r.worst_pair || excess > r.max_violation ||
      (excess == r.max_violation && key < *r.worst_pair)) {
    r.max_violation = excess;
    r.worst_pair = key;
  }
}

void finish(FeasibilityReport& r) { r.feasible = r.positive_violations == 0 && r.negative_violations == 0; }

void check_sizes(const Matrix& e, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(e.cols()) != labels.size())
    throw Error("embedding count does not match label count");
}

}  // namespace

FeasibilityReport check_full(const Matrix& e, const std::vector<int>& labels,
                             const ConstraintSpec& spec) {
  check_sizes(e, labels);
  FeasibilityReport r;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) tally(r, e, labels, i, j, spec);
  finish(r);
  return r;
}

FeasibilityReport check_relaxed(const Matrix& e, const std::vector<int>& labels,
                                const std::vector<int>& representatives,
                                const ConstraintSpec& spec) {
  check_sizes(e, labels);
  const int n = static_cast<int>(labels.size());
  std::set<int> covered;
  std::set<int> rep_set;
  for (int r : representatives) {
    if (r < 0 || r >= n) throw Error("representative index out of range");
    covered.insert(labels[r]);
    rep_set.insert(r);
  }
  for (int l : labels)
    if (!covered.count(l))
      throw Error("missing representative for class " + std::to_string(l));

  FeasibilityReport r;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rep_set.count(i) || rep_set.count(j)) tally(r, e, labels, i, j, spec);
  finish(r);
  return r;
}

std::pair<double, double> proposition1_epsilons(LossKind kind, double epsilon, double delta,
                                                double eps_plus) {
  if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
  switch (kind) {
    case LossKind::contrastive:
      return {eps_plus, epsilon};
    case LossKind::margin:
      if (!(delta >= 0.0)) throw Error("delta must be non-negative");
      if (delta >= epsilon) throw Error("margin requires delta < epsilon");
      return {epsilon - delta, epsilon + delta};
    case LossKind::triplet:
      return {eps_plus, std::sqrt(eps_plus * eps_plus + epsilon)};
    case LossKind::projection:
      break;
  }
  throw Error("no epsilon rule for loss kind " + to_string(kind));
}

TupleSet all_pairs(const std::vector<int>& labels) {
  TupleSet t;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) t.pairs.push_back({i, j, labels[i] == labels[j] ? 1 : 0});
  return t;
}

TupleSet all_triplets(const std::vector<int>& labels) {
  TupleSet t;
  const int n = static_cast<int>(labels.size());
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int q = 0; q < n; ++q)
        if (labels[q] != labels[a]) t.triplets.push_back({a, p, q});
    }
  return t;
}

Proposition1Check check_proposition1(const Matrix& e, const std::vector<int>& labels,
                                     LossKind kind, double epsilon, double delta,
                                     double eps_plus) {
  Proposition1Check out;
  const auto [ep, em] = proposition1_epsilons(kind, epsilon, delta, eps_plus);
  out.report = check_full(e, labels, {ep, em, 1e-9});

  const TupleSet tuples = kind == LossKind::triplet ? all_triplets(labels) : all_pairs(labels);
  const bool has_terms = kind == LossKind::triplet ? !tuples.triplets.empty() : !tuples.pairs.empty();
  out.loss = has_terms ? aggregate(e, tuples, {kind, epsilon, delta}) : 0.0;
  const double n = static_cast<double>(labels.size());
  out.loss_bound = kind == LossKind::contrastive ? n * n * ep * ep : 1e-12;
  out.holds = out.report.feasible && out.loss <= out.loss_bound;
  return out;
}

bool verify_proposition1(const Matrix& e, const std::vector<int>& labels, LossKind kind,
                         double epsilon, double delta, double eps_plus) {
  return check_proposition1(e, labels, kind, epsilon, delta, eps_plus).holds;
}

std::string format_report(const FeasibilityReport& r, const std::string& section) {
  std::ostringstream out;
  out.precision(17);
  out << "[" << section << "]\n";
  out << "feasible=" << (r.feasible ? "true" : "false") << "\n";
  out << "pairs_checked=" << r.pairs_checked << "\n";
  out << "positive_violations=" << r.positive_violations << "\n";
  out << "negative_violations=" << r.negative_violations << "\n";
  out << "max_violation=" << r.max_violation << "\n";
  if (r.worst_pair)
    out << "worst_pair=" << r.worst_pair->first << "," << r.worst_pair->second << "\n";
  else
    out << "worst_pair=none\n";
  return out.str();
}

}  // namespace profs
