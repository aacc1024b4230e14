#ifndef PROFS_FEASIBILITY_HPP_
#define PROFS_FEASIBILITY_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "profs/losses.hpp"
#include "profs/numcore.hpp"

namespace profs {

struct ConstraintSpec {
  double eps_plus = 0.5;
  double eps_minus = 1.0;
  double tolerance = 1e-9;
};

struct FeasibilityReport {
  bool feasible = true;
  long positive_violations = 0;
  long negative_violations = 0;
  /// Largest constraint excess (d - eps+ or eps- - d); 0 when feasible.
  double max_violation = 0.0;
  std::optional<std::pair<int, int>> worst_pair;
  long pairs_checked = 0;
};

/// Every unordered pair i < j: positives must lie within eps+, negatives
/// beyond eps-. Embeddings are columns.
FeasibilityReport check_full(const Matrix& embeddings, const std::vector<int>& labels,
                             const ConstraintSpec& spec);

/// Only pairs containing a representative. `representatives` holds one
/// sample index per class present in `labels`.
FeasibilityReport check_relaxed(const Matrix& embeddings, const std::vector<int>& labels,
                                const std::vector<int>& representatives,
                                const ConstraintSpec& spec);

/// Contrastive stands in eps+ -> 0 with this value.
inline constexpr double kContrastiveEpsPlusSmall = 1e-6;

/// (eps+, eps-) under which zero loss and feasibility coincide:
///   contrastive: (eps_plus_small, epsilon)
///   margin:      (epsilon - delta, epsilon + delta)
///   triplet:     (eps_plus, sqrt(eps_plus^2 + epsilon))
/// `eps_plus` is the caller-chosen eps+ for contrastive and triplet.
std::pair<double, double> proposition1_epsilons(LossKind kind, double epsilon, double delta,
                                                double eps_plus = kContrastiveEpsPlusSmall);

struct Proposition1Check {
  bool holds = false;
  FeasibilityReport report;
  double loss = 0.0;
  double loss_bound = 0.0;
};

/// Feasibility under the derived epsilons, and the aggregate loss over
/// every valid pair or triplet of the layout.
Proposition1Check check_proposition1(const Matrix& embeddings, const std::vector<int>& labels,
                                     LossKind kind, double epsilon, double delta,
                                     double eps_plus = kContrastiveEpsPlusSmall);

bool verify_proposition1(const Matrix& embeddings, const std::vector<int>& labels, LossKind kind,
                         double epsilon, double delta,
                         double eps_plus = kContrastiveEpsPlusSmall);

/// Every pair i < j, or every (anchor, positive, negative) triple.
TupleSet all_pairs(const std::vector<int>& labels);
TupleSet all_triplets(const std::vector<int>& labels);

std::string format_report(const FeasibilityReport& r, const std::string& section);

}  // namespace profs

#endif  // PROFS_FEASIBILITY_HPP_
