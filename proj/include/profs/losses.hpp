#ifndef PROFS_LOSSES_HPP_
#define PROFS_LOSSES_HPP_

#include <optional>
#include <string>
#include <vector>

#include "profs/numcore.hpp"

namespace profs {

enum class LossKind { contrastive, triplet, margin, projection };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct MarginParams {
  double epsilon = 1.0;  // boundary between positive and negative pairs
  double delta = 0.2;    // separation margin
  bool epsilon_trainable = true;
};

struct ProjectionLossParams {
  double eps_plus = 0.5;
  double eps_minus = 1.0;
  double lambda = 1e-3;
  void validate() const;
};

/// Pair (i, j) with y = 1 for same class. Indices are batch positions.
struct PairTuple {
  int i = 0;
  int j = 0;
  int y = 0;
  bool operator==(const PairTuple&) const = default;
};

struct TripletTuple {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
  bool operator==(const TripletTuple&) const = default;
};

struct TupleSet {
  std::vector<PairTuple> pairs;
  std::vector<TripletTuple> triplets;
  bool operator==(const TupleSet&) const = default;
};

// Per-term losses.
double contrastive_term(double d, int y, double epsilon);
double triplet_term(double d_pos, double d_neg, double epsilon);
double margin_term(double d, int y, const MarginParams& p);

/// Which pairwise loss `aggregate` evaluates and its hyper-parameters.
/// For margin, `epsilon` is the current boundary value (trainable or not).
struct PairLoss {
  LossKind kind = LossKind::margin;
  double epsilon = 1.0;
  double delta = 0.2;
};

/// Mean of the per-tuple terms over the tuple list matching `loss.kind`
/// (pairs for contrastive/margin, triplets for triplet).
double aggregate(const Matrix& embeddings, const TupleSet& tuples, const PairLoss& loss);

/// As `aggregate`, also accumulating d/d(embeddings) into `d_embeddings`
/// and, when non-null, d/d(epsilon) into `d_epsilon`.
double aggregate_with_grad(const Matrix& embeddings, const TupleSet& tuples, const PairLoss& loss,
                           Matrix& d_embeddings, double* d_epsilon);

/// Pairs anchored at a representative: (rep, j) for every other batch
/// position j. Two representatives of different classes yield one pair,
/// anchored at the lower label.
std::vector<PairTuple> representative_pairs(const std::vector<int>& labels,
                                            const std::vector<int>& rep_positions);

/// Unnormalized hinge sum over representative-anchored pairs:
/// y [d - eps+]_+ + (1 - y) [eps- - d]_+.
double projection_hinge_sum(const Matrix& embeddings, const std::vector<int>& labels,
                            const std::vector<int>& rep_positions, double eps_plus,
                            double eps_minus, Matrix* d_embeddings = nullptr);

/// Hinge sum at `params` plus (lambda / 2) ||anchor - params||^2.
double projection_objective(const ParamVector& params, const ParamVector& anchor,
                            const MlpSpec& spec, const Matrix& inputs,
                            const std::vector<int>& labels, const std::vector<int>& rep_positions,
                            const ProjectionLossParams& p);

/// base + (lambda / 2) ||anchor - params||^2.
double generic_regularized(const ParamVector& params, const ParamVector& anchor, double base_loss,
                           double lambda);

/// Parameter-space term (lambda / 2) ||anchor - params||^2 with gradient
/// lambda (params - anchor). The returned functor references `anchor`.
std::function<double(const ParamVector&, GradVector&)> anchor_regularizer(
    const ParamVector& anchor, double lambda);

/// Objective for a pairwise loss over fixed tuples. When `trainable_epsilon`
/// is set, epsilon is read from extras[0] and receives its gradient there.
Objective make_pair_objective(const TupleSet& tuples, const PairLoss& loss, bool trainable_epsilon);

Objective make_projection_objective(const std::vector<int>& labels,
                                    const std::vector<int>& rep_positions, double eps_plus,
                                    double eps_minus);

}  // namespace profs

#endif  // PROFS_LOSSES_HPP_
