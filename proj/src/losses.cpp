#include "profs/losses.hpp"

#include <algorithm>
#include <cmath>

namespace profs {

namespace {

inline double hinge(double z) { return z > 0.0 ? z : 0.0; }

void check_distance(double d) {
  if (!(d >= 0.0)) throw Error("negative distance");
}

// Adds g * d||a - b|| / da to column a and the opposite to column b.
void add_distance_grad(const Matrix& e, int a, int b, double d, double g, Matrix& out) {
  if (d <= 0.0 || g == 0.0) return;
  Vec64 u = (e.col(a) - e.col(b)) * (g / d);
  out.col(a) += u;
  out.col(b) -= u;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive:
      return "contrastive";
    case LossKind::triplet:
      return "triplet";
    case LossKind::margin:
      return "margin";
    case LossKind::projection:
      return "projection";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "contrastive") return LossKind::contrastive;
  if (name == "triplet") return LossKind::triplet;
  if (name == "margin") return LossKind::margin;
  if (name == "projection") return LossKind::projection;
  throw ValidationError("unknown loss kind '" + name + "'");
}

void ProjectionLossParams::validate() const {
  if (!(eps_plus >= 0.0 && eps_plus < eps_minus))
    throw ValidationError("eps_plus must satisfy 0 <= eps_plus < eps_minus");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
}

double contrastive_term(double d, int y, double epsilon) {
  check_distance(d);
  if (y == 1) return d * d;
  const double h = hinge(epsilon - d);
  return h * h;
}

double triplet_term(double d_pos, double d_neg, double epsilon) {
  check_distance(d_pos);
  check_distance(d_neg);
  return hinge(d_pos * d_pos - d_neg * d_neg + epsilon);
}

double margin_term(double d, int y, const MarginParams& p) {
  if (y == 1) return hinge(d - p.epsilon + p.delta);
  return hinge(p.epsilon + p.delta - d);
}

double aggregate(const Matrix& embeddings, const TupleSet& tuples, const PairLoss& loss) {
  Matrix unused = Matrix::Zero(embeddings.rows(), embeddings.cols());
  return aggregate_with_grad(embeddings, tuples, loss, unused, nullptr);
}

double aggregate_with_grad(const Matrix& e, const TupleSet& tuples, const PairLoss& loss,
                           Matrix& d_emb, double* d_epsilon) {
  double sum = 0.0;
  double d_eps = 0.0;
  switch (loss.kind) {
    case LossKind::contrastive:
    case LossKind::margin: {
      if (tuples.pairs.empty()) throw Error("empty tuple set");
      const double scale = 1.0 / static_cast<double>(tuples.pairs.size());
      const MarginParams mp{loss.epsilon, loss.delta, false};
      for (const auto& t : tuples.pairs) {
        const double d = (e.col(t.i) - e.col(t.j)).norm();
        if (loss.kind == LossKind::contrastive) {
          sum += contrastive_term(d, t.y, loss.epsilon);
          if (t.y == 1) {
            // d(d^2) = 2 (e_i - e_j), well defined at d = 0.
            Vec64 u = 2.0 * scale * (e.col(t.i) - e.col(t.j));
            d_emb.col(t.i) += u;
            d_emb.col(t.j) -= u;
          } else {
            const double h = hinge(loss.epsilon - d);
            add_distance_grad(e, t.i, t.j, d, -2.0 * h * scale, d_emb);
            if (h > 0.0) d_eps += 2.0 * h * scale;
          }
        } else {
          const double v = margin_term(d, t.y, mp);
          sum += v;
          if (v > 0.0) {
            const double sign = t.y == 1 ? 1.0 : -1.0;
            add_distance_grad(e, t.i, t.j, d, sign * scale, d_emb);
            d_eps -= sign * scale;
          }
        }
      }
      sum *= scale;
      break;
    }
    case LossKind::triplet: {
      if (tuples.triplets.empty()) throw Error("empty tuple set");
      const double scale = 1.0 / static_cast<double>(tuples.triplets.size());
      for (const auto& t : tuples.triplets) {
        const Vec64 ap = e.col(t.anchor) - e.col(t.positive);
        const Vec64 an = e.col(t.anchor) - e.col(t.negative);
        const double s = ap.squaredNorm() - an.squaredNorm() + loss.epsilon;
        if (s > 0.0) {
          sum += s;
          d_emb.col(t.anchor) += 2.0 * scale * (ap - an);
          d_emb.col(t.positive) -= 2.0 * scale * ap;
          d_emb.col(t.negative) += 2.0 * scale * an;
          d_eps += scale;
        }
      }
      sum *= scale;
      break;
    }
    case LossKind::projection:
      throw Error("projection loss is not a tuple aggregate");
  }
  if (d_epsilon) *d_epsilon += d_eps;
  return sum;
}

std::vector<PairTuple> representative_pairs(const std::vector<int>& labels,
                                            const std::vector<int>& rep_positions) {
  const int n = static_cast<int>(labels.size());
  std::vector<char> is_rep(labels.size(), 0);
  for (int r : rep_positions) {
    if (r < 0 || r >= n) throw Error("representative position out of range");
    is_rep[r] = 1;
  }
  std::vector<PairTuple> pairs;
  for (int r : rep_positions) {
    for (int j = 0; j < n; ++j) {
      if (j == r) continue;
      if (is_rep[j] && labels[j] <= labels[r]) continue;
      pairs.push_back({r, j, labels[r] == labels[j] ? 1 : 0});
    }
  }
  return pairs;
}

double projection_hinge_sum(const Matrix& e, const std::vector<int>& labels,
                            const std::vector<int>& rep_positions, double eps_plus,
                            double eps_minus, Matrix* d_emb) {
  if (rep_positions.empty()) throw Error("no representative in batch");
  double sum = 0.0;
  for (const auto& t : representative_pairs(labels, rep_positions)) {
    const double d = (e.col(t.i) - e.col(t.j)).norm();
    const double v = t.y == 1 ? hinge(d - eps_plus) : hinge(eps_minus - d);
    if (v > 0.0) {
      sum += v;
      if (d_emb) add_distance_grad(e, t.i, t.j, d, t.y == 1 ? 1.0 : -1.0, *d_emb);
    }
  }
  return sum;
}

double projection_objective(const ParamVector& params, const ParamVector& anchor,
                            const MlpSpec& spec, const Matrix& inputs,
                            const std::vector<int>& labels, const std::vector<int>& rep_positions,
                            const ProjectionLossParams& p) {
  p.validate();
  const Matrix e = embed_batch(inputs, params, spec);
  const double hinge_sum = projection_hinge_sum(e, labels, rep_positions, p.eps_plus, p.eps_minus);
  return generic_regularized(params, anchor, hinge_sum, p.lambda);
}

double generic_regularized(const ParamVector& params, const ParamVector& anchor, double base_loss,
                           double lambda) {
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  if (lambda == 0.0) return base_loss;
  return base_loss + 0.5 * lambda * param_sqnorm_diff(anchor, params);
}

std::function<double(const ParamVector&, GradVector&)> anchor_regularizer(
    const ParamVector& anchor, double lambda) {
  return [&anchor, lambda](const ParamVector& params, GradVector& grad) {
    if (lambda == 0.0) return 0.0;
    grad = param_axpy(lambda, param_axpy(-1.0, anchor, params), grad);
    return 0.5 * lambda * param_sqnorm_diff(anchor, params);
  };
}

Objective make_pair_objective(const TupleSet& tuples, const PairLoss& loss, bool trainable_epsilon) {
  Objective obj;
  obj.embedding_term = [tuples, loss, trainable_epsilon](const Matrix& e, const Vec64& extras,
                                                        Matrix& d_emb, Vec64& d_extras) {
    PairLoss current = loss;
    if (trainable_epsilon) {
      if (extras.size() < 1) throw Error("trainable epsilon requires an extra parameter");
      current.epsilon = extras[0];
    }
    double d_eps = 0.0;
    const double v = aggregate_with_grad(e, tuples, current, d_emb, &d_eps);
    if (trainable_epsilon) d_extras[0] += d_eps;
    return v;
  };
  return obj;
}

Objective make_projection_objective(const std::vector<int>& labels,
                                    const std::vector<int>& rep_positions, double eps_plus,
                                    double eps_minus) {
  Objective obj;
  obj.embedding_term = [labels, rep_positions, eps_plus, eps_minus](
                           const Matrix& e, const Vec64&, Matrix& d_emb, Vec64&) {
    return projection_hinge_sum(e, labels, rep_positions, eps_plus, eps_minus, &d_emb);
  };
  return obj;
}

}  // namespace profs
