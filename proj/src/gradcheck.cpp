#include "profs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "profs/feasibility.hpp"

namespace profs {

namespace {

constexpr int kMaxRedraws = 200;

struct Case {
  MlpSpec spec;
  ParamVector params;
  ParamVector anchor;
  Matrix inputs;
  std::vector<int> labels;
  std::vector<int> reps;
  LossKind kind = LossKind::margin;
  double epsilon = 1.0;
  double delta = 0.2;
  double eps_plus = 0.5;
  double eps_minus = 1.0;
  double lambda = 0.0;
};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Case draw_case(Rng& rng, LossKind kind) {
  Case c;
  c.kind = kind;
  c.spec.input_dim = uniform_int(rng, 2, 6);
  c.spec.hidden_dims = {uniform_int(rng, 2, 32), uniform_int(rng, 2, 32)};
  c.spec.embed_dim = uniform_int(rng, 2, 6);
  c.spec.activation = uniform_int(rng, 0, 1) == 0 ? Activation::tanh : Activation::relu;
  c.spec.normalize_output = uniform_int(rng, 0, 3) != 0;

  const bool trainable = kind == LossKind::margin;
  c.params = ParamVector::init(c.spec, rng, trainable ? 1 : 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& l : c.params.layers())
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.1 * normal(rng);

  c.epsilon = uniform(rng, 0.5, 1.5);
  c.delta = uniform(rng, 0.05, 0.3);
  c.eps_plus = uniform(rng, 0.2, 0.8);
  c.eps_minus = c.eps_plus + uniform(rng, 0.2, 0.8);
  if (kind == LossKind::triplet) c.epsilon = uniform(rng, 0.1, 1.0);
  if (trainable) c.params.extras()[0] = c.epsilon;

  c.anchor = c.params;
  for (auto& l : c.anchor.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] += 0.05 * normal(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] += 0.05 * normal(rng);
  }
  for (Eigen::Index i = 0; i < c.anchor.extras().size(); ++i) c.anchor.extras()[i] += 0.05 * normal(rng);
  c.lambda = uniform(rng, 1e-3, 1.0);

  const int classes = uniform_int(rng, 2, 3);
  const int n = uniform_int(rng, 2 * classes, 8);
  c.inputs.resize(c.spec.input_dim, n);
  for (Eigen::Index i = 0; i < c.inputs.size(); ++i) c.inputs.data()[i] = normal(rng);
  for (int i = 0; i < n; ++i) c.labels.push_back(i < 2 * classes ? i / 2 + 1 : uniform_int(rng, 1, classes));
  for (int l = 1; l <= classes; ++l)
    c.reps.push_back(static_cast<int>(std::find(c.labels.begin(), c.labels.end(), l) - c.labels.begin()));
  return c;
}

Objective build_objective(const Case& c) {
  Objective obj;
  switch (c.kind) {
    case LossKind::contrastive:
    case LossKind::margin:
      obj = make_pair_objective(all_pairs(c.labels), {c.kind, c.epsilon, c.delta},
                                c.kind == LossKind::margin);
      break;
    case LossKind::triplet:
      obj = make_pair_objective(all_triplets(c.labels), {c.kind, c.epsilon, c.delta}, false);
      break;
    case LossKind::projection:
      obj = make_projection_objective(c.labels, c.reps, c.eps_plus, c.eps_minus);
      break;
  }
  obj.param_term = anchor_regularizer(c.anchor, c.lambda);
  return obj;
}

// Smallest distance of any piecewise argument from its kink.
double kink_slack(const Case& c) {
  const ForwardCache fwd = forward(c.params, c.spec, c.inputs);
  double slack = std::numeric_limits<double>::infinity();
  if (c.spec.activation == Activation::relu)
    for (std::size_t i = 0; i + 1 < fwd.preacts.size(); ++i)
      slack = std::min(slack, fwd.preacts[i].cwiseAbs().minCoeff());
  const Matrix d = distance_matrix(fwd.embeddings);
  const int n = static_cast<int>(c.labels.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) slack = std::min(slack, d(i, j));

  switch (c.kind) {
    case LossKind::contrastive:
      break;
    case LossKind::margin: {
      const double eps = c.params.extras()[0];
      for (const auto& p : all_pairs(c.labels).pairs)
        slack = std::min(slack, std::abs(p.y == 1 ? d(p.i, p.j) - eps + c.delta
                                                   : eps + c.delta - d(p.i, p.j)));
      break;
    }
    case LossKind::triplet:
      for (const auto& t : all_triplets(c.labels).triplets) {
        const double dp = d(t.anchor, t.positive);
        const double dn = d(t.anchor, t.negative);
        slack = std::min(slack, std::abs(dp * dp - dn * dn + c.epsilon));
      }
      break;
    case LossKind::projection:
      for (const auto& p : representative_pairs(c.labels, c.reps))
        slack = std::min(slack, std::abs(p.y == 1 ? d(p.i, p.j) - c.eps_plus
                                                   : c.eps_minus - d(p.i, p.j)));
      break;
  }
  return slack;
}

}  // namespace

double relative_error(const Vec64& a, const Vec64& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

double objective_value(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                       const Matrix& inputs) {
  double v = 0.0;
  if (objective.embedding_term) {
    const ForwardCache fwd = forward(params, spec, inputs);
    Matrix d_emb = Matrix::Zero(fwd.embeddings.rows(), fwd.embeddings.cols());
    Vec64 d_extras = Vec64::Zero(params.extras().size());
    v += objective.embedding_term(fwd.embeddings, params.extras(), d_emb, d_extras);
  }
  if (objective.param_term) {
    GradVector scratch = params.zeros_like();
    v += objective.param_term(params, scratch);
  }
  return v;
}

Vec64 numeric_gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                       const Matrix& inputs, double step) {
  const Vec64 base = params.to_flat();
  Vec64 g(base.size());
  ParamVector probe = params;
  Vec64 x = base;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    x[i] = base[i] + step;
    probe.from_flat(x);
    const double up = objective_value(objective, probe, spec, inputs);
    x[i] = base[i] - step;
    probe.from_flat(x);
    const double down = objective_value(objective, probe, spec, inputs);
    x[i] = base[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.trials < 1) throw ValidationError("trials: must be at least 1");
  if (!(options.step > 0.0)) throw ValidationError("step: must be positive");
  static constexpr LossKind kKinds[] = {LossKind::contrastive, LossKind::triplet, LossKind::margin,
                                        LossKind::projection};
  Rng rng(options.seed);
  GradcheckReport report;
  for (int t = 0; t < options.trials; ++t) {
    const LossKind kind = kKinds[t % 4];
    Case c;
    int redraws = 0;
    for (;;) {
      c = draw_case(rng, kind);
      try {
        if (kink_slack(c) >= options.kink_margin) break;
      } catch (const Error&) {
        // degenerate embedding; draw again
      }
      if (++redraws > kMaxRedraws) throw Error("gradcheck could not draw a kink-free configuration");
    }
    const Objective obj = build_objective(c);
    const ValueAndGrad vg = gradient(obj, c.params, c.spec, c.inputs);
    const Vec64 numeric = numeric_gradient(obj, c.params, c.spec, c.inputs, options.step);
    GradcheckTrial trial;
    trial.kind = kind;
    trial.num_params = static_cast<long>(numeric.size());
    trial.relative_error = relative_error(vg.grad.to_flat(), numeric);
    report.max_relative_error = std::max(report.max_relative_error, trial.relative_error);
    report.trials.push_back(trial);
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace profs
