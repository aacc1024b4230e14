#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "profs/losses.hpp"

using namespace profs;

namespace {

MlpSpec identity_spec(int dim) {
  MlpSpec s;
  s.input_dim = dim;
  s.embed_dim = dim;
  s.normalize_output = false;
  return s;
}

ParamVector identity_params(int dim) {
  ParamVector p = ParamVector::zeros(identity_spec(dim));
  p.layers()[0].weight = Matrix::Identity(dim, dim);
  return p;
}

double dist(const Matrix& e, int i, int j) { return (e.col(i) - e.col(j)).norm(); }

// Naive reference loop written directly from the per-term formulas.
double naive_mean(const Matrix& e, const TupleSet& t, LossKind kind, double eps, double delta) {
  double s = 0.0;
  if (kind == LossKind::triplet) {
    for (const auto& x : t.triplets) {
      const double dp = dist(e, x.anchor, x.positive), dn = dist(e, x.anchor, x.negative);
      s += std::max(0.0, dp * dp - dn * dn + eps);
    }
    return s / static_cast<double>(t.triplets.size());
  }
  for (const auto& p : t.pairs) {
    const double d = dist(e, p.i, p.j);
    if (kind == LossKind::contrastive)
      s += p.y ? d * d : std::pow(std::max(0.0, eps - d), 2);
    else
      s += p.y ? std::max(0.0, d - eps + delta) : std::max(0.0, eps + delta - d);
  }
  return s / static_cast<double>(t.pairs.size());
}

}  // namespace

TEST_CASE("contrastive term") {
  CHECK(contrastive_term(0.0, 1, 1.0) == 0.0);
  CHECK(contrastive_term(0.5, 0, 1.0) == 0.25);
  CHECK(contrastive_term(2.0, 0, 1.0) == 0.0);
  CHECK(contrastive_term(0.5, 1, 1.0) == 0.25);
  CHECK_THROWS_AS(contrastive_term(-0.1, 1, 1.0), Error);
}

TEST_CASE("triplet term") {
  CHECK(triplet_term(1.0, 2.0, 0.5) == 0.0);
  CHECK(triplet_term(0.7, 0.7, 0.0) == 0.0);
  CHECK(triplet_term(2.0, 1.0, 0.5) == 3.5);
  CHECK_THROWS_AS(triplet_term(-1.0, 1.0, 0.5), Error);
}

TEST_CASE("margin term") {
  const MarginParams p{1.0, 0.2, true};
  CHECK(margin_term(0.5, 1, p) == 0.0);
  CHECK(margin_term(2.0, 1, p) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(margin_term(1.2, 0, p) == 0.0);
  CHECK(margin_term(0.0, 0, p) == doctest::Approx(1.2).epsilon(1e-15));
}

TEST_CASE("aggregate is the mean of the terms") {
  Matrix e(1, 3);
  e << 0.0, 0.5, 3.0;
  // Singleton: one contrastive negative at d = 0.5 against eps = 1.
  TupleSet t;
  t.pairs = {{0, 1, 0}};
  CHECK(aggregate(e, t, {LossKind::contrastive, 1.0, 0.0}) == 0.25);

  Matrix e2(1, 4);
  // Two positives valued 0.25 and 0.75.
  e2 << 0.0, 0.5, 0.0, std::sqrt(0.75);
  TupleSet two;
  two.pairs = {{0, 1, 1}, {2, 3, 1}};
  CHECK(aggregate(e2, two, {LossKind::contrastive, 1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));

  TupleSet zero;
  zero.pairs = {{0, 2, 0}};
  CHECK(aggregate(e, zero, {LossKind::margin, 1.0, 0.2}) == 0.0);

  TupleSet empty;
  CHECK_THROWS_AS(aggregate(e, empty, {LossKind::margin, 1.0, 0.2}), Error);
}

TEST_CASE("aggregate matches a naive loop on random batches") {
  Rng rng(17);
  std::uniform_int_distribution<int> pick(0, 11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix e = Matrix::Random(3, 12);
    std::vector<int> labels(12);
    for (int i = 0; i < 12; ++i) labels[i] = i % 3;
    TupleSet t;
    for (int k = 0; k < 20; ++k) {
      const int i = pick(rng), j = pick(rng);
      if (i != j) t.pairs.push_back({i, j, labels[i] == labels[j] ? 1 : 0});
      const int a = pick(rng), b = pick(rng), c = pick(rng);
      t.triplets.push_back({a, b, c});
    }
    for (LossKind kind : {LossKind::contrastive, LossKind::margin, LossKind::triplet}) {
      const double got = aggregate(e, t, {kind, 0.6, 0.15});
      CHECK(got == doctest::Approx(naive_mean(e, t, kind, 0.6, 0.15)).epsilon(1e-14));
      CHECK(got >= 0.0);
    }
  }
}

TEST_CASE("representative pairs anchor every pair and count rep-rep pairs once") {
  const std::vector<int> labels = {1, 1, 2, 2, 3};
  const auto pairs = representative_pairs(labels, {0, 2});
  // rep 0: pairs with 1, 2, 3, 4; rep 2: pairs with 1, 3, 4 (not 0 again).
  CHECK(pairs.size() == 7u);
  for (const auto& p : pairs) {
    CHECK((p.i == 0 || p.i == 2));
    CHECK(p.y == (labels[p.i] == labels[p.j] ? 1 : 0));
  }
  const auto count_02 = std::count_if(pairs.begin(), pairs.end(), [](const PairTuple& p) {
    return (p.i == 0 && p.j == 2) || (p.i == 2 && p.j == 0);
  });
  CHECK(count_02 == 1);
}

TEST_CASE("projection objective examples") {
  const MlpSpec spec = identity_spec(2);
  const ParamVector theta = identity_params(2);
  ProjectionLossParams p;
  p.eps_plus = 0.5;
  p.eps_minus = 1.0;
  p.lambda = 1e-3;

  // Satisfied layout: positives within 0.5, negatives beyond 1.
  Matrix x(2, 4);
  x << 0.0, 0.2, 3.0, 3.1, 0.0, 0.0, 0.0, 0.0;
  const std::vector<int> labels = {1, 1, 2, 2};
  CHECK(projection_objective(theta, theta, spec, x, labels, {0, 2}, p) == 0.0);

  // Same constraints, anchor shifted so that ||anchor - theta||^2 = 4.
  ParamVector anchor = theta;
  anchor.layers()[0].bias = Vec64::Constant(2, std::sqrt(2.0));
  CHECK(projection_objective(theta, anchor, spec, x, labels, {0, 2}, p) ==
        doctest::Approx(0.002).epsilon(1e-12));

  // One positive pair at eps+ + 0.3.
  Matrix y(2, 2);
  y << 0.0, 0.8, 0.0, 0.0;
  CHECK(projection_objective(theta, theta, spec, y, {1, 1}, {0}, p) ==
        doctest::Approx(0.3).epsilon(1e-12));

  CHECK_THROWS_AS(projection_objective(theta, theta, spec, y, {1, 1}, {}, p), Error);
  p.eps_plus = 2.0;
  CHECK_THROWS_AS(projection_objective(theta, theta, spec, y, {1, 1}, {0}, p), ValidationError);
}

TEST_CASE("projection hinge sum is invariant to batch order") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix e = Matrix::Random(3, 8);
    const std::vector<int> labels = {1, 2, 1, 3, 2, 3, 1, 2};
    const std::vector<int> reps = {0, 1, 3};
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix e2(3, 8);
    std::vector<int> labels2(8), where(8);
    for (int k = 0; k < 8; ++k) {
      e2.col(k) = e.col(perm[k]);
      labels2[k] = labels[perm[k]];
      where[perm[k]] = k;
    }
    const std::vector<int> reps2 = {where[0], where[1], where[3]};
    CHECK(projection_hinge_sum(e, labels, reps, 0.4, 0.9) ==
          doctest::Approx(projection_hinge_sum(e2, labels2, reps2, 0.4, 0.9)).epsilon(1e-13));
  }
}

TEST_CASE("generic regularized loss") {
  const MlpSpec spec = identity_spec(1);
  ParamVector a = ParamVector::zeros(spec);
  ParamVector b = a;
  b.from_flat(Vec64::Ones(2));  // ||delta||^2 = 2
  CHECK(generic_regularized(a, b, 1.0, 1.0) == 2.0);
  CHECK(generic_regularized(a, b, 0.7, 0.0) == 0.7);
  CHECK(generic_regularized(a, a, 0.7, 5.0) == 0.7);
  CHECK_THROWS_AS(generic_regularized(a, b, 1.0, -1.0), Error);
}

TEST_CASE("anchor regularizer gradient vanishes at the anchor") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {4};
  spec.embed_dim = 2;
  Rng rng(8);
  const ParamVector theta = ParamVector::init(spec, rng);
  const auto reg = anchor_regularizer(theta, 0.5);
  GradVector g = theta.zeros_like();
  CHECK(reg(theta, g) == 0.0);
  CHECK(param_sqnorm(g) == 0.0);

  ParamVector moved = param_axpy(1.0, theta, theta);  // 2 theta
  GradVector g2 = theta.zeros_like();
  CHECK(reg(moved, g2) == doctest::Approx(0.25 * param_sqnorm(theta)));
  CHECK(g2.to_flat().isApprox(0.5 * theta.to_flat()));
}

TEST_CASE("loss kind names round-trip") {
  for (LossKind k : {LossKind::contrastive, LossKind::triplet, LossKind::margin, LossKind::projection})
    CHECK(parse_loss_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_loss_kind("lifted"), ValidationError);
}
