#include "doctest.h"

#include <cmath>

#include "profs/feasibility.hpp"
#include "profs/scheduler.hpp"

using namespace profs;

namespace {

Dataset small_data(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.num_classes = 6;
  s.per_class = 6;
  s.input_dim = 4;
  s.seed = seed;
  return gen_synthetic(s);
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.input_dim = 4;
  c.model.hidden_dims = {8};
  c.model.embed_dim = 3;
  c.batch.batch_size = 8;
  c.batch.per_class = 2;
  c.schedule.M = 3;
  c.schedule.max_projections = 4;
  c.seed = 11;
  return c;
}

// Four classes on a line at 10, 20, 30, 40 with offsets up to 0.3.
Dataset line_data() {
  Dataset d;
  d.inputs.resize(1, 16);
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 4; ++k) {
      d.inputs(0, 4 * c + k) = 10.0 * (c + 1) + 0.1 * k;
      d.labels.push_back(c + 1);
    }
  return d;
}

TrainConfig line_config() {
  TrainConfig c;
  c.model.input_dim = 1;
  c.model.embed_dim = 1;
  c.model.normalize_output = false;
  c.loss.kind = LossKind::projection;
  c.loss.eps_plus = 1.0;
  c.loss.eps_minus = 2.0;
  c.batch.batch_size = 4;
  c.batch.per_class = 2;
  c.schedule.M = 5;
  c.optimizer.lr = 1e-2;
  return c;
}

void set_scale(TrainState& s, double w) {
  s.params.layers()[0].weight(0, 0) = w;
  s.params.layers()[0].bias[0] = 0.0;
  s.anchor = s.params;
}

std::string snapshot(const TrainState& s, const Trainer& t) {
  return serialize_checkpoint(s, t.config().model, "h");
}

}  // namespace

TEST_CASE("init state") {
  const Trainer t(small_config(), small_data());
  const TrainState s = t.init_state();
  CHECK(s.k == 0);
  CHECK(s.total_steps == 0);
  CHECK(s.params == s.anchor);
  CHECK(s.M == 3);
  CHECK(s.params.extras().size() == 1);
  CHECK(s.params.extras()[0] == 1.0);
  CHECK(s.cache.entries.size() == 6u);
}

TEST_CASE("derived M follows the schedule") {
  TrainConfig c = small_config();
  c.schedule.M.reset();
  c.schedule.rho = 6;
  const Trainer t(c, small_data());
  // ceil(6 * 2 * 6 / 8) = 9.
  CHECK(t.init_state().M == 9);
}

TEST_CASE("a projection runs M steps then moves the anchor") {
  const Trainer t(small_config(), small_data());
  TrainState s = t.init_state();
  t.step(s);
  CHECK(s.inner_step == 1);
  CHECK(s.k == 0);
  CHECK(anchor_displacement(s) > 0.0);
  t.step(s);
  t.step(s);
  CHECK(s.k == 1);
  CHECK(s.inner_step == 0);
  CHECK(s.total_steps == 3);
  CHECK(s.anchor == s.params);
  CHECK(anchor_displacement(s) == 0.0);
  REQUIRE(s.projection_log.size() == 1u);
  CHECK(s.projection_log[0].projection == 1);
  CHECK(s.projection_log[0].displacement > 0.0);
  const double mean = (s.step_log[0].loss + s.step_log[1].loss + s.step_log[2].loss) / 3.0;
  CHECK(s.projection_log[0].mean_loss == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("M = 1 closes a projection on every step") {
  TrainConfig c = small_config();
  c.schedule.M = 1;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  for (int i = 1; i <= 5; ++i) {
    t.step(s);
    CHECK(s.k == i);
    CHECK(s.params == s.anchor);
  }
}

TEST_CASE("zero lambda ignores the anchor") {
  TrainConfig c = small_config();
  c.schedule.lambda = 0.0;
  const Trainer t(c, small_data());
  TrainState a = t.init_state();
  TrainState b = t.init_state();
  Rng other(99);
  b.anchor = ParamVector::init(c.model, other, 1);
  t.step(a);
  t.step(b);
  CHECK(a.params == b.params);
  CHECK(a.step_log == b.step_log);
}

TEST_CASE("positive lambda pulls toward the anchor") {
  TrainConfig c = small_config();
  c.schedule.lambda = 1.0;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  t.step(s);
  const double moved = anchor_displacement(s);
  TrainState far = t.init_state();
  Rng other(99);
  far.anchor = ParamVector::init(c.model, other, 1);
  t.step(far);
  CHECK(far.step_log[0].loss > s.step_log[0].loss);
  CHECK(moved > 0.0);
}

TEST_CASE("all constraints satisfied at the anchor is a fixed point") {
  const Trainer t(line_config(), line_data());
  TrainState s = t.init_state();
  set_scale(s, 1.0);
  const ParamVector before = s.params;
  for (int i = 0; i < 7; ++i) t.step(s);
  CHECK(s.params == before);
  for (const auto& r : s.step_log) CHECK(r.loss == 0.0);
}

TEST_CASE("toy projection problem reaches feasibility") {
  TrainConfig c = line_config();
  c.schedule.max_projections = 200;
  const Trainer t(c, line_data());
  TrainState s = t.init_state();
  // Scale 0.05 puts neighbouring classes 0.5 apart, inside eps- = 2.
  set_scale(s, 0.05);
  const ConstraintSpec spec{c.loss.eps_plus, c.loss.eps_minus};
  CHECK_FALSE(check_full(t.embed_all(s.params, t.data().inputs), t.data().labels, spec).feasible);
  t.run_training(s);
  const auto r = check_full(t.embed_all(s.params, t.data().inputs), t.data().labels, spec);
  CHECK(r.max_violation < 1e-3);
}

TEST_CASE("max_projections = 0 leaves the state untouched") {
  TrainConfig c = small_config();
  c.schedule.max_projections = 0;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  const std::string before = snapshot(s, t);
  t.run_training(s);
  CHECK(snapshot(s, t) == before);
  CHECK(s.step_log.empty());
}

TEST_CASE("training is seed-deterministic") {
  const Trainer t(small_config(), small_data());
  TrainState a = t.init_state(), b = t.init_state();
  t.run_training(a);
  t.run_training(b);
  CHECK(snapshot(a, t) == snapshot(b, t));
  CHECK(a.step_log == b.step_log);
  CHECK(a.projection_log == b.projection_log);
  CHECK(a.k == 4);
  CHECK(a.total_steps == 12);

  TrainConfig c = small_config();
  c.seed = 12;
  const Trainer u(c, small_data());
  TrainState d = u.init_state();
  u.run_training(d);
  CHECK_FALSE(d.params == a.params);
}

TEST_CASE("every loss kind and mining mode trains with finite losses") {
  for (LossKind kind : {LossKind::contrastive, LossKind::triplet, LossKind::margin, LossKind::projection})
    for (MiningMode mining : {MiningMode::random, MiningMode::hard_pairs, MiningMode::hncm}) {
      TrainConfig c = small_config();
      c.loss.kind = kind;
      c.schedule.mining = mining;
      c.batch.policy = kind == LossKind::triplet ? PairingPolicy::triplets : PairingPolicy::balanced_pairs;
      if (kind == LossKind::projection) c.batch.policy = PairingPolicy::balanced_pairs;
      c.schedule.rprime_size = 3;
      const Trainer t(c, small_data());
      TrainState s = t.init_state();
      t.run_training(s);
      CHECK(s.step_log.size() == 12u);
      for (const auto& r : s.step_log) {
        CHECK(std::isfinite(r.loss));
        CHECK(r.loss >= 0.0);
      }
    }
}

TEST_CASE("sgd optimizer") {
  TrainConfig c = small_config();
  c.optimizer.kind = OptimizerKind::sgd;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  t.run_training(s);
  CHECK(s.adam.t == 0);
  CHECK(s.k == 4);
}

TEST_CASE("lambda anneal multiplies once per projection") {
  TrainConfig c = small_config();
  c.schedule.lambda = 0.5;
  c.schedule.lambda_anneal = 0.5;
  c.schedule.max_projections = 3;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  t.run_training(s);
  CHECK(s.lambda == 0.0625);
}

TEST_CASE("convergence stops after three quiet projections") {
  TrainConfig c = small_config();
  c.schedule.convergence_tol = 1e9;
  c.schedule.max_projections = 50;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  t.run_training(s);
  CHECK(s.converged());
  CHECK(s.k == 3);
}

TEST_CASE("eval hook fires every eval_every projections") {
  TrainConfig c = small_config();
  c.schedule.eval_every = 2;
  const Trainer t(c, small_data());
  TrainState s = t.init_state();
  int calls = 0;
  t.run_training(s, [&](const TrainState&) {
    ++calls;
    return EvalReport{};
  });
  CHECK(calls == 2);
  REQUIRE(s.eval_log.size() == 2u);
  CHECK(s.eval_log[1].projection == 4);
  CHECK(s.eval_log[1].steps == 12);
}

TEST_CASE("config validation") {
  const Dataset d = small_data();
  auto expect_invalid = [&](TrainConfig c, const std::string& key) {
    try {
      c.validate(d);
      FAIL("accepted an invalid config for " << key);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).rfind(key + ":", 0) == 0);
    }
  };
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate(d));
  c.schedule.lambda = -1.0;
  expect_invalid(c, "lambda");
  c = small_config();
  c.loss.kind = LossKind::triplet;
  expect_invalid(c, "policy");
  c = small_config();
  c.schedule.M = 0;
  expect_invalid(c, "M");
  c = small_config();
  c.model.input_dim = 5;
  expect_invalid(c, "input_dim");
  c = small_config();
  c.batch.per_class = 8;
  expect_invalid(c, "per_class");
  c = small_config();
  c.schedule.rprime_size = 5;
  expect_invalid(c, "rprime_size");
  c = small_config();
  c.loss.kind = LossKind::projection;
  c.loss.eps_plus = 1.5;
  expect_invalid(c, "eps_plus");
  c = small_config();
  c.optimizer.beta2 = 1.0;
  expect_invalid(c, "beta2");
}

TEST_CASE("checkpoint round-trip resumes identically") {
  const Trainer t(small_config(), small_data());
  TrainState s = t.init_state();
  for (int i = 0; i < 4; ++i) t.step(s);  // stop mid-projection
  const std::string text = serialize_checkpoint(s, t.config().model, "abc");
  const Checkpoint cp = parse_checkpoint(text);
  CHECK(cp.config_hash == "abc");
  CHECK(cp.spec == t.config().model);
  CHECK(serialize_checkpoint(cp.state, cp.spec, "abc") == text);

  TrainState resumed = cp.state;
  t.run_training(s);
  t.run_training(resumed);
  CHECK(snapshot(resumed, t) == snapshot(s, t));
}

TEST_CASE("checkpoint file helpers") {
  const Trainer t(small_config(), small_data());
  TrainState s = t.init_state();
  t.run_training(s);
  const std::string path = "profs_scheduler_test_checkpoint.txt";
  save_checkpoint(path, s, t.config().model, "h");
  CHECK(snapshot(load_checkpoint(path).state, t) == snapshot(s, t));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("malformed checkpoints report a line") {
  const Trainer t(small_config(), small_data());
  TrainState s = t.init_state();
  t.step(s);
  const std::string text = snapshot(s, t);
  auto error_of = [](const std::string& bad) -> std::string {
    try {
      parse_checkpoint(bad);
    } catch (const ValidationError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(error_of("") .find("checkpoint") != std::string::npos);
  CHECK(error_of("profs-checkpoint 2\n").find("line 1") != std::string::npos);
  CHECK(error_of(text.substr(0, text.size() / 2)).find("checkpoint") != std::string::npos);
  std::string corrupt = text;
  corrupt.replace(corrupt.find("lambda "), 8, "lambda x");
  CHECK(error_of(corrupt).find("line") != std::string::npos);
}
