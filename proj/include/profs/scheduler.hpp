#ifndef PROFS_SCHEDULER_HPP_
#define PROFS_SCHEDULER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "profs/datakit.hpp"
#include "profs/evalmetrics.hpp"
#include "profs/losses.hpp"
#include "profs/numcore.hpp"
#include "profs/optimizer.hpp"
#include "profs/sampling.hpp"

namespace profs {

struct LossConfig {
  LossKind kind = LossKind::margin;
  double epsilon = 1.0;  // contrastive/triplet margin, margin-loss boundary init
  double delta = 0.2;    // margin loss only
  bool epsilon_trainable = true;  // margin loss only
  double eps_plus = 0.8;   // projection loss only
  double eps_minus = 1.2;  // projection loss only

  bool uses_trainable_epsilon() const { return kind == LossKind::margin && epsilon_trainable; }
};

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double head_lr_multiplier = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps_hat = 1e-8;
};

struct ScheduleConfig {
  /// Steps per projection; unset means derive_M(B, I, L, rho).
  std::optional<long> M;
  long rho = 6;
  double lambda = 1e-3;
  /// Multiplies lambda after every projection when set.
  std::optional<double> lambda_anneal;
  long max_projections = 100;
  MiningMode mining = MiningMode::random;
  /// Classes per batch; unset means B / I.
  std::optional<int> rprime_size;
  /// Evaluate every this many projections; 0 disables.
  long eval_every = 0;
  /// Stop once the relative anchor displacement stays below this for three
  /// consecutive projections; 0 disables.
  double convergence_tol = 0.0;
};

struct TrainConfig {
  MlpSpec model;
  LossConfig loss;
  ScheduleConfig schedule;
  BatchPlan batch;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  /// Checks that need no data: ranges and loss/policy consistency.
  void validate_static() const;
  /// validate_static plus everything that depends on the training set.
  void validate(const Dataset& train) const;
  long resolved_M(int num_classes) const;
  int resolved_rprime(int num_classes) const;
};

struct StepRecord {
  long step = 0;
  long projection = 0;
  double loss = 0.0;  // objective including the anchor term
  bool operator==(const StepRecord&) const = default;
};

struct ProjectionRecord {
  long projection = 0;  // k after the anchor update
  double mean_loss = 0.0;
  /// ||theta - theta_anchor|| just before the anchor moved.
  double displacement = 0.0;
  double relative_displacement = 0.0;
  bool operator==(const ProjectionRecord&) const = default;
};

struct EvalRecord {
  long projection = 0;
  long steps = 0;
  EvalReport report;
};

struct TrainState {
  ParamVector params;
  ParamVector anchor;
  long k = 0;
  long inner_step = 0;
  long total_steps = 0;
  long M = 1;
  double lambda = 0.0;
  int convergence_streak = 0;
  AdamState adam;
  RepCache cache;
  RepUsage usage;
  std::optional<RepresentativeSet> reps;
  Rng rng;
  std::vector<StepRecord> step_log;
  std::vector<ProjectionRecord> projection_log;
  std::vector<EvalRecord> eval_log;

  bool converged() const { return convergence_streak >= 3; }
};

/// Owns the training set and config; every mutation of TrainState goes
/// through here so one seed yields one trajectory.
class Trainer {
 public:
  Trainer(TrainConfig config, Dataset train);

  const TrainConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  const ClassIndex& index() const { return index_; }

  TrainState init_state() const;

  /// One optimizer step on a fresh exemplar batch; opens a projection
  /// (new representatives) when inner_step is 0 and closes it after M steps.
  void step(TrainState& s) const;
  /// Only the inner update: batch, objective with the current anchor,
  /// optimizer step, cache refresh. Requires an open projection.
  void projection_step(TrainState& s) const;
  /// Runs the current projection to completion (M steps from a boundary).
  void run_projection(TrainState& s) const;

  using EvalHook = std::function<EvalReport(const TrainState&)>;
  /// Projections until max_projections or convergence.
  void run_training(TrainState& s, const EvalHook& hook = {}) const;

  Matrix embed_all(const ParamVector& params, const Matrix& inputs) const;

 private:
  void begin_projection(TrainState& s) const;
  void end_projection(TrainState& s) const;

  TrainConfig config_;
  Dataset data_;
  ClassIndex index_;
  int rprime_;
};

/// ||theta - theta_anchor|| of the projection in progress.
double anchor_displacement(const TrainState& s);

/// Self-describing text snapshot of everything needed to resume exactly.
std::string serialize_checkpoint(const TrainState& s, const MlpSpec& spec,
                                 const std::string& config_hash);

struct Checkpoint {
  MlpSpec spec;
  std::string config_hash;
  TrainState state;
};

Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const std::string& path, const TrainState& s, const MlpSpec& spec,
                     const std::string& config_hash);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace profs

#endif  // PROFS_SCHEDULER_HPP_
