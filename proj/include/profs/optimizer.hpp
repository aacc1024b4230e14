#ifndef PROFS_OPTIMIZER_HPP_
#define PROFS_OPTIMIZER_HPP_

#include "profs/numcore.hpp"

namespace profs {

struct AdamState {
  GradVector m;
  GradVector v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps_hat = 1e-8;
  double base_lr = 1e-3;
  /// Applied to the head group: the last layer and the trailing extras.
  double head_lr_multiplier = 10.0;

  static AdamState fresh(const ParamVector& params, double base_lr, double head_lr_multiplier);
};

/// One bias-corrected Adam step. Mutates `state` (moments, t).
ParamVector adam_step(const ParamVector& params, const GradVector& grad, AdamState& state);

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr);

}  // namespace profs

#endif  // PROFS_OPTIMIZER_HPP_
