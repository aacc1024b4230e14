#ifndef PROFS_GRADCHECK_HPP_
#define PROFS_GRADCHECK_HPP_

#include <cstdint>
#include <vector>

#include "profs/losses.hpp"
#include "profs/numcore.hpp"

namespace profs {

struct GradcheckOptions {
  int trials = 100;
  std::uint64_t seed = 0;
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Configurations with a hinge or relu argument closer than this to its
  /// kink are redrawn.
  double kink_margin = 1e-4;
};

struct GradcheckTrial {
  LossKind kind = LossKind::margin;
  long num_params = 0;
  double relative_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(const Vec64& a, const Vec64& b);

/// Value of `objective` at `params` without computing a gradient.
double objective_value(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                       const Matrix& inputs);

/// Central-difference gradient over the flat parameter view.
Vec64 numeric_gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                       const Matrix& inputs, double step);

/// Random MLPs with two hidden layers of at most 32 units, cycling through
/// the four objectives, each with the anchor regularizer attached.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace profs

#endif  // PROFS_GRADCHECK_HPP_
