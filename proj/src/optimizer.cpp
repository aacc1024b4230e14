#include "profs/optimizer.hpp"

#include <cmath>

namespace profs {

namespace {

void check_grad(const ParamVector& params, const GradVector& grad) {
  if (!params.same_shape(grad)) throw Error("gradient shape mismatch");
  if (!grad.all_finite()) throw Error("non-finite gradient");
}

template <typename Derived>
void adam_update(Eigen::MatrixBase<Derived>& p, auto& m, auto& v, const auto& g,
                 const AdamState& s, double lr, double c1, double c2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps_hat);
}

}  // namespace

AdamState AdamState::fresh(const ParamVector& params, double base_lr, double head_lr_multiplier) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.base_lr = base_lr;
  s.head_lr_multiplier = head_lr_multiplier;
  return s;
}

ParamVector adam_step(const ParamVector& params, const GradVector& grad, AdamState& s) {
  check_grad(params, grad);
  if (!s.m.same_shape(params) || !s.v.same_shape(params)) throw Error("optimizer state shape mismatch");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  ParamVector out = params;
  const int head = out.head_index();
  for (int i = 0; i < static_cast<int>(out.layers().size()); ++i) {
    const double lr = i == head ? s.base_lr * s.head_lr_multiplier : s.base_lr;
    adam_update(out.layers()[i].weight, s.m.layers()[i].weight, s.v.layers()[i].weight,
                grad.layers()[i].weight, s, lr, c1, c2);
    adam_update(out.layers()[i].bias, s.m.layers()[i].bias, s.v.layers()[i].bias,
                grad.layers()[i].bias, s, lr, c1, c2);
  }
  adam_update(out.extras(), s.m.extras(), s.v.extras(), grad.extras(), s,
              s.base_lr * s.head_lr_multiplier, c1, c2);
  return out;
}

ParamVector sgd_step(const ParamVector& params, const GradVector& grad, double lr) {
  check_grad(params, grad);
  return param_axpy(-lr, grad, params);
}

}  // namespace profs
