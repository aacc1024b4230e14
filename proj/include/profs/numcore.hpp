#ifndef PROFS_NUMCORE_HPP_
#define PROFS_NUMCORE_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace profs {

using Vec64 = Eigen::VectorXd;
/// Column-major; one column per sample when used as a batch.
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input or configuration detected before any work is done.
class ValidationError : public Error {
 public:
  using Error::Error;
};

enum class Activation { relu, tanh };

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int embed_dim = 512;
  Activation activation = Activation::relu;
  bool normalize_output = true;

  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

struct Layer {
  Matrix weight;  // out x in
  Vec64 bias;     // out
};

/// Trainable parameters: the MLP layers plus trailing scalars (e.g. a
/// trainable margin boundary). The last layer is the head; extras belong
/// to the head group as well.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<Layer> layers, Vec64 extras);

  /// Zero-valued parameters shaped for `spec`, with `num_extras` scalars.
  static ParamVector zeros(const MlpSpec& spec, int num_extras = 0);
  /// Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)), zero bias.
  static ParamVector init(const MlpSpec& spec, Rng& rng, int num_extras = 0);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Vec64& extras() { return extras_; }
  const Vec64& extras() const { return extras_; }

  int head_index() const { return static_cast<int>(layers_.size()) - 1; }
  std::size_t flat_len() const;
  /// Offset in the flat view where the head group (last layer + extras) starts.
  std::size_t head_offset() const;

  Vec64 to_flat() const;
  /// Overwrites values from a flat vector of identical length.
  void from_flat(const Vec64& flat);
  ParamVector zeros_like() const;

  bool same_shape(const ParamVector& other) const;
  bool all_finite() const;
  bool operator==(const ParamVector& other) const;

 private:
  std::vector<Layer> layers_;
  Vec64 extras_;
};

using GradVector = ParamVector;

/// u * a + v, elementwise over every parameter.
ParamVector param_axpy(double a, const ParamVector& u, const ParamVector& v);
/// ||a - b||^2 over every parameter including extras.
double param_sqnorm_diff(const ParamVector& a, const ParamVector& b);
double param_sqnorm(const ParamVector& a);

/// Intermediate values of one batched forward pass, kept for backprop.
struct ForwardCache {
  std::vector<Matrix> inputs;       // input to layer i
  std::vector<Matrix> preacts;      // W x + b of layer i
  Matrix raw_output;                // last preact (before normalization)
  Eigen::RowVectorXd output_norms;  // per-sample norm of raw_output
  Matrix embeddings;                // final output, one column per sample
};

ForwardCache forward(const ParamVector& params, const MlpSpec& spec, const Matrix& inputs);

/// Propagates dL/d(embeddings) back to a parameter gradient. Extras are
/// left at zero; callers add their own contributions.
GradVector backward(const ParamVector& params, const MlpSpec& spec, const ForwardCache& cache,
                    const Matrix& d_embeddings);

Vec64 embed(const Vec64& x, const ParamVector& params, const MlpSpec& spec);
Matrix embed_batch(const Matrix& inputs, const ParamVector& params, const MlpSpec& spec);

double pairwise_distance(const Vec64& a, const Vec64& b);
/// Symmetric distance matrix between the columns of `embeddings`.
Matrix distance_matrix(const Matrix& embeddings);

/// A scalar objective over a fixed input batch. Either part may be empty.
struct Objective {
  /// Loss on the batch embeddings. Must fill d_embeddings (same shape as
  /// embeddings) and d_extras (same length as extras).
  std::function<double(const Matrix& embeddings, const Vec64& extras, Matrix& d_embeddings,
                       Vec64& d_extras)>
      embedding_term;
  /// Loss defined directly on the parameters; adds its gradient into `grad`.
  std::function<double(const ParamVector& params, GradVector& grad)> param_term;
};

struct ValueAndGrad {
  double value = 0.0;
  GradVector grad;
};

/// Exact reverse-mode value and gradient of `objective` at `params`.
ValueAndGrad gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                      const Matrix& inputs);
/// Same, reusing a forward pass already computed at `params`.
ValueAndGrad gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                      const ForwardCache& cache);

}  // namespace profs

#endif  // PROFS_NUMCORE_HPP_
