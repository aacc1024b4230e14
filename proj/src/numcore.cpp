#include "profs/numcore.hpp"

#include <cmath>
#include <sstream>

namespace profs {

namespace {

constexpr double kDegenerateNorm = 1e-12;

Matrix activate(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::tanh:
      return z.array().tanh().matrix();
  }
  return z;
}

// Derivative w.r.t. the preactivation; relu uses 0 at the kink.
Matrix activation_grad(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      Eigen::ArrayXXd t = z.array().tanh();
      return (1.0 - t * t).matrix();
    }
  }
  return Matrix::Ones(z.rows(), z.cols());
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string("non-finite value in ") + what);
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1) throw ValidationError("input_dim must be positive");
  if (embed_dim < 1) throw ValidationError("embed_dim must be positive");
  for (int h : hidden_dims)
    if (h < 1) throw ValidationError("hidden layer widths must be positive");
}

ParamVector::ParamVector(std::vector<Layer> layers, Vec64 extras)
    : layers_(std::move(layers)), extras_(std::move(extras)) {}

ParamVector ParamVector::zeros(const MlpSpec& spec, int num_extras) {
  spec.validate();
  std::vector<Layer> layers;
  int fan_in = spec.input_dim;
  for (int i = 0; i < spec.num_layers(); ++i) {
    const int fan_out = i + 1 < spec.num_layers() ? spec.hidden_dims[i] : spec.embed_dim;
    layers.push_back({Matrix::Zero(fan_out, fan_in), Vec64::Zero(fan_out)});
    fan_in = fan_out;
  }
  return ParamVector(std::move(layers), Vec64::Zero(num_extras));
}

ParamVector ParamVector::init(const MlpSpec& spec, Rng& rng, int num_extras) {
  ParamVector p = zeros(spec, num_extras);
  for (auto& layer : p.layers_) {
    const double s = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-s, s);
    // Fill in column-major storage order so the stream matches the flat view.
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
  }
  return p;
}

std::size_t ParamVector::flat_len() const {
  std::size_t n = static_cast<std::size_t>(extras_.size());
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::size_t ParamVector::head_offset() const {
  std::size_t n = 0;
  for (int i = 0; i < head_index(); ++i)
    n += static_cast<std::size_t>(layers_[i].weight.size() + layers_[i].bias.size());
  return n;
}

Vec64 ParamVector::to_flat() const {
  Vec64 flat(static_cast<Eigen::Index>(flat_len()));
  Eigen::Index pos = 0;
  for (const auto& l : layers_) {
    flat.segment(pos, l.weight.size()) = l.weight.reshaped();
    pos += l.weight.size();
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  flat.segment(pos, extras_.size()) = extras_;
  return flat;
}

void ParamVector::from_flat(const Vec64& flat) {
  if (static_cast<std::size_t>(flat.size()) != flat_len())
    throw Error("flat parameter length mismatch");
  Eigen::Index pos = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = flat.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
  extras_ = flat.segment(pos, extras_.size());
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  for (auto& l : z.layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
  z.extras_.setZero();
  return z;
}

bool ParamVector::same_shape(const ParamVector& other) const {
  if (layers_.size() != other.layers_.size() || extras_.size() != other.extras_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size())
      return false;
  }
  return true;
}

bool ParamVector::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return extras_.allFinite();
}

bool ParamVector::operator==(const ParamVector& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias)
      return false;
  return extras_ == other.extras_;
}

ParamVector param_axpy(double a, const ParamVector& u, const ParamVector& v) {
  if (!u.same_shape(v)) throw Error("parameter shape mismatch");
  ParamVector out = v;
  for (std::size_t i = 0; i < out.layers().size(); ++i) {
    out.layers()[i].weight += a * u.layers()[i].weight;
    out.layers()[i].bias += a * u.layers()[i].bias;
  }
  out.extras() += a * u.extras();
  return out;
}

double param_sqnorm_diff(const ParamVector& a, const ParamVector& b) {
  if (!a.same_shape(b)) throw Error("parameter shape mismatch");
  double s = (a.extras() - b.extras()).squaredNorm();
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    s += (a.layers()[i].weight - b.layers()[i].weight).squaredNorm();
    s += (a.layers()[i].bias - b.layers()[i].bias).squaredNorm();
  }
  return s;
}

double param_sqnorm(const ParamVector& a) {
  double s = a.extras().squaredNorm();
  for (const auto& l : a.layers()) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

ForwardCache forward(const ParamVector& params, const MlpSpec& spec, const Matrix& inputs) {
  if (inputs.rows() != spec.input_dim) {
    std::ostringstream msg;
    msg << "dimension mismatch: input has " << inputs.rows() << " rows, expected " << spec.input_dim;
    throw Error(msg.str());
  }
  if (static_cast<int>(params.layers().size()) != spec.num_layers())
    throw Error("parameters do not match the network spec");

  ForwardCache cache;
  Matrix x = inputs;
  const int n_layers = spec.num_layers();
  for (int i = 0; i < n_layers; ++i) {
    const Layer& layer = params.layers()[i];
    if (layer.weight.cols() != x.rows()) throw Error("parameters do not match the network spec");
    Matrix z = layer.weight * x;
    z.colwise() += layer.bias;
    cache.inputs.push_back(std::move(x));
    cache.preacts.push_back(z);
    x = i + 1 < n_layers ? activate(z, spec.activation) : z;
  }
  cache.raw_output = x;
  if (spec.normalize_output) {
    cache.output_norms = x.colwise().norm();
    if ((cache.output_norms.array() < kDegenerateNorm).any()) throw Error("degenerate embedding");
    cache.embeddings = x.array().rowwise() / cache.output_norms.array();
  } else {
    cache.embeddings = x;
  }
  return cache;
}

GradVector backward(const ParamVector& params, const MlpSpec& spec, const ForwardCache& cache,
                    const Matrix& d_embeddings) {
  GradVector grad = params.zeros_like();
  Matrix dz;
  if (spec.normalize_output) {
    // d(z/|z|) = (I - e e^T) / |z| applied per column.
    const Matrix& e = cache.embeddings;
    Eigen::RowVectorXd proj = (e.array() * d_embeddings.array()).colwise().sum();
    dz = d_embeddings - e * proj.asDiagonal();
    dz = dz.array().rowwise() / cache.output_norms.array();
  } else {
    dz = d_embeddings;
  }
  for (int i = spec.num_layers() - 1; i >= 0; --i) {
    Layer& g = grad.layers()[i];
    g.weight = dz * cache.inputs[i].transpose();
    g.bias = dz.rowwise().sum();
    if (i > 0) {
      Matrix da = params.layers()[i].weight.transpose() * dz;
      dz = da.cwiseProduct(activation_grad(cache.preacts[i - 1], spec.activation));
    }
  }
  return grad;
}

Vec64 embed(const Vec64& x, const ParamVector& params, const MlpSpec& spec) {
  return forward(params, spec, x).embeddings.col(0);
}

Matrix embed_batch(const Matrix& inputs, const ParamVector& params, const MlpSpec& spec) {
  return forward(params, spec, inputs).embeddings;
}

double pairwise_distance(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) throw Error("dimension mismatch in pairwise_distance");
  return (a - b).norm();
}

Matrix distance_matrix(const Matrix& embeddings) {
  const Eigen::Index n = embeddings.cols();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (embeddings.col(i) - embeddings.col(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

ValueAndGrad gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                      const ForwardCache& cache) {
  ValueAndGrad out;
  if (objective.embedding_term) {
    check_finite(cache.embeddings, "embeddings");
    Matrix d_emb = Matrix::Zero(cache.embeddings.rows(), cache.embeddings.cols());
    Vec64 d_extras = Vec64::Zero(params.extras().size());
    out.value = objective.embedding_term(cache.embeddings, params.extras(), d_emb, d_extras);
    check_finite(d_emb, "embedding gradient");
    out.grad = backward(params, spec, cache, d_emb);
    out.grad.extras() = d_extras;
  } else {
    out.grad = params.zeros_like();
  }
  if (objective.param_term) out.value += objective.param_term(params, out.grad);
  if (!std::isfinite(out.value)) throw Error("non-finite loss value");
  if (!out.grad.all_finite()) throw Error("non-finite gradient");
  return out;
}

ValueAndGrad gradient(const Objective& objective, const ParamVector& params, const MlpSpec& spec,
                      const Matrix& inputs) {
  if (!objective.embedding_term) return gradient(objective, params, spec, ForwardCache{});
  return gradient(objective, params, spec, forward(params, spec, inputs));
}

}  // namespace profs
