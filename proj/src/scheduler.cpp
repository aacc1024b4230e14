#include "profs/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace profs {

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ValidationError(key + ": " + what);
}

}  // namespace

void TrainConfig::validate_static() const {
  model.validate();
  batch.validate();
  require(loss.epsilon > 0.0, "epsilon", "must be positive");
  require(loss.delta >= 0.0, "delta", "must be non-negative");
  if (loss.kind == LossKind::projection)
    require(loss.eps_plus >= 0.0 && loss.eps_plus < loss.eps_minus, "eps_plus",
            "must satisfy 0 <= eps_plus < eps_minus");
  if (loss.kind == LossKind::triplet)
    require(batch.policy == PairingPolicy::triplets, "policy", "triplet loss needs policy=triplets");
  if (loss.kind == LossKind::contrastive || loss.kind == LossKind::margin)
    require(batch.policy == PairingPolicy::balanced_pairs, "policy",
            "pair losses need policy=balanced_pairs");

  if (schedule.M) require(*schedule.M >= 1, "M", "must be at least 1");
  require(schedule.rho >= 1, "rho", "must be at least 1");
  require(schedule.lambda >= 0.0, "lambda", "must be non-negative");
  if (schedule.lambda_anneal)
    require(*schedule.lambda_anneal > 0.0 && *schedule.lambda_anneal <= 1.0, "lambda_anneal",
            "must be in (0, 1]");
  require(schedule.max_projections >= 0, "max_projections", "must be non-negative");
  require(schedule.eval_every >= 0, "eval_every", "must be non-negative");
  require(schedule.convergence_tol >= 0.0, "convergence_tol", "must be non-negative");

  require(optimizer.lr > 0.0, "lr", "must be positive");
  require(optimizer.head_lr_multiplier > 0.0, "head_lr_multiplier", "must be positive");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "beta1", "must be in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "beta2", "must be in [0, 1)");
  require(optimizer.eps_hat > 0.0, "eps_hat", "must be positive");
}

void TrainConfig::validate(const Dataset& train) const {
  validate_static();
  train.validate();
  require(model.input_dim == train.input_dim(), "input_dim",
          "model expects " + std::to_string(model.input_dim) + " but data has " +
              std::to_string(train.input_dim()));

  const int num_classes = train.num_classes();
  require(num_classes >= 2, "classes", "training needs at least 2 classes");
  const ClassIndex index = train.class_index();
  if (!batch.allow_replacement)
    require(index.min_class_size() >= batch.per_class, "per_class",
            "some class has fewer than per_class samples (set allow_replacement)");

  const int rprime = resolved_rprime(num_classes);
  require(rprime >= 1 && rprime <= num_classes, "rprime_size",
          "must be in [1, " + std::to_string(num_classes) + "]");
  require(static_cast<long>(rprime) * batch.per_class <= batch.batch_size, "rprime_size",
          "rprime_size * per_class exceeds the batch size");
  const int filler = batch.batch_size - rprime * batch.per_class;
  if (filler > 0) {
    std::vector<int> sizes;
    for (int l = 1; l <= num_classes; ++l) sizes.push_back(static_cast<int>(index.members(l).size()));
    std::sort(sizes.begin(), sizes.end());
    long smallest_rest = 0;
    for (int i = 0; i < num_classes - rprime; ++i) smallest_rest += sizes[i];
    require(smallest_rest >= filler, "batch_size",
            "not enough samples outside the selected classes to fill the batch");
  }
  if (rprime == 1 && filler == 0)
    require(false, "rprime_size", "a batch with a single class has no negatives");
}

long TrainConfig::resolved_M(int num_classes) const {
  if (schedule.M) return *schedule.M;
  return derive_M(batch.batch_size, batch.per_class, num_classes, schedule.rho);
}

int TrainConfig::resolved_rprime(int num_classes) const {
  if (schedule.rprime_size) return *schedule.rprime_size;
  return std::min(num_classes, batch.batch_size / batch.per_class);
}

Trainer::Trainer(TrainConfig config, Dataset train)
    : config_(std::move(config)), data_(std::move(train)) {
  config_.validate(data_);
  index_ = data_.class_index();
  rprime_ = config_.resolved_rprime(index_.num_classes());
}

TrainState Trainer::init_state() const {
  TrainState s;
  s.rng.seed(config_.seed);
  const bool trainable = config_.loss.uses_trainable_epsilon();
  s.params = ParamVector::init(config_.model, s.rng, trainable ? 1 : 0);
  if (trainable) s.params.extras()[0] = config_.loss.epsilon;
  s.anchor = s.params;
  s.M = config_.resolved_M(index_.num_classes());
  s.lambda = config_.schedule.lambda;
  s.adam = AdamState::fresh(s.params, config_.optimizer.lr, config_.optimizer.head_lr_multiplier);
  s.adam.beta1 = config_.optimizer.beta1;
  s.adam.beta2 = config_.optimizer.beta2;
  s.adam.eps_hat = config_.optimizer.eps_hat;
  s.cache = RepCache(index_.num_classes());
  return s;
}

Matrix Trainer::embed_all(const ParamVector& params, const Matrix& inputs) const {
  return embed_batch(inputs, params, config_.model);
}

void Trainer::begin_projection(TrainState& s) const {
  s.reps = sample_representatives(index_, s.rng, s.usage);
  if (s.cache.num_initialized() == 0) {
    const Matrix e = embed_all(s.params, data_.inputs(Eigen::all, s.reps->reps));
    for (int l = 0; l < index_.num_classes(); ++l) s.cache.entries[l] = e.col(l);
  }
}

void Trainer::end_projection(TrainState& s) const {
  ProjectionRecord rec;
  rec.displacement = anchor_displacement(s);
  const double anchor_norm = std::sqrt(param_sqnorm(s.anchor));
  rec.relative_displacement = anchor_norm > 0.0 ? rec.displacement / anchor_norm : 0.0;
  double sum = 0.0;
  const long n = std::min<long>(s.M, static_cast<long>(s.step_log.size()));
  for (long i = 0; i < n; ++i) sum += s.step_log[s.step_log.size() - 1 - i].loss;
  rec.mean_loss = n > 0 ? sum / static_cast<double>(n) : 0.0;

  s.anchor = s.params;
  ++s.k;
  s.inner_step = 0;
  rec.projection = s.k;
  if (config_.schedule.lambda_anneal) s.lambda *= *config_.schedule.lambda_anneal;
  const double tol = config_.schedule.convergence_tol;
  if (tol > 0.0 && rec.relative_displacement < tol)
    ++s.convergence_streak;
  else
    s.convergence_streak = 0;
  s.projection_log.push_back(rec);
}

void Trainer::projection_step(TrainState& s) const {
  if (!s.reps) throw Error("projection_step outside an open projection");
  if (s.inner_step >= s.M) throw Error("projection already has M steps");

  const auto& sched = config_.schedule;
  const TupleBatch batch =
      build_batch(*s.reps, rprime_, index_, config_.batch, s.rng, sched.mining, s.cache);
  const Matrix inputs = data_.inputs(Eigen::all, batch.samples);
  const ForwardCache fwd = forward(s.params, config_.model, inputs);

  Objective objective;
  const auto& loss = config_.loss;
  if (loss.kind == LossKind::projection) {
    objective = make_projection_objective(batch.labels, batch.rep_positions, loss.eps_plus,
                                          loss.eps_minus);
  } else {
    const TupleSet tuples =
        sched.mining == MiningMode::random
            ? batch.tuples
            : hard_pair_mine(fwd.embeddings, batch.labels, batch.positives, config_.batch.policy);
    objective = make_pair_objective(tuples, {loss.kind, loss.epsilon, loss.delta},
                                    loss.uses_trainable_epsilon());
  }
  objective.param_term = anchor_regularizer(s.anchor, s.lambda);

  ValueAndGrad vg;
  try {
    vg = gradient(objective, s.params, config_.model, fwd);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " at step " + std::to_string(s.total_steps) +
                " (projection " + std::to_string(s.k) + ", inner step " +
                std::to_string(s.inner_step) + ")");
  }

  if (config_.optimizer.kind == OptimizerKind::adam)
    s.params = adam_step(s.params, vg.grad, s.adam);
  else
    s.params = sgd_step(s.params, vg.grad, config_.optimizer.lr);

  cache_update(s.cache, fwd.embeddings, batch, *s.reps);
  s.step_log.push_back({s.total_steps, s.k, vg.value});
  ++s.inner_step;
  ++s.total_steps;
}

void Trainer::step(TrainState& s) const {
  if (s.inner_step == 0) begin_projection(s);
  projection_step(s);
  if (s.inner_step >= s.M) end_projection(s);
}

void Trainer::run_projection(TrainState& s) const {
  const long k0 = s.k;
  while (s.k == k0) step(s);
}

void Trainer::run_training(TrainState& s, const EvalHook& hook) const {
  const auto& sched = config_.schedule;
  while (s.k < sched.max_projections && !s.converged()) {
    run_projection(s);
    if (hook && sched.eval_every > 0 && s.k % sched.eval_every == 0)
      s.eval_log.push_back({s.k, s.total_steps, hook(s)});
  }
}

double anchor_displacement(const TrainState& s) {
  return std::sqrt(param_sqnorm_diff(s.params, s.anchor));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "profs-checkpoint";
constexpr int kVersion = 1;

void put_double(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

void put_vec(std::ostream& out, const char* key, const Vec64& v) {
  out << key << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out << ' ';
    put_double(out, v[i]);
  }
  out << '\n';
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  // Next non-empty line split on spaces; its first token must equal `key`.
  std::vector<std::string> expect(const std::string& key) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      if (tok[0] != key) fail("expected '" + key + "', found '" + tok[0] + "'");
      return tok;
    }
    fail("unexpected end of checkpoint, expected '" + key + "'");
    return {};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

  double to_double(const std::string& s) const {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  long to_long(const std::string& s) const {
    long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("bad integer '" + s + "'");
    return v;
  }

  // "name=value" -> value, checking the name.
  std::string field(const std::string& tok, const std::string& name) const {
    if (tok.rfind(name + "=", 0) != 0) fail("expected field '" + name + "'");
    return tok.substr(name.size() + 1);
  }

  Vec64 vec(const std::string& key) {
    const auto tok = expect(key);
    if (tok.size() < 2) fail("missing length for '" + key + "'");
    const long n = to_long(tok[1]);
    if (n < 0 || static_cast<long>(tok.size()) != n + 2) fail("length mismatch for '" + key + "'");
    Vec64 v(n);
    for (long i = 0; i < n; ++i) v[i] = to_double(tok[i + 2]);
    return v;
  }

  std::istringstream& stream() { return in_; }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

std::string join_ints(const std::vector<int>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string serialize_checkpoint(const TrainState& s, const MlpSpec& spec,
                                 const std::string& config_hash) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "config_hash " << config_hash << '\n';
  out << "mlp input_dim=" << spec.input_dim << " hidden=" << join_ints(spec.hidden_dims)
      << " embed_dim=" << spec.embed_dim
      << " activation=" << (spec.activation == Activation::relu ? "relu" : "tanh")
      << " normalize=" << (spec.normalize_output ? 1 : 0) << " extras=" << s.params.extras().size()
      << '\n';
  out << "counters k=" << s.k << " inner_step=" << s.inner_step << " total_steps=" << s.total_steps
      << " M=" << s.M << " streak=" << s.convergence_streak << '\n';
  out << "lambda ";
  put_double(out, s.lambda);
  out << '\n';
  put_vec(out, "params", s.params.to_flat());
  put_vec(out, "anchor", s.anchor.to_flat());
  out << "adam t=" << s.adam.t << " beta1=";
  put_double(out, s.adam.beta1);
  out << " beta2=";
  put_double(out, s.adam.beta2);
  out << " eps_hat=";
  put_double(out, s.adam.eps_hat);
  out << " base_lr=";
  put_double(out, s.adam.base_lr);
  out << " head_lr_multiplier=";
  put_double(out, s.adam.head_lr_multiplier);
  out << '\n';
  put_vec(out, "adam_m", s.adam.m.to_flat());
  put_vec(out, "adam_v", s.adam.v.to_flat());
  out << "rng " << s.rng << '\n';
  if (s.reps) {
    out << "reps " << s.reps->reps.size() << " cycle_id=" << s.reps->cycle_id;
    for (int r : s.reps->reps) out << ' ' << r;
    out << '\n';
  } else {
    out << "reps none\n";
  }
  out << "usage calls=" << s.usage.calls << " classes=" << s.usage.used.size() << '\n';
  for (const auto& used : s.usage.used) {
    out << "used " << used.size();
    for (int u : used) out << ' ' << u;
    out << '\n';
  }
  out << "cache classes=" << s.cache.entries.size() << '\n';
  for (std::size_t l = 0; l < s.cache.entries.size(); ++l) {
    out << "entry staleness=" << s.cache.staleness[l] << ' ';
    put_vec(out, "values", s.cache.entries[l] ? *s.cache.entries[l] : Vec64());
    if (!s.cache.entries[l]) {
      // Distinguish "empty" from a zero-length embedding.
      out.seekp(-1, std::ios_base::cur);
      out << " absent\n";
    }
  }
  out << "end\n";
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  LineReader rd(text);
  Checkpoint ck;
  {
    const auto tok = rd.expect(kMagic);
    if (tok.size() != 2 || rd.to_long(tok[1]) != kVersion) rd.fail("unsupported checkpoint version");
  }
  {
    const auto tok = rd.expect("config_hash");
    ck.config_hash = tok.size() > 1 ? tok[1] : "";
  }
  long num_extras = 0;
  {
    const auto tok = rd.expect("mlp");
    if (tok.size() != 7) rd.fail("malformed mlp line");
    ck.spec.input_dim = static_cast<int>(rd.to_long(rd.field(tok[1], "input_dim")));
    const std::string hidden = rd.field(tok[2], "hidden");
    if (hidden != "-") {
      std::istringstream hs(hidden);
      for (std::string h; std::getline(hs, h, ',');) ck.spec.hidden_dims.push_back(static_cast<int>(rd.to_long(h)));
    }
    ck.spec.embed_dim = static_cast<int>(rd.to_long(rd.field(tok[3], "embed_dim")));
    const std::string act = rd.field(tok[4], "activation");
    if (act != "relu" && act != "tanh") rd.fail("unknown activation '" + act + "'");
    ck.spec.activation = act == "relu" ? Activation::relu : Activation::tanh;
    ck.spec.normalize_output = rd.field(tok[5], "normalize") == "1";
    num_extras = rd.to_long(rd.field(tok[6], "extras"));
  }
  try {
    ck.spec.validate();
  } catch (const ValidationError& e) {
    rd.fail(e.what());
  }
  TrainState& s = ck.state;
  {
    const auto tok = rd.expect("counters");
    if (tok.size() != 6) rd.fail("malformed counters line");
    s.k = rd.to_long(rd.field(tok[1], "k"));
    s.inner_step = rd.to_long(rd.field(tok[2], "inner_step"));
    s.total_steps = rd.to_long(rd.field(tok[3], "total_steps"));
    s.M = rd.to_long(rd.field(tok[4], "M"));
    s.convergence_streak = static_cast<int>(rd.to_long(rd.field(tok[5], "streak")));
  }
  {
    const auto tok = rd.expect("lambda");
    if (tok.size() != 2) rd.fail("malformed lambda line");
    s.lambda = rd.to_double(tok[1]);
  }
  const ParamVector shape = ParamVector::zeros(ck.spec, static_cast<int>(num_extras));
  auto read_params = [&](const char* key) {
    ParamVector p = shape;
    const Vec64 flat = rd.vec(key);
    if (static_cast<std::size_t>(flat.size()) != p.flat_len()) rd.fail(std::string(key) + " has the wrong length");
    p.from_flat(flat);
    return p;
  };
  s.params = read_params("params");
  s.anchor = read_params("anchor");
  {
    const auto tok = rd.expect("adam");
    if (tok.size() != 7) rd.fail("malformed adam line");
    s.adam.t = rd.to_long(rd.field(tok[1], "t"));
    s.adam.beta1 = rd.to_double(rd.field(tok[2], "beta1"));
    s.adam.beta2 = rd.to_double(rd.field(tok[3], "beta2"));
    s.adam.eps_hat = rd.to_double(rd.field(tok[4], "eps_hat"));
    s.adam.base_lr = rd.to_double(rd.field(tok[5], "base_lr"));
    s.adam.head_lr_multiplier = rd.to_double(rd.field(tok[6], "head_lr_multiplier"));
  }
  s.adam.m = read_params("adam_m");
  s.adam.v = read_params("adam_v");
  {
    const auto tok = rd.expect("rng");
    std::string state;
    for (std::size_t i = 1; i < tok.size(); ++i) state += (i > 1 ? " " : "") + tok[i];
    std::istringstream rs(state);
    rs >> s.rng;
    if (rs.fail()) rd.fail("malformed rng state");
  }
  {
    const auto tok = rd.expect("reps");
    if (tok.size() == 2 && tok[1] == "none") {
      s.reps.reset();
    } else {
      if (tok.size() < 3) rd.fail("malformed reps line");
      const long n = rd.to_long(tok[1]);
      if (static_cast<long>(tok.size()) != n + 3) rd.fail("reps length mismatch");
      RepresentativeSet r;
      r.cycle_id = rd.to_long(rd.field(tok[2], "cycle_id"));
      for (long i = 0; i < n; ++i) r.reps.push_back(static_cast<int>(rd.to_long(tok[i + 3])));
      s.reps = r;
    }
  }
  {
    const auto tok = rd.expect("usage");
    if (tok.size() != 3) rd.fail("malformed usage line");
    s.usage.calls = rd.to_long(rd.field(tok[1], "calls"));
    const long classes = rd.to_long(rd.field(tok[2], "classes"));
    for (long l = 0; l < classes; ++l) {
      const auto u = rd.expect("used");
      const long n = rd.to_long(u.at(1));
      if (static_cast<long>(u.size()) != n + 2) rd.fail("used length mismatch");
      std::vector<int> v;
      for (long i = 0; i < n; ++i) v.push_back(static_cast<int>(rd.to_long(u[i + 2])));
      s.usage.used.push_back(std::move(v));
    }
  }
  {
    const auto tok = rd.expect("cache");
    if (tok.size() != 2) rd.fail("malformed cache line");
    const long classes = rd.to_long(rd.field(tok[1], "classes"));
    s.cache = RepCache(static_cast<int>(classes));
    for (long l = 0; l < classes; ++l) {
      auto e = rd.expect("entry");
      if (e.size() < 3) rd.fail("malformed cache entry");
      s.cache.staleness[l] = rd.to_long(rd.field(e[1], "staleness"));
      if (e[2] != "values") rd.fail("expected cache values");
      const long n = rd.to_long(e.at(3));
      if (e.back() == "absent") {
        if (n != 0) rd.fail("absent cache entry with values");
        continue;
      }
      if (static_cast<long>(e.size()) != n + 4) rd.fail("cache entry length mismatch");
      Vec64 v(n);
      for (long i = 0; i < n; ++i) v[i] = rd.to_double(e[i + 4]);
      s.cache.entries[l] = v;
    }
  }
  rd.expect("end");
  return ck;
}

void save_checkpoint(const std::string& path, const TrainState& s, const MlpSpec& spec,
                     const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << serialize_checkpoint(s, spec, config_hash);
  if (!out) throw Error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace profs
