#include "profs/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace profs {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ValidationError(key + ": " + what);
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    bad(key, "expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long x = to_long(key, v);
  if (x < INT32_MIN || x > INT32_MAX) bad(key, "integer out of range");
  return static_cast<int>(x);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    bad(key, "expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  std::istringstream in(v);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    out.push_back(to_int(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
  }
  return out;
}

template <typename F>
auto to_enum(const std::string& key, const std::string& v, F parse) {
  try {
    return parse(v);
  } catch (const std::exception&) {
    bad(key, "unknown value '" + v + "'");
  }
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using Setter = std::function<void(const std::string&)>;
using SectionTable = std::map<std::string, std::map<std::string, Setter>>;

}  // namespace

ExperimentConfig::ExperimentConfig() {
  train.model.hidden_dims = {64};
  train.model.input_dim = data.synthetic.input_dim;
}

void ExperimentConfig::validate() const {
  if (!data.path) {
    const auto& s = data.synthetic;
    if (s.num_classes < 2) bad("num_classes", "must be at least 2");
    if (s.per_class < 2) bad("samples_per_class", "must be at least 2");
    if (s.input_dim < 1) bad("input_dim", "must be positive");
    if (!(s.cluster_spread >= 0.0)) bad("cluster_spread", "must be non-negative");
    if (!(s.separation > 0.0)) bad("separation", "must be positive");
  }
  if (!(data.split_fraction > 0.0 && data.split_fraction < 1.0))
    bad("split_fraction", "must be in (0, 1)");

  const auto& m = train.model;
  for (int h : m.hidden_dims)
    if (h < 1) bad("hidden_dims", "widths must be positive");
  if (m.embed_dim < 1) bad("embed_dim", "must be positive");
  const auto& b = train.batch;
  if (b.batch_size < 2) bad("batch_size", "must be at least 2");
  if (b.per_class < 2) bad("per_class", "must be at least 2");
  if (b.batch_size % b.per_class != 0) bad("batch_size", "must be divisible by per_class");
  if (train.schedule.rprime_size && *train.schedule.rprime_size < 1)
    bad("rprime_size", "must be at least 1");
  train.validate_static();

  if (out_dir.empty()) bad("out", "must not be empty");
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig c;
  auto& d = c.data;
  auto& s = d.synthetic;
  auto& t = c.train;
  bool policy_set = false;
  bool m_set = false;
  bool rho_set = false;

  SectionTable table;
  table["data"] = {
      {"path", [&](const std::string& v) { d.path = v; }},
      {"num_classes", [&](const std::string& v) { s.num_classes = to_int("num_classes", v); }},
      {"samples_per_class", [&](const std::string& v) { s.per_class = to_int("samples_per_class", v); }},
      {"input_dim", [&](const std::string& v) { s.input_dim = to_int("input_dim", v); }},
      {"cluster_spread", [&](const std::string& v) { s.cluster_spread = to_double("cluster_spread", v); }},
      {"separation", [&](const std::string& v) { s.separation = to_double("separation", v); }},
      {"warp", [&](const std::string& v) { s.warp = to_enum("warp", v, parse_warp); }},
      {"seed", [&](const std::string& v) { s.seed = static_cast<std::uint64_t>(to_long("data.seed", v)); }},
      {"split_fraction", [&](const std::string& v) { d.split_fraction = to_double("split_fraction", v); }},
  };
  table["model"] = {
      {"hidden_dims", [&](const std::string& v) { t.model.hidden_dims = to_int_list("hidden_dims", v); }},
      {"embed_dim", [&](const std::string& v) { t.model.embed_dim = to_int("embed_dim", v); }},
      {"activation",
       [&](const std::string& v) {
         if (v == "relu") t.model.activation = Activation::relu;
         else if (v == "tanh") t.model.activation = Activation::tanh;
         else bad("activation", "unknown value '" + v + "'");
       }},
      {"normalize_output", [&](const std::string& v) { t.model.normalize_output = to_bool("normalize_output", v); }},
  };
  table["loss"] = {
      {"kind", [&](const std::string& v) { t.loss.kind = to_enum("kind", v, parse_loss_kind); }},
      {"epsilon", [&](const std::string& v) { t.loss.epsilon = to_double("epsilon", v); }},
      {"delta", [&](const std::string& v) { t.loss.delta = to_double("delta", v); }},
      {"epsilon_trainable", [&](const std::string& v) { t.loss.epsilon_trainable = to_bool("epsilon_trainable", v); }},
      {"eps_plus", [&](const std::string& v) { t.loss.eps_plus = to_double("eps_plus", v); }},
      {"eps_minus", [&](const std::string& v) { t.loss.eps_minus = to_double("eps_minus", v); }},
  };
  table["schedule"] = {
      {"M",
       [&](const std::string& v) {
         if (v == "auto") {
           t.schedule.M.reset();
         } else {
           t.schedule.M = to_long("M", v);
           m_set = true;
         }
       }},
      {"rho",
       [&](const std::string& v) {
         t.schedule.rho = to_long("rho", v);
         rho_set = true;
       }},
      {"lambda", [&](const std::string& v) { t.schedule.lambda = to_double("lambda", v); }},
      {"lambda_anneal",
       [&](const std::string& v) {
         if (v == "none") t.schedule.lambda_anneal.reset();
         else t.schedule.lambda_anneal = to_double("lambda_anneal", v);
       }},
      {"max_projections", [&](const std::string& v) { t.schedule.max_projections = to_long("max_projections", v); }},
      {"mining", [&](const std::string& v) { t.schedule.mining = to_enum("mining", v, parse_mining_mode); }},
      {"rprime_size",
       [&](const std::string& v) {
         if (v == "auto") t.schedule.rprime_size.reset();
         else t.schedule.rprime_size = to_int("rprime_size", v);
       }},
      {"eval_every", [&](const std::string& v) { t.schedule.eval_every = to_long("eval_every", v); }},
      {"convergence_tol", [&](const std::string& v) { t.schedule.convergence_tol = to_double("convergence_tol", v); }},
  };
  table["batch"] = {
      {"batch_size", [&](const std::string& v) { t.batch.batch_size = to_int("batch_size", v); }},
      {"per_class", [&](const std::string& v) { t.batch.per_class = to_int("per_class", v); }},
      {"policy",
       [&](const std::string& v) {
         if (v == "auto") return;
         t.batch.policy = to_enum("policy", v, parse_pairing_policy);
         policy_set = true;
       }},
      {"allow_replacement", [&](const std::string& v) { t.batch.allow_replacement = to_bool("allow_replacement", v); }},
  };
  table["optimizer"] = {
      {"kind",
       [&](const std::string& v) {
         if (v == "adam") t.optimizer.kind = OptimizerKind::adam;
         else if (v == "sgd") t.optimizer.kind = OptimizerKind::sgd;
         else bad("optimizer.kind", "unknown value '" + v + "'");
       }},
      {"lr", [&](const std::string& v) { t.optimizer.lr = to_double("lr", v); }},
      {"head_lr_multiplier", [&](const std::string& v) { t.optimizer.head_lr_multiplier = to_double("head_lr_multiplier", v); }},
      {"beta1", [&](const std::string& v) { t.optimizer.beta1 = to_double("beta1", v); }},
      {"beta2", [&](const std::string& v) { t.optimizer.beta2 = to_double("beta2", v); }},
      {"eps_hat", [&](const std::string& v) { t.optimizer.eps_hat = to_double("eps_hat", v); }},
  };
  table["run"] = {
      {"seed", [&](const std::string& v) { t.seed = static_cast<std::uint64_t>(to_long("seed", v)); }},
      {"out", [&](const std::string& v) { c.out_dir = v; }},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      bad(section, "key outside any section");
    const auto sec = table.find(section);
    if (sec == table.end()) bad(section, "unknown section");
    for (const auto& [key, value] : body) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) bad(key, "unknown key in [" + section + "]");
      setter->second(value.data());
    }
  }

  if (m_set && rho_set) throw ValidationError("M and rho are mutually exclusive");
  if (!policy_set)
    t.batch.policy =
        t.loss.kind == LossKind::triplet ? PairingPolicy::triplets : PairingPolicy::balanced_pairs;
  t.model.input_dim = s.input_dim;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

// Hashing omits keys that only bound or observe the run.
std::string format_body(const ExperimentConfig& c, bool for_hash) {
  const auto& d = c.data;
  const auto& s = d.synthetic;
  const auto& t = c.train;
  std::ostringstream o;
  o << "[data]\n";
  if (d.path) o << "path = " << *d.path << '\n';
  o << "num_classes = " << s.num_classes << '\n'
    << "samples_per_class = " << s.per_class << '\n'
    << "input_dim = " << s.input_dim << '\n'
    << "cluster_spread = " << fmt(s.cluster_spread) << '\n'
    << "separation = " << fmt(s.separation) << '\n'
    << "warp = " << to_string(s.warp) << '\n'
    << "seed = " << s.seed << '\n'
    << "split_fraction = " << fmt(d.split_fraction) << '\n';
  o << "\n[model]\n"
    << "hidden_dims = " << fmt_list(t.model.hidden_dims) << '\n'
    << "embed_dim = " << t.model.embed_dim << '\n'
    << "activation = " << (t.model.activation == Activation::relu ? "relu" : "tanh") << '\n'
    << "normalize_output = " << (t.model.normalize_output ? "true" : "false") << '\n';
  o << "\n[loss]\n"
    << "kind = " << to_string(t.loss.kind) << '\n'
    << "epsilon = " << fmt(t.loss.epsilon) << '\n'
    << "delta = " << fmt(t.loss.delta) << '\n'
    << "epsilon_trainable = " << (t.loss.epsilon_trainable ? "true" : "false") << '\n'
    << "eps_plus = " << fmt(t.loss.eps_plus) << '\n'
    << "eps_minus = " << fmt(t.loss.eps_minus) << '\n';
  o << "\n[schedule]\n";
  if (t.schedule.M)
    o << "M = " << *t.schedule.M << '\n';
  else
    o << "rho = " << t.schedule.rho << '\n';
  o << "lambda = " << fmt(t.schedule.lambda) << '\n'
    << "lambda_anneal = " << (t.schedule.lambda_anneal ? fmt(*t.schedule.lambda_anneal) : "none") << '\n';
  if (!for_hash) o << "max_projections = " << t.schedule.max_projections << '\n';
  o << "mining = " << to_string(t.schedule.mining) << '\n'
    << "rprime_size = "
    << (t.schedule.rprime_size ? std::to_string(*t.schedule.rprime_size) : "auto") << '\n';
  if (!for_hash) o << "eval_every = " << t.schedule.eval_every << '\n';
  o << "convergence_tol = " << fmt(t.schedule.convergence_tol) << '\n';
  o << "\n[batch]\n"
    << "batch_size = " << t.batch.batch_size << '\n'
    << "per_class = " << t.batch.per_class << '\n'
    << "policy = " << to_string(t.batch.policy) << '\n'
    << "allow_replacement = " << (t.batch.allow_replacement ? "true" : "false") << '\n';
  o << "\n[optimizer]\n"
    << "kind = " << (t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd") << '\n'
    << "lr = " << fmt(t.optimizer.lr) << '\n'
    << "head_lr_multiplier = " << fmt(t.optimizer.head_lr_multiplier) << '\n'
    << "beta1 = " << fmt(t.optimizer.beta1) << '\n'
    << "beta2 = " << fmt(t.optimizer.beta2) << '\n'
    << "eps_hat = " << fmt(t.optimizer.eps_hat) << '\n';
  o << "\n[run]\n"
    << "seed = " << t.seed << '\n';
  if (!for_hash) o << "out = " << c.out_dir << '\n';
  return o.str();
}

}  // namespace

std::string format_config(const ExperimentConfig& c) { return format_body(c, false); }

std::string config_hash(const ExperimentConfig& c) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : format_body(c, true)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace profs
