#include "profs/datakit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace profs {

namespace {

class ParseError : public ValidationError {
 public:
  ParseError(int line, const std::string& what)
      : ValidationError("parse error at line " + std::to_string(line) + ": " + what) {}
};

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

long header_field(std::string_view token, std::string_view key, int line) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=')
    throw ParseError(line, "expected '" + std::string(key) + "=<n>' in header");
  long v = 0;
  if (!parse_number(token.substr(key.size() + 1), v) || v < 0)
    throw ParseError(line, "bad value for '" + std::string(key) + "'");
  return v;
}

Matrix random_rotation(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign fix so Q is a uniformly distributed rotation for a given draw.
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

int Dataset::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(inputs.cols()) != labels.size())
    throw ValidationError("sample count does not match label count");
  const int num = num_classes();
  std::vector<int> counts(static_cast<std::size_t>(num), 0);
  for (int l : labels) {
    if (l < 1) throw ValidationError("labels must be positive");
    ++counts[l - 1];
  }
  for (int l = 1; l <= num; ++l)
    if (counts[l - 1] == 0)
      throw ValidationError("labels must be contiguous; class " + std::to_string(l) + " is empty");
  if (!inputs.allFinite()) throw ValidationError("dataset contains non-finite values");
}

bool Dataset::operator==(const Dataset& other) const {
  return labels == other.labels && inputs.rows() == other.inputs.rows() &&
         inputs.cols() == other.inputs.cols() && inputs == other.inputs;
}

std::string to_string(Warp w) {
  return w == Warp::none ? "none" : "random_rotation_plus_tanh";
}

Warp parse_warp(const std::string& s) {
  if (s == "none") return Warp::none;
  if (s == "random_rotation_plus_tanh") return Warp::random_rotation_plus_tanh;
  throw ValidationError("unknown warp '" + s + "'");
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (per_class < 2) throw ValidationError("synthetic data needs at least 2 samples per class");
  if (input_dim < 1) throw ValidationError("input_dim must be positive");
  if (!(separation > 0.0)) throw ValidationError("separation must be positive");
  if (!(cluster_spread >= 0.0)) throw ValidationError("cluster_spread must be non-negative");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  constexpr long kMaxTries = 100000;
  std::vector<Vec64> means;
  long tries = 0;
  while (static_cast<int>(means.size()) < spec.num_classes) {
    if (++tries > kMaxTries)
      throw Error("could not place class means at the requested separation");
    Vec64 m(spec.input_dim);
    for (int k = 0; k < spec.input_dim; ++k) m[k] = spec.separation * normal(rng);
    const bool ok = std::all_of(means.begin(), means.end(), [&](const Vec64& other) {
      return (other - m).norm() >= spec.separation;
    });
    if (ok) means.push_back(std::move(m));
  }

  Dataset d;
  d.name = "synthetic";
  d.seed = spec.seed;
  d.inputs.resize(spec.input_dim, static_cast<Eigen::Index>(spec.num_classes) * spec.per_class);
  Eigen::Index col = 0;
  for (int l = 1; l <= spec.num_classes; ++l)
    for (int s = 0; s < spec.per_class; ++s, ++col) {
      for (int k = 0; k < spec.input_dim; ++k)
        d.inputs(k, col) = means[l - 1][k] + spec.cluster_spread * normal(rng);
      d.labels.push_back(l);
    }

  if (spec.warp == Warp::random_rotation_plus_tanh) {
    const Matrix q = random_rotation(spec.input_dim, rng);
    d.inputs = (q * d.inputs).array().tanh().matrix();
  }
  return d;
}

std::pair<Dataset, Dataset> zero_shot_split(const Dataset& d, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must be in (0, 1)");
  const int num = d.num_classes();
  if (num < 2) throw ValidationError("zero-shot split needs at least 2 classes");
  const int n_train = std::min(num - 1, static_cast<int>(std::ceil(fraction * num)));

  std::vector<Eigen::Index> train_cols, test_cols;
  for (int i = 0; i < d.size(); ++i) (d.labels[i] <= n_train ? train_cols : test_cols).push_back(i);

  auto take = [&](const std::vector<Eigen::Index>& cols, int offset, const char* suffix) {
    Dataset out;
    out.name = d.name + suffix;
    out.seed = d.seed;
    out.inputs = d.inputs(Eigen::all, cols);
    for (auto c : cols) out.labels.push_back(d.labels[c] - offset);
    return out;
  };
  return {take(train_cols, 0, "-train"), take(test_cols, n_train, "-test")};
}

std::string serialize(const Dataset& d) {
  std::string out = "dim=" + std::to_string(d.input_dim()) +
                    " classes=" + std::to_string(d.num_classes()) +
                    " count=" + std::to_string(d.size()) + "\n";
  char buf[40];
  for (int i = 0; i < d.size(); ++i) {
    out += std::to_string(d.labels[i]);
    for (int k = 0; k < d.input_dim(); ++k) {
      std::snprintf(buf, sizeof buf, " %.17g", d.inputs(k, i));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const auto head = split_ws(line);
  if (head.size() != 3) throw ParseError(1, "header must be 'dim=<d> classes=<L> count=<N>'");
  const long dim = header_field(head[0], "dim", 1);
  const long classes = header_field(head[1], "classes", 1);
  const long count = header_field(head[2], "count", 1);
  if (dim < 1) throw ParseError(1, "dim must be positive");

  Dataset d;
  d.inputs.resize(dim, count);
  d.labels.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line))
      throw ParseError(line_no, "file ends after " + std::to_string(i) + " of " +
                                    std::to_string(count) + " samples");
    const auto tok = split_ws(line);
    if (tok.empty()) throw ParseError(line_no, "empty sample row");
    int label = 0;
    if (!parse_number(tok[0], label)) throw ParseError(line_no, "bad label '" + std::string(tok[0]) + "'");
    if (static_cast<long>(tok.size()) - 1 != dim)
      throw ValidationError("row " + std::to_string(line_no) + " has " +
                            std::to_string(tok.size() - 1) + " values, expected " +
                            std::to_string(dim));
    for (long k = 0; k < dim; ++k) {
      double v = 0.0;
      if (!parse_number(tok[k + 1], v))
        throw ParseError(line_no, "bad value '" + std::string(tok[k + 1]) + "'");
      d.inputs(k, i) = v;
    }
    d.labels.push_back(label);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!split_ws(line).empty()) throw ParseError(line_no, "unexpected data after the last sample");
  }
  d.validate();
  if (d.num_classes() != classes)
    throw ValidationError("header declares " + std::to_string(classes) + " classes, found " +
                          std::to_string(d.num_classes()));
  return d;
}

void save(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << serialize(d);
  if (!out) throw Error("write failed for " + path);
}

Dataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset d = parse_dataset(buf.str());
  d.name = path;
  return d;
}

}  // namespace profs
