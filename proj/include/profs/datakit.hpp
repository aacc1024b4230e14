#ifndef PROFS_DATAKIT_HPP_
#define PROFS_DATAKIT_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "profs/numcore.hpp"
#include "profs/sampling.hpp"

namespace profs {

/// Labeled samples. Inputs are columns; labels run 1..num_classes.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::string name = "dataset";
  std::uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(inputs.rows()); }
  int size() const { return static_cast<int>(labels.size()); }
  int num_classes() const;
  ClassIndex class_index() const { return ClassIndex(labels); }
  /// Throws ValidationError if labels are not contiguous 1..L or sizes disagree.
  void validate() const;
  /// Samples and labels only; name and seed are not compared.
  bool operator==(const Dataset& other) const;
};

enum class Warp { none, random_rotation_plus_tanh };

std::string to_string(Warp w);
Warp parse_warp(const std::string& s);

struct SyntheticSpec {
  int num_classes = 200;
  int per_class = 10;
  int input_dim = 32;
  double cluster_spread = 0.35;
  double separation = 1.0;
  Warp warp = Warp::random_rotation_plus_tanh;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Gaussian clusters around well-separated class means, optionally pushed
/// through x -> tanh(Q x) with a seeded random rotation Q.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// The first ceil(fraction * L) labels train, the rest test (relabelled
/// from 1). Sample order within each side is preserved.
std::pair<Dataset, Dataset> zero_shot_split(const Dataset& d, double fraction = 0.5);

/// Text format: "dim=<d> classes=<L> count=<N>" then one line per sample:
/// the label followed by d reals printed with 17 significant digits.
std::string serialize(const Dataset& d);
Dataset parse_dataset(const std::string& text);

void save(const Dataset& d, const std::string& path);
Dataset load(const std::string& path);

}  // namespace profs

#endif  // PROFS_DATAKIT_HPP_
