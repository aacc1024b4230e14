#ifndef PROFS_CONFIG_HPP_
#define PROFS_CONFIG_HPP_

#include <optional>
#include <string>
#include <vector>

#include "profs/datakit.hpp"
#include "profs/scheduler.hpp"

namespace profs {

struct DataConfig {
  /// Dataset file to load; when unset the synthetic block is generated.
  std::optional<std::string> path;
  SyntheticSpec synthetic;
  double split_fraction = 0.5;
};

struct ExperimentConfig {
  DataConfig data;
  /// model.input_dim is filled in from the data at run time.
  TrainConfig train;
  std::string out_dir = "run";

  ExperimentConfig();
  /// Everything checkable without loading data. Errors name the key.
  void validate() const;
};

/// Sectioned key = value text. Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// The effective config, defaults included, in the same format.
std::string format_config(const ExperimentConfig& c);
/// Hex digest of the effective config, ignoring out, max_projections and
/// eval_every.
std::string config_hash(const ExperimentConfig& c);

}  // namespace profs

#endif  // PROFS_CONFIG_HPP_
