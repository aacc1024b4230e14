#ifndef PROFS_RUNNER_HPP_
#define PROFS_RUNNER_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "profs/config.hpp"
#include "profs/datakit.hpp"
#include "profs/evalmetrics.hpp"
#include "profs/scheduler.hpp"

namespace profs {

/// Retrieval cutoffs reported in every evaluation record.
inline const std::vector<int> kReportKs = {1, 2, 4, 8};

/// Loaded from data.path or generated from the synthetic block.
Dataset load_or_generate(const DataConfig& c);

/// Evaluation threads: hardware concurrency, capped by PROFS_THREADS.
int eval_threads();

/// Recall@K for the report cutoffs smaller than the sample count, plus
/// k-means NMI/F1 with one cluster per label.
EvalReport evaluate_split(const Matrix& embeddings, const std::vector<int>& labels,
                          std::uint64_t seed, int threads);

// Metrics file: tab-separated, one header line, then step / projection /
// eval records. Wall time lives in a separate timing file.
std::string metrics_header();
std::string metrics_row(const StepRecord& r);
std::string metrics_row(const ProjectionRecord& r);
std::string metrics_row(const EvalRecord& r);
/// Appends rows, writing the header first when the file is new or empty.
void append_metrics(const std::string& path, const std::vector<std::string>& rows);

struct RunOptions {
  /// Resume from this checkpoint instead of a fresh state.
  std::optional<std::string> resume_from;
  int threads = 1;
  bool quiet = false;
};

struct RunResult {
  TrainState state;
  std::optional<EvalReport> final_report;
  std::string out_dir;
};

/// Trains on the train split, evaluates on the test split, and writes
/// config.ini, metrics.tsv, timing.tsv, checkpoint.txt and manifest.txt
/// under c.out_dir.
RunResult run_experiment(const ExperimentConfig& c, const RunOptions& options);

/// The `--grid` value "key=v1,v2,..." for key lambda or M.
std::pair<std::string, std::vector<std::string>> parse_grid(const std::string& spec);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace profs

#endif  // PROFS_RUNNER_HPP_
