#ifndef PROFS_SAMPLING_HPP_
#define PROFS_SAMPLING_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "profs/losses.hpp"
#include "profs/numcore.hpp"

namespace profs {

/// Sample indices grouped by label. Labels are 1..L.
class ClassIndex {
 public:
  ClassIndex() = default;
  explicit ClassIndex(const std::vector<int>& labels);

  int num_classes() const { return static_cast<int>(members_.size()); }
  int num_samples() const { return static_cast<int>(labels_.size()); }
  const std::vector<int>& members(int label) const { return members_.at(label - 1); }
  int label_of(int sample) const { return labels_.at(sample); }
  const std::vector<int>& labels() const { return labels_; }
  int min_class_size() const;

 private:
  std::vector<std::vector<int>> members_;
  std::vector<int> labels_;
};

/// One representative sample per class, indexed by label - 1.
struct RepresentativeSet {
  std::vector<int> reps;
  long cycle_id = 0;

  int of(int label) const { return reps.at(label - 1); }
  bool operator==(const RepresentativeSet&) const = default;
};

/// Per-class record of representatives already used in the current cycle.
struct RepUsage {
  std::vector<std::vector<int>> used;
  long calls = 0;
  bool operator==(const RepUsage&) const = default;
};

/// Draws one representative per class, avoiding indices already used for
/// that class. A class whose samples are all used starts over.
RepresentativeSet sample_representatives(const ClassIndex& index, Rng& rng, RepUsage& usage);

/// Cached embedding of each class's current representative.
struct RepCache {
  std::vector<std::optional<Vec64>> entries;
  std::vector<long> staleness;

  explicit RepCache(int num_classes = 0)
      : entries(static_cast<std::size_t>(num_classes)),
        staleness(static_cast<std::size_t>(num_classes), 0) {}
  int num_initialized() const;
  bool operator==(const RepCache&) const = default;
};

enum class PairingPolicy { balanced_pairs, triplets };
enum class MiningMode { random, hard_pairs, hncm };

std::string to_string(PairingPolicy p);
std::string to_string(MiningMode m);
PairingPolicy parse_pairing_policy(const std::string& s);
MiningMode parse_mining_mode(const std::string& s);

struct BatchPlan {
  int batch_size = 128;       // B
  int per_class = 2;          // I, including the representative
  PairingPolicy policy = PairingPolicy::balanced_pairs;
  bool allow_replacement = false;
  void validate() const;
};

/// ceil(rho * I * L / B): how many steps a representative set is kept so
/// each class is seen about rho times.
long derive_M(long batch_size, long per_class, long num_classes, long rho);

/// Exemplar batch. Positions index into `samples`; tuples use positions.
struct TupleBatch {
  std::vector<int> samples;        // dataset indices, size B
  std::vector<int> labels;         // label per position
  std::vector<int> rep_positions;  // positions holding a representative
  std::vector<int> classes;        // selected classes, in selection order
  std::vector<PairTuple> positives;
  TupleSet tuples;
};

struct HncmResult {
  std::vector<int> labels;
  long distance_evaluations = 0;
};

/// The `count` non-anchor classes whose cached representative lies
/// closest to any anchor's cached representative, nearest first. Costs
/// one distance per (candidate, anchor). Uninitialized entries are skipped.
HncmResult hncm_select(const std::vector<int>& anchor_classes, const RepCache& cache, int count);

/// Fraction of the selected classes drawn at random when mining hard
/// classes; the rest come from hncm_select around them.
inline constexpr double kHncmSeedFraction = 0.5;

/// Picks `rprime_size` classes (uniformly, or seeded + HNCM), then for each
/// its representative plus I - 1 further samples. Leftover slots are filled
/// with samples of unselected classes. Every tuple is anchored at a
/// representative; negatives are drawn uniformly from other-class positions
/// (callers re-mine them for hard_pairs / hncm).
TupleBatch build_batch(const RepresentativeSet& reps, int rprime_size, const ClassIndex& index,
                       const BatchPlan& plan, Rng& rng, MiningMode mining, const RepCache& cache);

/// For every positive (anchor, positive) pick the nearest other-class
/// position to the anchor as its negative; ties go to the lower position.
TupleSet hard_pair_mine(const Matrix& embeddings, const std::vector<int>& labels,
                        const std::vector<PairTuple>& positives, PairingPolicy policy);

/// Overwrites entries whose representative appears in the batch; bumps the
/// staleness of the rest.
void cache_update(RepCache& cache, const Matrix& batch_embeddings, const TupleBatch& batch,
                  const RepresentativeSet& reps);

}  // namespace profs

#endif  // PROFS_SAMPLING_HPP_
