#include "profs/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace profs {

namespace {

int uniform_index(Rng& rng, int n) {
  std::uniform_int_distribution<int> dist(0, n - 1);
  return dist(rng);
}

// k distinct elements of `pool`, in draw order (partial Fisher-Yates).
std::vector<int> draw_distinct(std::vector<int> pool, int k, Rng& rng) {
  for (int i = 0; i < k; ++i) {
    const int j = i + uniform_index(rng, static_cast<int>(pool.size()) - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

ClassIndex::ClassIndex(const std::vector<int>& labels) : labels_(labels) {
  int num_classes = 0;
  for (int l : labels) {
    if (l < 1) throw Error("labels must be positive");
    num_classes = std::max(num_classes, l);
  }
  members_.resize(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) members_[labels[i] - 1].push_back(i);
  for (int l = 1; l <= num_classes; ++l)
    if (members_[l - 1].empty()) throw Error("empty class " + std::to_string(l));
}

int ClassIndex::min_class_size() const {
  int m = std::numeric_limits<int>::max();
  for (const auto& c : members_) m = std::min(m, static_cast<int>(c.size()));
  return members_.empty() ? 0 : m;
}

RepresentativeSet sample_representatives(const ClassIndex& index, Rng& rng, RepUsage& usage) {
  const int num_classes = index.num_classes();
  usage.used.resize(static_cast<std::size_t>(num_classes));
  RepresentativeSet out;
  out.reps.resize(static_cast<std::size_t>(num_classes));
  const int cycle_len = std::max(1, index.min_class_size());
  out.cycle_id = usage.calls / cycle_len;

  for (int l = 1; l <= num_classes; ++l) {
    const auto& members = index.members(l);
    auto& used = usage.used[l - 1];
    if (used.size() >= members.size()) used.clear();
    std::vector<int> candidates;
    candidates.reserve(members.size() - used.size());
    for (int m : members)
      if (std::find(used.begin(), used.end(), m) == used.end()) candidates.push_back(m);
    const int pick = candidates[uniform_index(rng, static_cast<int>(candidates.size()))];
    used.push_back(pick);
    out.reps[l - 1] = pick;
  }
  ++usage.calls;
  return out;
}

int RepCache::num_initialized() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const auto& e) { return e.has_value(); }));
}

std::string to_string(PairingPolicy p) {
  return p == PairingPolicy::balanced_pairs ? "balanced_pairs" : "triplets";
}

std::string to_string(MiningMode m) {
  switch (m) {
    case MiningMode::random:
      return "random";
    case MiningMode::hard_pairs:
      return "hard_pairs";
    case MiningMode::hncm:
      return "hncm";
  }
  return "?";
}

PairingPolicy parse_pairing_policy(const std::string& s) {
  if (s == "balanced_pairs") return PairingPolicy::balanced_pairs;
  if (s == "triplets") return PairingPolicy::triplets;
  throw ValidationError("unknown pairing policy '" + s + "'");
}

MiningMode parse_mining_mode(const std::string& s) {
  if (s == "random") return MiningMode::random;
  if (s == "hard_pairs") return MiningMode::hard_pairs;
  if (s == "hncm") return MiningMode::hncm;
  throw ValidationError("unknown mining mode '" + s + "'");
}

void BatchPlan::validate() const {
  if (batch_size < 2) throw ValidationError("batch size must be at least 2");
  if (per_class < 2) throw ValidationError("per_class must be at least 2 for positive pairs");
  if (batch_size % per_class != 0)
    throw ValidationError("batch size must be divisible by per_class");
}

long derive_M(long batch_size, long per_class, long num_classes, long rho) {
  if (batch_size <= 0 || per_class <= 0 || num_classes <= 0 || rho <= 0)
    throw Error("derive_M inputs must be positive");
  const long numerator = rho * per_class * num_classes;
  return (numerator + batch_size - 1) / batch_size;
}

HncmResult hncm_select(const std::vector<int>& anchor_classes, const RepCache& cache, int count) {
  const int num_classes = static_cast<int>(cache.entries.size());
  std::vector<char> is_anchor(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> live_anchors;
  for (int a : anchor_classes) {
    if (a < 1 || a > num_classes) throw Error("anchor class out of range");
    is_anchor[a - 1] = 1;
    if (cache.entries[a - 1]) live_anchors.push_back(a);
  }
  if (live_anchors.empty()) throw Error("hncm: no anchor has a cached representative");

  HncmResult out;
  std::vector<std::pair<double, int>> scored;
  for (int c = 1; c <= num_classes; ++c) {
    if (is_anchor[c - 1] || !cache.entries[c - 1]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int a : live_anchors) {
      best = std::min(best, (*cache.entries[c - 1] - *cache.entries[a - 1]).norm());
      ++out.distance_evaluations;
    }
    scored.emplace_back(best, c);
  }
  if (static_cast<int>(scored.size()) < count)
    throw Error("hncm: insufficient initialized cache entries");
  std::partial_sort(scored.begin(), scored.begin() + count, scored.end());
  for (int i = 0; i < count; ++i) out.labels.push_back(scored[i].second);
  return out;
}

TupleBatch build_batch(const RepresentativeSet& reps, int rprime_size, const ClassIndex& index,
                       const BatchPlan& plan, Rng& rng, MiningMode mining, const RepCache& cache) {
  plan.validate();
  const int num_classes = index.num_classes();
  if (static_cast<int>(reps.reps.size()) != num_classes)
    throw Error("representative set does not cover every class");
  if (rprime_size < 1 || rprime_size > num_classes)
    throw ValidationError("representative subset size must be in [1, L]");
  if (static_cast<long>(rprime_size) * plan.per_class > plan.batch_size)
    throw ValidationError("representative subset size times per_class exceeds batch size");

  TupleBatch batch;
  std::vector<int> all_labels(static_cast<std::size_t>(num_classes));
  std::iota(all_labels.begin(), all_labels.end(), 1);
  if (mining == MiningMode::hncm && rprime_size > 1 && cache.num_initialized() > rprime_size) {
    const int seeds =
        std::max(1, static_cast<int>(static_cast<double>(rprime_size) * kHncmSeedFraction));
    batch.classes = draw_distinct(all_labels, seeds, rng);
    const auto hard = hncm_select(batch.classes, cache, rprime_size - seeds);
    batch.classes.insert(batch.classes.end(), hard.labels.begin(), hard.labels.end());
  } else {
    batch.classes = draw_distinct(all_labels, rprime_size, rng);
  }

  std::vector<std::vector<int>> class_positions;
  for (int c : batch.classes) {
    const int rep = reps.of(c);
    std::vector<int> others;
    for (int m : index.members(c))
      if (m != rep) others.push_back(m);
    const int need = plan.per_class - 1;
    std::vector<int> chosen;
    if (static_cast<int>(others.size()) >= need) {
      chosen = draw_distinct(others, need, rng);
    } else if (plan.allow_replacement) {
      const auto& pool = others.empty() ? index.members(c) : others;
      for (int k = 0; k < need; ++k)
        chosen.push_back(pool[uniform_index(rng, static_cast<int>(pool.size()))]);
    } else {
      throw ValidationError("class " + std::to_string(c) + " has fewer than per_class samples");
    }
    std::vector<int> positions;
    positions.push_back(static_cast<int>(batch.samples.size()));
    batch.rep_positions.push_back(positions.back());
    batch.samples.push_back(rep);
    batch.labels.push_back(c);
    for (int m : chosen) {
      positions.push_back(static_cast<int>(batch.samples.size()));
      batch.samples.push_back(m);
      batch.labels.push_back(c);
    }
    class_positions.push_back(std::move(positions));
  }

  const int filler = plan.batch_size - static_cast<int>(batch.samples.size());
  if (filler > 0) {
    std::vector<char> selected(static_cast<std::size_t>(num_classes), 0);
    for (int c : batch.classes) selected[c - 1] = 1;
    std::vector<int> pool;
    for (int i = 0; i < index.num_samples(); ++i)
      if (!selected[index.label_of(i) - 1]) pool.push_back(i);
    if (static_cast<int>(pool.size()) < filler)
      throw ValidationError("not enough samples outside the selected classes to fill the batch");
    for (int m : draw_distinct(pool, filler, rng)) {
      batch.samples.push_back(m);
      batch.labels.push_back(index.label_of(m));
    }
  }

  const int n = static_cast<int>(batch.samples.size());
  for (const auto& positions : class_positions) {
    const int anchor = positions.front();
    std::vector<int> negatives;
    for (int j = 0; j < n; ++j)
      if (batch.labels[j] != batch.labels[anchor]) negatives.push_back(j);
    if (negatives.empty()) throw ValidationError("batch has no negative candidates");
    for (std::size_t k = 1; k < positions.size(); ++k) {
      const PairTuple pos{anchor, positions[k], 1};
      batch.positives.push_back(pos);
      const int neg = negatives[uniform_index(rng, static_cast<int>(negatives.size()))];
      if (plan.policy == PairingPolicy::balanced_pairs) {
        batch.tuples.pairs.push_back(pos);
        batch.tuples.pairs.push_back({anchor, neg, 0});
      } else {
        batch.tuples.triplets.push_back({anchor, positions[k], neg});
      }
    }
  }
  return batch;
}

TupleSet hard_pair_mine(const Matrix& e, const std::vector<int>& labels,
                        const std::vector<PairTuple>& positives, PairingPolicy policy) {
  const int n = static_cast<int>(labels.size());
  TupleSet out;
  for (const auto& pos : positives) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (labels[j] == labels[pos.i]) continue;
      const double d = (e.col(pos.i) - e.col(j)).norm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best < 0) throw Error("no negative candidates in batch");
    if (policy == PairingPolicy::balanced_pairs) {
      out.pairs.push_back(pos);
      out.pairs.push_back({pos.i, best, 0});
    } else {
      out.triplets.push_back({pos.i, pos.j, best});
    }
  }
  return out;
}

void cache_update(RepCache& cache, const Matrix& batch_embeddings, const TupleBatch& batch,
                  const RepresentativeSet& reps) {
  std::vector<char> updated(cache.entries.size(), 0);
  for (std::size_t p = 0; p < batch.samples.size(); ++p) {
    const int label = batch.labels[p];
    if (reps.of(label) != batch.samples[p]) continue;
    cache.entries[label - 1] = batch_embeddings.col(static_cast<Eigen::Index>(p));
    cache.staleness[label - 1] = 0;
    updated[label - 1] = 1;
  }
  for (std::size_t l = 0; l < cache.entries.size(); ++l)
    if (!updated[l]) ++cache.staleness[l];
}

}  // namespace profs
