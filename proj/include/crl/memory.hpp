// Memory bank lifecycle (init, sample, refresh), per-relation episodic
// exemplar storage, and k-means exemplar selection.
#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "crl/data.hpp"
#include "crl/encoder.hpp"
#include "crl/linalg.hpp"
#include "crl/rng.hpp"

namespace crl {

struct MemoryBank {
    enum class Role { init, replay };

    Role role = Role::init;
    std::size_t dim = 0;
    std::vector<Vec> rows;    // unit embeddings, one per example
    std::vector<int> labels;  // parallel to rows

    std::size_t size() const { return rows.size(); }
};

// One row per example: the current encoder's unit embedding. Degenerate
// (zero raw) embeddings propagate as errors.
MemoryBank init_bank(const EncoderParams& params, std::span<const ExampleView> examples,
                     MemoryBank::Role role);

// Replaces exactly the addressed rows with the fresh embeddings. Rejects
// out-of-range indices or mismatched list lengths before touching the bank.
void update_bank(MemoryBank& bank, std::span<const std::size_t> indices,
                 const std::vector<Vec>& fresh);

// Uniform sample without replacement from the bank's indices minus
// `exclude`; deterministic given the rng state.
std::vector<std::size_t> sample_indices(const MemoryBank& bank, std::size_t count,
                                        const std::unordered_set<std::size_t>& exclude, Rng& rng);

struct KmeansResult {
    std::vector<std::size_t> assignments;  // per point, cluster in [0, k)
    std::vector<Vec> centroids;
    std::vector<double> objective_history;  // SSE after each assignment pass
    std::size_t iterations = 0;
};

// Lloyd's algorithm with k distinct seeded-random points as initial
// centroids. An empty cluster is re-seeded at the point farthest from its
// assigned centroid. Stops when assignments are stable or after max_iters.
KmeansResult kmeans(const std::vector<Vec>& points, std::size_t k, Rng& rng,
                    std::size_t max_iters = 100);

// Picks min(memory_size, class size) exemplars: everything when the class
// fits, otherwise one per k-means cluster (the member nearest its centroid,
// ties by smallest example id). Returns positions into the input arrays.
std::vector<std::size_t> select_exemplars(const std::vector<Vec>& embeddings,
                                          std::span<const std::int64_t> example_ids,
                                          std::size_t memory_size, Rng& rng);

// Per-relation exemplar store M_r accumulated across tasks, plus the
// observed relation set in observation order.
class EpisodicMemory {
  public:
    struct Exemplar {
        std::int64_t example_id = 0;
        int label = 0;
        Vec features;
    };

    // Replaces the relation's exemplar list; records the relation as
    // observed on first store.
    void store_relation(int relation, std::vector<Exemplar> exemplars);

    const std::vector<int>& observed() const { return observed_; }
    bool has_relation(int relation) const { return per_relation_.count(relation) > 0; }
    const std::vector<Exemplar>& relation_exemplars(int relation) const;

    // All exemplars in observation order (relation by relation, stored order
    // within a relation).
    std::vector<const Exemplar*> all() const;

    std::size_t total() const;
    bool empty() const { return observed_.empty(); }

  private:
    std::vector<int> observed_;
    std::unordered_map<int, std::vector<Exemplar>> per_relation_;
};

}  // namespace crl
