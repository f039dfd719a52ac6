#include "crl/memory.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace crl {

MemoryBank init_bank(const EncoderParams& params, std::span<const ExampleView> examples,
                     MemoryBank::Role role) {
    if (examples.empty()) throw std::invalid_argument("init_bank: no examples");
    MemoryBank bank;
    bank.role = role;
    bank.dim = params.d_z;
    bank.rows.reserve(examples.size());
    bank.labels.reserve(examples.size());
    for (const ExampleView& ex : examples) {
        bank.rows.push_back(embed(ex.features, params).unit);
        bank.labels.push_back(ex.label);
    }
    return bank;
}

void update_bank(MemoryBank& bank, std::span<const std::size_t> indices,
                 const std::vector<Vec>& fresh) {
    if (indices.size() != fresh.size())
        throw std::invalid_argument("update_bank: index and embedding counts differ");
    for (std::size_t idx : indices)
        if (idx >= bank.size())
            throw std::invalid_argument("update_bank: index " + std::to_string(idx) +
                                        " out of range");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (fresh[i].size() != bank.dim)
            throw std::invalid_argument("update_bank: embedding dimension mismatch");
        bank.rows[indices[i]] = fresh[i];
    }
}

std::vector<std::size_t> sample_indices(const MemoryBank& bank, std::size_t count,
                                        const std::unordered_set<std::size_t>& exclude, Rng& rng) {
    std::vector<std::size_t> candidates;
    candidates.reserve(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i)
        if (!exclude.count(i)) candidates.push_back(i);
    if (count > candidates.size())
        throw std::invalid_argument("sample_indices: requested " + std::to_string(count) +
                                    " from " + std::to_string(candidates.size()) + " candidates");
    // Partial Fisher-Yates: the first `count` slots become the sample.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(count);
    return candidates;
}

namespace {

double sse_objective(const std::vector<Vec>& points, const std::vector<std::size_t>& assign,
                     const std::vector<Vec>& centroids) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        s += squared_distance(points[i], centroids[assign[i]]);
    return s;
}

}  // namespace

KmeansResult kmeans(const std::vector<Vec>& points, std::size_t k, Rng& rng,
                    std::size_t max_iters) {
    if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
    if (k > points.size())
        throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds " +
                                    std::to_string(points.size()) + " points");

    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();

    // k distinct seeded-random points as initial centroids.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(n - i);
        std::swap(order[i], order[j]);
    }
    KmeansResult res;
    res.centroids.reserve(k);
    for (std::size_t c = 0; c < k; ++c) res.centroids.push_back(points[order[c]]);
    res.assignments.assign(n, 0);

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        // Assignment pass.
        bool changed = iter == 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(points[i], res.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignments[i] != best) changed = true;
            res.assignments[i] = best;
        }
        res.objective_history.push_back(sse_objective(points, res.assignments, res.centroids));
        res.iterations = iter + 1;
        if (!changed && iter > 0) break;

        // Update pass.
        std::vector<std::size_t> counts(k, 0);
        std::vector<Vec> sums(k, Vec(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[res.assignments[i]];
            axpy(1.0, points[i], sums[res.assignments[i]]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (std::size_t d = 0; d < dim; ++d)
                    res.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            } else {
                // Re-seed at the point farthest from its assigned centroid;
                // the next assignment pass claims at least that point.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = squared_distance(points[i], res.centroids[res.assignments[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                res.centroids[c] = points[far];
            }
        }
    }
    return res;
}

std::vector<std::size_t> select_exemplars(const std::vector<Vec>& embeddings,
                                          std::span<const std::int64_t> example_ids,
                                          std::size_t memory_size, Rng& rng) {
    if (embeddings.empty()) throw std::invalid_argument("select_exemplars: empty class");
    if (embeddings.size() != example_ids.size())
        throw std::invalid_argument("select_exemplars: ids and embeddings differ in length");
    if (memory_size == 0) throw std::invalid_argument("select_exemplars: memory size must be >= 1");

    const std::size_t n = embeddings.size();
    if (n <= memory_size) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }

    KmeansResult km = kmeans(embeddings, memory_size, rng);
    std::vector<std::size_t> picked;
    picked.reserve(memory_size);
    for (std::size_t c = 0; c < memory_size; ++c) {
        std::size_t best = n;  // sentinel
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (km.assignments[i] != c) continue;
            const double d = squared_distance(embeddings[i], km.centroids[c]);
            if (d < best_d || (d == best_d && best < n && example_ids[i] < example_ids[best])) {
                best_d = d;
                best = i;
            }
        }
        if (best < n) picked.push_back(best);
    }
    // Clusters can end up empty when the class is dominated by duplicate
    // points; top up with the smallest-id unpicked members so the selection
    // always has min(O, class size) entries.
    if (picked.size() < memory_size) {
        std::vector<bool> taken(n, false);
        for (std::size_t p : picked) taken[p] = true;
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i]) rest.push_back(i);
        std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
            return example_ids[a] < example_ids[b];
        });
        for (std::size_t i = 0; i < rest.size() && picked.size() < memory_size; ++i)
            picked.push_back(rest[i]);
    }
    return picked;
}

void EpisodicMemory::store_relation(int relation, std::vector<Exemplar> exemplars) {
    if (exemplars.empty())
        throw std::invalid_argument("episodic memory: refusing to store an empty relation");
    for (const Exemplar& e : exemplars)
        if (e.label != relation)
            throw std::invalid_argument("episodic memory: exemplar label does not match relation");
    if (!per_relation_.count(relation)) observed_.push_back(relation);
    per_relation_[relation] = std::move(exemplars);
}

const std::vector<EpisodicMemory::Exemplar>& EpisodicMemory::relation_exemplars(
    int relation) const {
    auto it = per_relation_.find(relation);
    if (it == per_relation_.end())
        throw std::invalid_argument("episodic memory: relation not stored");
    return it->second;
}

std::vector<const EpisodicMemory::Exemplar*> EpisodicMemory::all() const {
    std::vector<const Exemplar*> out;
    out.reserve(total());
    for (int r : observed_)
        for (const Exemplar& e : per_relation_.at(r)) out.push_back(&e);
    return out;
}

std::size_t EpisodicMemory::total() const {
    std::size_t n = 0;
    for (const auto& [r, v] : per_relation_) n += v.size();
    return n;
}

}  // namespace crl
