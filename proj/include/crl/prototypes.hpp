// Class prototypes over memory embeddings, their cosine knowledge matrix,
// and the nearest-class-mean classifier.
#pragma once

#include <span>
#include <vector>

#include "crl/linalg.hpp"

namespace crl {

struct PrototypeSet {
    std::vector<int> class_ids;  // observed-relation order
    std::vector<Vec> vectors;    // mean embedding per class
    std::vector<std::size_t> counts;

    std::size_t size() const { return class_ids.size(); }
};

struct ClassMembers {
    int class_id = 0;
    std::vector<Vec> embeddings;
};

// Arithmetic mean of member embeddings per class, in the given order.
// Rejects empty classes.
PrototypeSet compute_prototypes(const std::vector<ClassMembers>& members);

struct KnowledgeMatrix {
    std::vector<int> class_ids;
    Mat a;  // pairwise cosine similarities, entries in [-1, 1]
};

// a_ij = p_i . p_j / (|p_i| |p_j|). Rejects zero-norm prototypes.
KnowledgeMatrix cosine_knowledge(const PrototypeSet& protos);

// argmin_c |query - p_c|, ties broken by smallest class id.
int ncm_predict(std::span<const double> query, const PrototypeSet& protos);

}  // namespace crl
