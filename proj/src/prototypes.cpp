#include "crl/prototypes.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crl {

PrototypeSet compute_prototypes(const std::vector<ClassMembers>& members) {
    if (members.empty()) throw std::invalid_argument("compute_prototypes: no classes");
    PrototypeSet out;
    out.class_ids.reserve(members.size());
    out.vectors.reserve(members.size());
    out.counts.reserve(members.size());
    for (const ClassMembers& cm : members) {
        if (cm.embeddings.empty())
            throw std::invalid_argument("compute_prototypes: class " +
                                        std::to_string(cm.class_id) + " has no members");
        const std::size_t dim = cm.embeddings.front().size();
        Vec mean(dim, 0.0);
        for (const Vec& z : cm.embeddings) {
            if (z.size() != dim)
                throw std::invalid_argument("compute_prototypes: inconsistent embedding dims");
            axpy(1.0, z, mean);
        }
        for (double& v : mean) v /= static_cast<double>(cm.embeddings.size());
        out.class_ids.push_back(cm.class_id);
        out.vectors.push_back(std::move(mean));
        out.counts.push_back(cm.embeddings.size());
    }
    return out;
}

KnowledgeMatrix cosine_knowledge(const PrototypeSet& protos) {
    const std::size_t n = protos.size();
    if (n == 0) throw std::invalid_argument("cosine_knowledge: empty prototype set");

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = std::sqrt(squared_norm(protos.vectors[i]));
        if (norms[i] == 0.0)
            throw std::invalid_argument("cosine_knowledge: zero-norm prototype for class " +
                                        std::to_string(protos.class_ids[i]));
    }
    KnowledgeMatrix km;
    km.class_ids = protos.class_ids;
    km.a = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            km.a.at(i, j) = dot(protos.vectors[i], protos.vectors[j]) / (norms[i] * norms[j]);
    return km;
}

int ncm_predict(std::span<const double> query, const PrototypeSet& protos) {
    if (protos.size() == 0) throw std::invalid_argument("ncm_predict: empty prototype set");
    if (query.size() != protos.vectors.front().size())
        throw std::invalid_argument("ncm_predict: query dimension mismatch");
    int best_class = 0;
    double best_d = std::numeric_limits<double>::infinity();
    bool first = true;
    for (std::size_t c = 0; c < protos.size(); ++c) {
        const double d = squared_distance(query, protos.vectors[c]);
        if (first || d < best_d || (d == best_d && protos.class_ids[c] < best_class)) {
            best_d = d;
            best_class = protos.class_ids[c];
            first = false;
        }
    }
    return best_class;
}

}  // namespace crl
