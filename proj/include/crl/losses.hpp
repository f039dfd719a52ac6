// Differentiable loss kernels: supervised contrastive loss against a memory
// bank, contrastive replay over the full bank, and KL distillation between
// prototype similarity distributions. Bank rows are constants; gradients
// flow only to the batch's fresh embeddings.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crl/linalg.hpp"
#include "crl/memory.hpp"
#include "crl/prototypes.hpp"

namespace crl {

// Anchor bank_index values >= bank size mean "this anchor has no row in the
// bank" (nothing to exclude).
struct Anchor {
    Vec unit;  // unit-norm embedding, length d_z
    int label = 0;
    std::size_t bank_index = kNoBankRow;

    static constexpr std::size_t kNoBankRow = static_cast<std::size_t>(-1);
};

struct ContrastiveBatch {
    std::vector<Anchor> anchors;
};

struct LossOutput {
    double value = 0.0;
    std::vector<Vec> anchor_grads;  // d(value)/d(anchor unit embedding), one per anchor
    std::size_t skipped_anchors = 0;
};

// Row-stochastic matrix over observed classes; row i is the metric
// distribution of prototype i.
struct Distribution {
    std::vector<int> class_ids;
    Mat rows;
};

// Supervised contrastive loss of the batch against bank rows addressed by
// `candidate_indices`. Every anchor's own bank row is removed from the
// candidate set before positives and denominators are formed. Anchors whose
// label has no positive left contribute zero and are counted as skipped.
LossOutput supcon_loss(const ContrastiveBatch& batch, const MemoryBank& bank,
                       std::span<const std::size_t> candidate_indices, double tau);

// Contrastive replay: supcon_loss with the candidate set equal to the whole
// bank (minus the anchors' own rows).
LossOutput replay_con_loss(const ContrastiveBatch& batch, const MemoryBank& bank, double tau);

// Row-wise temperature softmax with max subtraction. class_ids are carried
// through from the knowledge matrix.
Distribution softmax_rows(const KnowledgeMatrix& similarities, double tau);
Mat softmax_rows(const Mat& similarities, double tau);

// Temporary prototypes for distillation: per class, the mean over that
// class's bank rows, with rows owned by in-batch anchors replaced by the
// anchors' fresh (gradient-carrying) embeddings. Classes in `class_order`
// with no member in the batch use stored rows only.
struct TempPrototypeSet {
    std::vector<int> class_ids;
    std::vector<Vec> vectors;
    std::vector<std::size_t> counts;
    // Per class, indices of anchors whose fresh embedding entered the mean.
    std::vector<std::vector<std::size_t>> fresh_members;
    std::size_t n_anchors = 0;
};

TempPrototypeSet temp_prototypes(const MemoryBank& bank, const ContrastiveBatch& batch,
                                 std::span<const int> class_order);

// L_KL = sum_i KL(P_i || Q_i) where Q is the row-softmax of the temporary
// prototypes' cosine knowledge at temperature tau. P_ref is a constant;
// gradients reach only the batch's fresh embeddings.
LossOutput kd_loss(const Distribution& p_ref, const TempPrototypeSet& temp, double tau);

}  // namespace crl
