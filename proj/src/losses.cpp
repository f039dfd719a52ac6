#include "crl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace crl {

namespace {

constexpr double kLogClamp = 1e-12;

void check_batch(const ContrastiveBatch& batch, const MemoryBank& bank) {
    if (batch.anchors.empty()) throw std::invalid_argument("contrastive loss: empty batch");
    for (const Anchor& a : batch.anchors) {
        if (a.unit.size() != bank.dim)
            throw std::invalid_argument("contrastive loss: anchor dimension mismatch");
        if (a.bank_index != Anchor::kNoBankRow && a.bank_index >= bank.size())
            throw std::invalid_argument("contrastive loss: anchor bank index out of range");
    }
}

}  // namespace

LossOutput supcon_loss(const ContrastiveBatch& batch, const MemoryBank& bank,
                       std::span<const std::size_t> candidate_indices, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("supcon_loss: tau must be positive");
    if (candidate_indices.empty()) throw std::invalid_argument("supcon_loss: empty candidate set");
    check_batch(batch, bank);

    // Remove every anchor's own bank row from the shared candidate set.
    std::unordered_set<std::size_t> own;
    for (const Anchor& a : batch.anchors)
        if (a.bank_index != Anchor::kNoBankRow) own.insert(a.bank_index);
    std::vector<std::size_t> cand;
    cand.reserve(candidate_indices.size());
    for (std::size_t idx : candidate_indices) {
        if (idx >= bank.size())
            throw std::invalid_argument("supcon_loss: candidate index out of range");
        if (!own.count(idx)) cand.push_back(idx);
    }
    if (cand.empty()) throw std::invalid_argument("supcon_loss: candidate set empty after exclusion");

    LossOutput out;
    out.anchor_grads.assign(batch.anchors.size(), Vec(bank.dim, 0.0));

    std::vector<double> sims(cand.size());
    std::vector<double> probs(cand.size());

    for (std::size_t ai = 0; ai < batch.anchors.size(); ++ai) {
        const Anchor& a = batch.anchors[ai];

        std::size_t n_pos = 0;
        double max_sim = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cand.size(); ++j) {
            sims[j] = dot(a.unit, bank.rows[cand[j]]) / tau;
            max_sim = std::max(max_sim, sims[j]);
            if (bank.labels[cand[j]] == a.label) ++n_pos;
        }
        if (n_pos == 0) {
            ++out.skipped_anchors;
            continue;
        }

        // log-sum-exp with max subtraction
        double denom = 0.0;
        for (std::size_t j = 0; j < cand.size(); ++j) denom += std::exp(sims[j] - max_sim);
        const double lse = max_sim + std::log(denom);

        double pos_sim_sum = 0.0;
        for (std::size_t j = 0; j < cand.size(); ++j) {
            probs[j] = std::exp(sims[j] - max_sim) / denom;
            if (bank.labels[cand[j]] == a.label) pos_sim_sum += sims[j];
        }
        out.value += -(pos_sim_sum - static_cast<double>(n_pos) * lse) /
                     static_cast<double>(n_pos);

        // d/dz_i = (1/tau) * (sum_j probs_j * z_j - mean over positives of z_p)
        Vec& g = out.anchor_grads[ai];
        for (std::size_t j = 0; j < cand.size(); ++j) {
            double coef = probs[j];
            if (bank.labels[cand[j]] == a.label) coef -= 1.0 / static_cast<double>(n_pos);
            axpy(coef / tau, bank.rows[cand[j]], g);
        }
    }
    return out;
}

LossOutput replay_con_loss(const ContrastiveBatch& batch, const MemoryBank& bank, double tau) {
    std::vector<std::size_t> all(bank.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return supcon_loss(batch, bank, all, tau);
}

Mat softmax_rows(const Mat& similarities, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("softmax_rows: tau must be positive");
    if (similarities.rows != similarities.cols)
        throw std::invalid_argument("softmax_rows: matrix must be square");
    for (double v : similarities.data)
        if (!std::isfinite(v)) throw std::invalid_argument("softmax_rows: non-finite input");

    Mat out(similarities.rows, similarities.cols);
    for (std::size_t i = 0; i < similarities.rows; ++i) {
        auto row = similarities.row(i);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double denom = 0.0;
        for (std::size_t j = 0; j < similarities.cols; ++j) {
            out.at(i, j) = std::exp((row[j] - mx) / tau);
            denom += out.at(i, j);
        }
        for (std::size_t j = 0; j < similarities.cols; ++j) out.at(i, j) /= denom;
    }
    return out;
}

Distribution softmax_rows(const KnowledgeMatrix& similarities, double tau) {
    Distribution d;
    d.class_ids = similarities.class_ids;
    d.rows = softmax_rows(similarities.a, tau);
    return d;
}

TempPrototypeSet temp_prototypes(const MemoryBank& bank, const ContrastiveBatch& batch,
                                 std::span<const int> class_order) {
    TempPrototypeSet out;
    out.n_anchors = batch.anchors.size();

    // Map bank row -> anchor carrying its fresh embedding.
    std::unordered_map<std::size_t, std::size_t> fresh_of_row;
    for (std::size_t ai = 0; ai < batch.anchors.size(); ++ai) {
        const Anchor& a = batch.anchors[ai];
        if (a.bank_index != Anchor::kNoBankRow) {
            if (a.bank_index >= bank.size())
                throw std::invalid_argument("temp_prototypes: anchor bank index out of range");
            fresh_of_row[a.bank_index] = ai;
        }
    }

    for (int cls : class_order) {
        Vec sum(bank.dim, 0.0);
        std::size_t count = 0;
        std::vector<std::size_t> fresh;
        for (std::size_t row = 0; row < bank.size(); ++row) {
            if (bank.labels[row] != cls) continue;
            auto it = fresh_of_row.find(row);
            if (it != fresh_of_row.end()) {
                axpy(1.0, batch.anchors[it->second].unit, sum);
                fresh.push_back(it->second);
            } else {
                axpy(1.0, bank.rows[row], sum);
            }
            ++count;
        }
        if (count == 0)
            throw std::invalid_argument("temp_prototypes: class " + std::to_string(cls) +
                                        " has no rows in the bank");
        for (double& v : sum) v /= static_cast<double>(count);
        out.class_ids.push_back(cls);
        out.vectors.push_back(std::move(sum));
        out.counts.push_back(count);
        out.fresh_members.push_back(std::move(fresh));
    }
    return out;
}

LossOutput kd_loss(const Distribution& p_ref, const TempPrototypeSet& temp, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("kd_loss: tau must be positive");
    const std::size_t n = temp.class_ids.size();
    if (n == 0) throw std::invalid_argument("kd_loss: empty prototype set");
    if (p_ref.class_ids != temp.class_ids)
        throw std::invalid_argument("kd_loss: class sets of P and temporary prototypes differ");
    if (p_ref.rows.rows != n || p_ref.rows.cols != n)
        throw std::invalid_argument("kd_loss: P shape does not match class count");

    // Cosine knowledge of the temporary prototypes.
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = std::sqrt(squared_norm(temp.vectors[i]));
        if (norms[i] == 0.0)
            throw std::invalid_argument("kd_loss: zero-norm temporary prototype");
    }
    Mat sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sim.at(i, j) = dot(temp.vectors[i], temp.vectors[j]) / (norms[i] * norms[j]);

    Mat q = softmax_rows(sim, tau);

    LossOutput out;
    out.anchor_grads.assign(temp.n_anchors, Vec(temp.vectors.front().size(), 0.0));

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double p = p_ref.rows.at(i, j);
            if (p > 0.0)
                out.value += p * (std::log(p) - std::log(std::max(q.at(i, j), kLogClamp)));
        }

    // dL/d sim_ij = (q_ij - p_ij) / tau; chain through the cosine into the
    // prototype vectors, then into each fresh member's embedding.
    std::vector<Vec> proto_grads(n, Vec(temp.vectors.front().size(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;  // diagonal cosine is constant 1
            const double gs = (q.at(i, j) - p_ref.rows.at(i, j)) / tau;
            if (gs == 0.0) continue;
            const Vec& u = temp.vectors[i];
            const Vec& v = temp.vectors[j];
            const double inv = 1.0 / (norms[i] * norms[j]);
            const double c = sim.at(i, j);
            // d cos(u,v)/du = v/(|u||v|) - cos * u/|u|^2
            for (std::size_t d = 0; d < u.size(); ++d) {
                proto_grads[i][d] += gs * (v[d] * inv - c * u[d] / (norms[i] * norms[i]));
                proto_grads[j][d] += gs * (u[d] * inv - c * v[d] / (norms[j] * norms[j]));
            }
        }
    }
    for (std::size_t cidx = 0; cidx < n; ++cidx) {
        const double scale = 1.0 / static_cast<double>(temp.counts[cidx]);
        for (std::size_t ai : temp.fresh_members[cidx])
            axpy(scale, proto_grads[cidx], out.anchor_grads[ai]);
    }
    return out;
}

}  // namespace crl
