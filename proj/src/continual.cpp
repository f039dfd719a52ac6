#include "crl/continual.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace crl {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + field + " " + what);
}

// Shuffled batch schedule over [0, n); the final short batch is kept.
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n, std::size_t batch_size,
                                                     Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

struct ForwardBatch {
    ContrastiveBatch contrastive;                    // unit embeddings + labels + bank rows
    std::vector<std::span<const double>> features;   // for the backward pass
    std::vector<Vec> units;                          // fresh rows for the bank refresh
};

// One optimizer step from combined per-anchor gradients, then the bank rows
// for the batch are refreshed with the forward-pass embeddings. lr == 0
// skips the step (frozen encoder) but still refreshes.
void step_and_refresh(RunState& state, MemoryBank& bank, const ForwardBatch& fb,
                      const std::vector<std::size_t>& rows, const std::vector<Vec>& unit_grads) {
    if (state.config.lr > 0.0) {
        std::vector<UpstreamGrad> upstream(fb.features.size());
        for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i].unit = unit_grads[i];
        GradientSet grads = backward(fb.features, state.params, upstream);
        apply_update(state.params, grads, state.config.lr, state.config.momentum, state.opt);
    }
    update_bank(bank, rows, fb.units);
}

// Re-selects and stores the exemplars of every relation in the task using
// the current encoder.
void select_task_exemplars(RunState& state, const Dataset& data, const Task& task) {
    for (int relation : task.relations) {
        std::vector<Vec> embeddings;
        std::vector<std::int64_t> ids;
        std::vector<std::size_t> members;  // indices into data.examples
        for (std::size_t idx : task.train) {
            const ExampleView v = data.view(idx);
            if (v.label != relation) continue;
            embeddings.push_back(embed(v.features, state.params).unit);
            ids.push_back(v.id);
            members.push_back(idx);
        }
        if (members.empty())
            throw std::invalid_argument("memorize: relation " + std::to_string(relation) +
                                        " has no training examples");
        const std::vector<std::size_t> picked =
            select_exemplars(embeddings, ids, state.config.memory_size, state.rng);
        std::vector<EpisodicMemory::Exemplar> exemplars;
        exemplars.reserve(picked.size());
        for (std::size_t pos : picked) {
            const ExampleView v = data.view(members[pos]);
            exemplars.push_back({v.id, v.label, Vec(v.features.begin(), v.features.end())});
        }
        state.memory.store_relation(relation, std::move(exemplars));
    }
}

}  // namespace

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch_size", "must be >= 1");
    require(memory_size >= 1, "memory_size", "must be >= 1");
    require(negatives_per_batch >= 1, "negatives_per_batch", "must be >= 1");
    require(d_h >= 1, "d_h", "must be >= 1");
    require(d_z >= 1, "d_z", "must be >= 1");
    require(tau_contrastive > 0.0, "tau_contrastive", "must be > 0");
    require(tau_kd > 0.0, "tau_kd", "must be > 0");
    require(lr >= 0.0, "lr", "must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
    require(kd_weight >= 0.0, "kd_weight", "must be >= 0");
    require(!(ablate_kd && ablate_cr), "ablate_kd/ablate_cr",
            "cannot both be set (replay would have no loss to optimize)");
}

RunState make_run_state(const TrainConfig& config) {
    config.validate();
    RunState state{config,
                   EncoderParams{},
                   SgdState{},
                   EpisodicMemory{},
                   std::nullopt,
                   Rng(config.seed),
                   RunStats{}};
    state.params = init_params({config.d_h, config.d_z}, state.rng);
    state.opt = make_sgd_state(state.params);
    return state;
}

EpochTrace train_new_task(RunState& state, const Dataset& data, const Task& task) {
    if (task.train.empty()) throw std::invalid_argument("train_new_task: empty training split");
    for (int relation : task.relations)
        if (state.memory.has_relation(relation))
            throw std::invalid_argument("train_new_task: relation " + std::to_string(relation) +
                                        " was already observed");

    std::vector<ExampleView> views;
    views.reserve(task.train.size());
    for (std::size_t idx : task.train) views.push_back(data.view(idx));
    MemoryBank bank = init_bank(state.params, views, MemoryBank::Role::init);

    EpochTrace trace;
    const std::size_t n = views.size();
    for (std::size_t epoch = 0; epoch < state.config.epochs_init; ++epoch) {
        double loss_sum = 0.0;
        std::size_t anchor_count = 0;
        for (const std::vector<std::size_t>& rows :
             batch_schedule(n, state.config.batch_size, state.rng)) {
            const std::size_t available = n - rows.size();
            if (available == 0) {
                ++state.stats.skipped_contrastive_batches;
                continue;
            }

            ForwardBatch fb;
            std::unordered_set<std::size_t> exclude;
            for (std::size_t row : rows) {
                const ExampleView v = views[row];
                Embedding emb = embed(v.features, state.params);
                fb.contrastive.anchors.push_back({emb.unit, v.label, row});
                fb.features.push_back(v.features);
                fb.units.push_back(std::move(emb.unit));
                exclude.insert(row);
            }
            const std::size_t count = std::min(state.config.negatives_per_batch, available);
            const std::vector<std::size_t> candidates =
                sample_indices(bank, count, exclude, state.rng);

            const LossOutput loss =
                supcon_loss(fb.contrastive, bank, candidates, state.config.tau_contrastive);
            loss_sum += loss.value;
            anchor_count += rows.size();
            step_and_refresh(state, bank, fb, rows, loss.anchor_grads);
        }
        trace.epoch_mean_loss.push_back(anchor_count == 0 ? 0.0
                                                          : loss_sum / static_cast<double>(anchor_count));
    }
    return trace;
}

void memorize(RunState& state, const Dataset& data, const Task& task) {
    select_task_exemplars(state, data, task);
}

Distribution capture_memory_knowledge(RunState& state) {
    if (state.memory.empty())
        throw std::invalid_argument("capture_memory_knowledge: episodic memory is empty");
    std::vector<ClassMembers> members;
    for (int relation : state.memory.observed()) {
        ClassMembers cm;
        cm.class_id = relation;
        for (const EpisodicMemory::Exemplar& ex : state.memory.relation_exemplars(relation))
            cm.embeddings.push_back(embed(ex.features, state.params).unit);
        members.push_back(std::move(cm));
    }
    const PrototypeSet protos = compute_prototypes(members);
    Distribution p_ref = softmax_rows(cosine_knowledge(protos), state.config.tau_kd);
    state.memory_knowledge = p_ref;
    ++state.stats.knowledge_captures;
    return p_ref;
}

EpochTrace replay(RunState& state, const Dataset& data, const Task& current_task) {
    if (state.memory.empty()) throw std::invalid_argument("replay: episodic memory is empty");
    if (state.config.ablate_kd && state.config.ablate_cr)
        throw std::invalid_argument("replay: both loss terms ablated, nothing to optimize");
    if (!state.config.ablate_kd && !state.memory_knowledge.has_value())
        throw std::invalid_argument("replay: memory knowledge was not captured");
    ++state.stats.replay_phases;

    // Replay bank over the whole episodic memory; row order = observation
    // order of the store.
    const std::vector<const EpisodicMemory::Exemplar*> exemplars = state.memory.all();
    std::unordered_set<std::int64_t> memory_ids;
    for (const auto* ex : exemplars) memory_ids.insert(ex->example_id);

    std::vector<ExampleView> views;
    views.reserve(exemplars.size());
    for (const auto* ex : exemplars) views.push_back({ex->example_id, ex->label, ex->features});
    MemoryBank bank = init_bank(state.params, views, MemoryBank::Role::replay);

    EpochTrace trace;
    const std::size_t n = views.size();
    for (std::size_t epoch = 0; epoch < state.config.epochs_replay; ++epoch) {
        double loss_sum = 0.0;
        std::size_t anchor_count = 0;
        for (const std::vector<std::size_t>& rows :
             batch_schedule(n, state.config.batch_size, state.rng)) {
            ++state.stats.replay_batches;
            state.stats.replay_examples += rows.size();

            ForwardBatch fb;
            for (std::size_t row : rows) {
                const ExampleView v = views[row];
                if (!memory_ids.count(v.id)) ++state.stats.replay_non_memory_examples;
                Embedding emb = embed(v.features, state.params);
                fb.contrastive.anchors.push_back({emb.unit, v.label, row});
                fb.features.push_back(v.features);
                fb.units.push_back(std::move(emb.unit));
            }

            double total = 0.0;
            std::vector<Vec> unit_grads(rows.size(), Vec(state.params.d_z, 0.0));
            bool any_term = false;

            if (!state.config.ablate_cr) {
                if (n > rows.size()) {
                    const LossOutput cr =
                        replay_con_loss(fb.contrastive, bank, state.config.tau_contrastive);
                    total += cr.value;
                    for (std::size_t i = 0; i < rows.size(); ++i)
                        axpy(1.0, cr.anchor_grads[i], unit_grads[i]);
                    any_term = true;
                } else {
                    ++state.stats.skipped_contrastive_batches;
                }
            }
            if (!state.config.ablate_kd) {
                const Distribution& p_ref = *state.memory_knowledge;
                const TempPrototypeSet temp =
                    temp_prototypes(bank, fb.contrastive, p_ref.class_ids);
                const LossOutput kd = kd_loss(p_ref, temp, state.config.tau_kd);
                total += state.config.kd_weight * kd.value;
                for (std::size_t i = 0; i < rows.size(); ++i)
                    axpy(state.config.kd_weight, kd.anchor_grads[i], unit_grads[i]);
                any_term = true;
            }

            if (!any_term) continue;  // degenerate: contrastive skipped, kd ablated
            loss_sum += total;
            anchor_count += rows.size();
            step_and_refresh(state, bank, fb, rows, unit_grads);
        }
        trace.epoch_mean_loss.push_back(anchor_count == 0 ? 0.0
                                                          : loss_sum / static_cast<double>(anchor_count));
    }

    // Re-select the current task's exemplars with the replay-updated encoder.
    select_task_exemplars(state, data, current_task);
    return trace;
}

PrototypeSet memory_prototypes(const RunState& state) {
    if (state.memory.empty())
        throw std::invalid_argument("memory_prototypes: episodic memory is empty");
    std::vector<ClassMembers> members;
    for (int relation : state.memory.observed()) {
        ClassMembers cm;
        cm.class_id = relation;
        for (const EpisodicMemory::Exemplar& ex : state.memory.relation_exemplars(relation))
            cm.embeddings.push_back(embed(ex.features, state.params).unit);
        members.push_back(std::move(cm));
    }
    return compute_prototypes(members);
}

StepEval evaluate(RunState& state, const Dataset& data, std::span<const Task> tasks) {
    const PrototypeSet protos = memory_prototypes(state);

    StepEval out;
    std::size_t total_correct = 0;
    for (const Task& task : tasks) {
        std::size_t correct = 0;
        std::size_t seen = 0;
        for (std::size_t idx : task.test) {
            const ExampleView v = data.view(idx);
            if (!state.memory.has_relation(v.label)) {
                ++out.excluded;
                ++state.stats.eval_skipped_unobserved;
                continue;
            }
            const Embedding emb = embed(v.features, state.params);
            if (ncm_predict(emb.unit, protos) == v.label) ++correct;
            ++seen;
        }
        out.per_task.push_back(seen == 0 ? 0.0
                                         : static_cast<double>(correct) / static_cast<double>(seen));
        out.evaluated += seen;
        total_correct += correct;
    }
    if (out.evaluated == 0) throw std::runtime_error("evaluate: no evaluable test examples");
    out.overall = static_cast<double>(total_correct) / static_cast<double>(out.evaluated);
    return out;
}

AccuracyMatrix run_sequence(const TaskStream& stream, const TrainConfig& config,
                            std::size_t k_limit, RunState* out_state) {
    if (!stream.dataset) throw std::invalid_argument("run_sequence: stream has no dataset");
    if (stream.tasks.empty()) throw std::invalid_argument("run_sequence: stream has no tasks");

    const Dataset& data = *stream.dataset;
    const std::size_t total = stream.tasks.size();
    const std::size_t steps = (k_limit == 0) ? total : std::min(k_limit, total);

    RunState state = make_run_state(config);
    AccuracyMatrix matrix;
    matrix.steps = steps;
    for (std::size_t k = 0; k < steps; ++k) {
        if (k >= 1) capture_memory_knowledge(state);
        train_new_task(state, data, stream.tasks[k]);
        memorize(state, data, stream.tasks[k]);
        if (k >= 1) replay(state, data, stream.tasks[k]);

        const StepEval eval =
            evaluate(state, data, std::span<const Task>(stream.tasks.data(), k + 1));
        matrix.per_task.push_back(eval.per_task);
        matrix.overall.push_back(eval.overall);
    }
    if (out_state) *out_state = std::move(state);
    return matrix;
}

}  // namespace crl
