// Orchestrates the task sequence: initial contrastive training against a
// memory bank, k-means exemplar memorization, knowledge capture, replay with
// contrastive + distillation losses, and per-step NCM evaluation.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crl/data.hpp"
#include "crl/encoder.hpp"
#include "crl/losses.hpp"
#include "crl/memory.hpp"
#include "crl/prototypes.hpp"
#include "crl/rng.hpp"

namespace crl {

struct TrainConfig {
    std::size_t epochs_init = 10;
    std::size_t epochs_replay = 10;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double tau_contrastive = 0.1;
    double tau_kd = 0.1;
    double kd_weight = 1.0;
    std::size_t memory_size = 10;         // exemplars kept per relation (O)
    std::size_t negatives_per_batch = 128;  // candidate pool size per batch
    std::size_t d_h = 16;
    std::size_t d_z = 8;
    std::uint64_t seed = 1;
    bool ablate_kd = false;  // drop the distillation term during replay
    bool ablate_cr = false;  // drop the contrastive term during replay

    // Throws std::invalid_argument naming the offending field. lr == 0 is
    // allowed (training runs with the optimizer step skipped).
    void validate() const;
};

// Counters instrumenting the data path and the degenerate branches.
struct RunStats {
    std::size_t knowledge_captures = 0;
    std::size_t replay_phases = 0;
    std::size_t replay_batches = 0;
    std::size_t replay_examples = 0;
    // Replay batch elements whose id is not in episodic memory. Replay must
    // never train on non-memory data, so this must stay 0.
    std::size_t replay_non_memory_examples = 0;
    std::size_t eval_skipped_unobserved = 0;
    // Batches whose candidate pool was empty after excluding the batch's own
    // bank rows (contrastive term skipped).
    std::size_t skipped_contrastive_batches = 0;
};

struct RunState {
    TrainConfig config;
    EncoderParams params;
    SgdState opt;
    EpisodicMemory memory;
    // Frozen reference distribution for the current replay phase.
    std::optional<Distribution> memory_knowledge;
    Rng rng;
    RunStats stats;
};

RunState make_run_state(const TrainConfig& config);

// Per-epoch mean loss per anchor, for trend inspection.
struct EpochTrace {
    std::vector<double> epoch_mean_loss;
};

// Initializes a bank over the task's training examples, then runs
// epochs_init epochs of supervised contrastive training: shuffled batches,
// fresh embeddings, candidate pool sampled from the bank minus the batch's
// own rows, backprop, optimizer step, bank rows refreshed with the
// forward-pass embeddings. Rejects tasks whose relations were already
// observed or whose training split is empty.
EpochTrace train_new_task(RunState& state, const Dataset& data, const Task& task);

// Per relation of the task: select up to memory_size exemplars (k-means over
// the current embeddings of its training examples) and replace that
// relation's entry in episodic memory.
void memorize(RunState& state, const Dataset& data, const Task& task);

// Encodes all stored exemplars, computes class prototypes, their cosine
// knowledge matrix, and its row-softmax at tau_kd. Stores the result in
// state.memory_knowledge (frozen for the whole replay phase) and returns it.
// Rejects empty memory.
Distribution capture_memory_knowledge(RunState& state);

// Replay over episodic memory: a replay bank over all stored exemplars, then
// epochs_replay epochs of batches whose loss is the contrastive-replay term
// plus kd_weight times the distillation term (each droppable via the ablate
// flags; both dropped is rejected). Afterwards the current task's exemplars
// are re-selected with the updated encoder. Rejects empty memory.
EpochTrace replay(RunState& state, const Dataset& data, const Task& current_task);

// Class prototypes from episodic memory re-encoded with the current encoder,
// in observation order.
PrototypeSet memory_prototypes(const RunState& state);

struct StepEval {
    double overall = 0.0;            // accuracy on the union of given test sets
    std::vector<double> per_task;    // accuracy per given task, same order
    std::size_t evaluated = 0;
    std::size_t excluded = 0;        // test examples with unobserved labels
};

// NCM evaluation over the test splits of the given tasks using prototypes
// from episodic memory. Rejects empty memory.
StepEval evaluate(RunState& state, const Dataset& data, std::span<const Task> tasks);

struct AccuracyMatrix {
    std::size_t steps = 0;
    // Row k (0-based) has k+1 entries: accuracy on task j's test set after
    // learning task k.
    std::vector<std::vector<double>> per_task;
    // Aggregate accuracy on all observed relations after each step.
    std::vector<double> overall;
};

// Runs tasks 1..K in order: (k >= 2: capture_memory_knowledge) ->
// train_new_task -> memorize -> (k >= 2: replay) -> evaluate. k_limit caps
// the number of tasks (0 = all). If out_state is non-null the final state is
// moved into it.
AccuracyMatrix run_sequence(const TaskStream& stream, const TrainConfig& config,
                            std::size_t k_limit = 0, RunState* out_state = nullptr);

}  // namespace crl
