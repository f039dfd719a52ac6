// Experiment harness: configuration files with overrides, seed x variant
// sweeps over run_sequence, report emission (per-run accuracy matrices, an
// aggregate table, a machine-readable summary), and embedding export.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crl/continual.hpp"
#include "crl/data.hpp"

namespace crl {

enum class Variant { full, no_kd, no_cr, no_replay };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);  // throws std::invalid_argument

struct ExperimentConfig {
    // Data source: the literal "synthetic" or a dataset file path.
    std::string data = "synthetic";
    std::size_t k_tasks = 10;
    TrainConfig train;  // per-run seed is taken from `seeds`
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<Variant> variants{Variant::full};
    std::string out_dir = "out";

    // Synthetic stream parameters (feature dimension is always 2*d_h).
    SynthSpec synthetic;
    // When both are > 0, per-class counts are drawn uniformly from
    // [count_min, count_max] with the synthetic seed (imbalanced stream).
    std::size_t count_min = 0;
    std::size_t count_max = 0;

    // Parses a flat `key = value` document with one optional nested
    // `synthetic { ... }` block; '#' starts a comment. Throws ParseError
    // naming the offending line, IoError if unreadable.
    static ExperimentConfig load(const std::string& path);

    // Applies one override; nested keys use the "synthetic." prefix. Throws
    // std::invalid_argument naming the key.
    void set(const std::string& key, const std::string& value);

    void validate() const;  // throws std::invalid_argument with field names

    // Round-trippable echo in the config file format.
    std::string to_text() const;
};

struct RunResult {
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    AccuracyMatrix matrix;
};

struct Report {
    ExperimentConfig config;
    std::vector<RunResult> runs;
    double wall_seconds = 0.0;
};

struct VariantSummary {
    Variant variant = Variant::full;
    std::vector<double> mean_overall;  // per step, over seeds
    std::vector<double> std_overall;   // sample standard deviation (0 for one seed)
    double final_mean = 0.0;
    double final_std = 0.0;
};

// The dataset (fixed by the synthetic seed or the input file) is shared by
// all runs; each run re-partitions relations into tasks with its own seed
// and trains from scratch.
Report run_experiment(const ExperimentConfig& config);

std::vector<VariantSummary> summarize(const Report& report);

// Writes matrix_<variant>_seed<S>.csv per run, summary.txt (rows = variants,
// columns = per-step mean accuracy), and summary.json (per-seed matrices,
// aggregates, config echo, wall time) into config.out_dir. Files are written
// to a temporary name and renamed.
void write_report(const Report& report);

// Trains the first `stage_task` tasks (first seed, first variant), then
// writes task `slice_task`'s test examples as tab-separated rows: example
// id, true label, predicted label, then the d_z embedding coordinates.
void export_embeddings(const ExperimentConfig& config, std::size_t stage_task,
                       std::size_t slice_task, const std::string& out_path);

}  // namespace crl
