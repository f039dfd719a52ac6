// Dataset ingestion, relation-to-task partitioning, 3:1:1 splits, and the
// synthetic Gaussian-cluster stream used for desk-scale experiments.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crl/linalg.hpp"

namespace crl {

struct Example {
    std::int64_t id = 0;
    int label = 0;  // dense relation id
    Vec features;   // length 2*d_h
};

// Borrowed view of an example; the owning Dataset or exemplar store must
// outlive it.
struct ExampleView {
    std::int64_t id = 0;
    int label = 0;
    std::span<const double> features;
};

struct SynthMeta {
    double sigma = 0.0;
    std::vector<Vec> centers;  // one per class
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::string> label_names;  // dense id -> original label string
    std::size_t feature_dim = 0;
    std::optional<SynthMeta> synth;

    std::size_t relation_count() const { return label_names.size(); }
    ExampleView view(std::size_t index) const {
        const Example& e = examples[index];
        return {e.id, e.label, e.features};
    }
};

// One record per line: {"id": <integer>, "label": "<string>",
// "features": [<numbers>]}. Labels are interned to dense ids in order of
// first appearance; the feature dimension is inferred from the first record
// and enforced. Throws ParseError with the offending line number on
// malformed lines, ragged feature lengths, or duplicate ids; IoError if the
// file cannot be opened.
Dataset load_jsonl(const std::string& path);

// Inverse of load_jsonl (one JSON record per line, exact double round-trip).
void save_jsonl(const Dataset& dataset, const std::string& path);

struct TriSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> valid;
    std::size_t degenerate_relations = 0;  // relations left without test data
};

// Per-relation seeded shuffle followed by a 3:1:1 allocation. Rounding
// leftovers go to train, then test, then valid.
TriSplit tri_split(const Dataset& dataset, std::uint64_t seed);

struct Task {
    std::vector<int> relations;        // dense relation ids
    std::vector<std::size_t> train;    // example indices into the dataset
    std::vector<std::size_t> test;
    std::vector<std::size_t> valid;
};

struct TaskStream {
    std::shared_ptr<const Dataset> dataset;
    std::vector<Task> tasks;
};

// Seeded random permutation of the relations dealt into K near-equal groups
// (sizes differ by at most one); examples follow their relation, with
// per-task train/test/valid subsets taken from a tri_split under the same
// seed. Throws std::invalid_argument if K exceeds the relation count.
TaskStream split_tasks(std::shared_ptr<const Dataset> dataset, std::size_t k_tasks,
                       std::uint64_t seed);

struct SynthSpec {
    std::size_t classes = 40;
    std::size_t dim = 32;                       // 2*d_h
    std::vector<std::size_t> per_class_counts;  // empty -> `per_class` everywhere
    std::size_t per_class = 166;                // tri_split -> 100 train per class
    double sigma = 1.0;
    double center_scale = 0.5;
    std::uint64_t seed = 7;
};

// Per class, a seeded random center (center_scale * standard normal per
// coordinate); examples are center + sigma * standard normal. Class centers
// and sigma are recorded in the dataset's synth metadata.
Dataset synth_stream(const SynthSpec& spec);

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace crl
