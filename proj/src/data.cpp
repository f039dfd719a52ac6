#include "crl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "crl/rng.hpp"

namespace crl {

Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);

    Dataset ds;
    std::unordered_map<std::string, int> label_ids;
    std::unordered_set<std::int64_t> seen_ids;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed record (" +
                             e.what() + ")");
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("label") ||
            !rec.contains("features"))
            throw ParseError("line " + std::to_string(line_no) +
                             ": record must have id, label, features");
        if (!rec["id"].is_number_integer())
            throw ParseError("line " + std::to_string(line_no) + ": id must be an integer");
        if (!rec["label"].is_string())
            throw ParseError("line " + std::to_string(line_no) + ": label must be a string");
        if (!rec["features"].is_array() || rec["features"].empty())
            throw ParseError("line " + std::to_string(line_no) +
                             ": features must be a non-empty array");

        Example ex;
        ex.id = rec["id"].get<std::int64_t>();
        if (!seen_ids.insert(ex.id).second)
            throw ParseError("line " + std::to_string(line_no) + ": duplicate id " +
                             std::to_string(ex.id));

        ex.features.reserve(rec["features"].size());
        for (const auto& v : rec["features"]) {
            if (!v.is_number())
                throw ParseError("line " + std::to_string(line_no) +
                                 ": features must contain numbers only");
            ex.features.push_back(v.get<double>());
        }
        if (ds.feature_dim == 0) {
            ds.feature_dim = ex.features.size();
        } else if (ex.features.size() != ds.feature_dim) {
            throw ParseError("line " + std::to_string(line_no) + ": feature length " +
                             std::to_string(ex.features.size()) + " differs from " +
                             std::to_string(ds.feature_dim) + " seen earlier");
        }

        const std::string name = rec["label"].get<std::string>();
        auto it = label_ids.find(name);
        if (it == label_ids.end()) {
            it = label_ids.emplace(name, static_cast<int>(ds.label_names.size())).first;
            ds.label_names.push_back(name);
        }
        ex.label = it->second;
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw ParseError("empty dataset: " + path);
    return ds;
}

void save_jsonl(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + path);
    for (const Example& ex : dataset.examples) {
        nlohmann::json rec;
        rec["id"] = ex.id;
        rec["label"] = dataset.label_names.at(static_cast<std::size_t>(ex.label));
        rec["features"] = ex.features;
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("failed writing: " + path);
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_relation(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_rel(ds.relation_count());
    for (std::size_t i = 0; i < ds.examples.size(); ++i)
        by_rel[static_cast<std::size_t>(ds.examples[i].label)].push_back(i);
    return by_rel;
}

}  // namespace

TriSplit tri_split(const Dataset& dataset, std::uint64_t seed) {
    Rng rng(seed);
    TriSplit out;
    auto by_rel = indices_by_relation(dataset);
    for (auto& members : by_rel) {
        rng.shuffle(members);
        const std::size_t n = members.size();
        std::size_t n_train = 3 * n / 5;
        std::size_t n_test = n / 5;
        std::size_t n_valid = n / 5;
        std::size_t leftover = n - n_train - n_test - n_valid;
        if (leftover > 0) { ++n_train; --leftover; }
        if (leftover > 0) { ++n_test; --leftover; }
        if (n_test == 0) ++out.degenerate_relations;

        std::size_t pos = 0;
        for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(members[pos++]);
        for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(members[pos++]);
        for (std::size_t i = 0; i < n_valid; ++i) out.valid.push_back(members[pos++]);
    }
    return out;
}

TaskStream split_tasks(std::shared_ptr<const Dataset> dataset, std::size_t k_tasks,
                       std::uint64_t seed) {
    if (!dataset) throw std::invalid_argument("split_tasks: null dataset");
    const std::size_t n_rel = dataset->relation_count();
    if (k_tasks == 0) throw std::invalid_argument("split_tasks: K must be positive");
    if (k_tasks > n_rel)
        throw std::invalid_argument("split_tasks: K = " + std::to_string(k_tasks) +
                                    " exceeds relation count " + std::to_string(n_rel));

    Rng rng(seed);
    Rng split_rng = rng.fork(1);

    std::vector<int> relations(n_rel);
    std::iota(relations.begin(), relations.end(), 0);
    rng.shuffle(relations);

    TaskStream stream;
    stream.dataset = dataset;
    stream.tasks.resize(k_tasks);

    // Deal the shuffled relations into K near-equal groups.
    const std::size_t base = n_rel / k_tasks;
    const std::size_t extra = n_rel % k_tasks;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < k_tasks; ++k) {
        const std::size_t take = base + (k < extra ? 1 : 0);
        for (std::size_t i = 0; i < take; ++i) stream.tasks[k].relations.push_back(relations[pos++]);
    }

    TriSplit split = tri_split(*dataset, split_rng.next_u64());
    std::vector<std::size_t> task_of_relation(n_rel);
    for (std::size_t k = 0; k < k_tasks; ++k)
        for (int r : stream.tasks[k].relations) task_of_relation[static_cast<std::size_t>(r)] = k;

    auto deal = [&](const std::vector<std::size_t>& part, auto member) {
        for (std::size_t idx : part) {
            const int rel = dataset->examples[idx].label;
            (stream.tasks[task_of_relation[static_cast<std::size_t>(rel)]].*member).push_back(idx);
        }
    };
    deal(split.train, &Task::train);
    deal(split.test, &Task::test);
    deal(split.valid, &Task::valid);
    return stream;
}

Dataset synth_stream(const SynthSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("synth_stream: need at least 2 classes");
    if (spec.dim == 0) throw std::invalid_argument("synth_stream: dim must be positive");
    std::vector<std::size_t> counts = spec.per_class_counts;
    if (counts.empty()) counts.assign(spec.classes, spec.per_class);
    if (counts.size() != spec.classes)
        throw std::invalid_argument("synth_stream: per_class_counts size must equal classes");
    for (std::size_t c : counts)
        if (c == 0) throw std::invalid_argument("synth_stream: per-class counts must be >= 1");

    Rng rng(spec.seed);
    Dataset ds;
    ds.feature_dim = spec.dim;
    ds.synth = SynthMeta{spec.sigma, {}};

    std::int64_t next_id = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03zu", c);
        ds.label_names.emplace_back(name);

        Vec center(spec.dim);
        for (double& v : center) v = spec.center_scale * rng.normal();
        ds.synth->centers.push_back(center);

        for (std::size_t i = 0; i < counts[c]; ++i) {
            Example ex;
            ex.id = next_id++;
            ex.label = static_cast<int>(c);
            ex.features.resize(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d)
                ex.features[d] = center[d] + spec.sigma * rng.normal();
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

}  // namespace crl
