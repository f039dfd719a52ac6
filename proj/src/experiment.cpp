#include "crl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace crl {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    throw std::invalid_argument("config: key '" + key + "': " + why);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) bad_key(key, "not a number: '" + value + "'");
        return v;
    } catch (const std::invalid_argument&) {
        bad_key(key, "not a number: '" + value + "'");
    } catch (const std::out_of_range&) {
        bad_key(key, "out of range: '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) bad_key(key, "not a non-negative integer: '" + value + "'");
        return static_cast<std::uint64_t>(v);
    } catch (const std::invalid_argument&) {
        bad_key(key, "not a non-negative integer: '" + value + "'");
    } catch (const std::out_of_range&) {
        bad_key(key, "out of range: '" + value + "'");
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out << content;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + ": " + ec.message());
}

TrainConfig variant_train_config(const TrainConfig& base, Variant v, std::uint64_t seed) {
    TrainConfig tc = base;
    tc.seed = seed;
    switch (v) {
        case Variant::full: break;
        case Variant::no_kd: tc.ablate_kd = true; break;
        case Variant::no_cr: tc.ablate_cr = true; break;
        case Variant::no_replay: tc.epochs_replay = 0; break;
    }
    return tc;
}

SynthSpec materialize_synth(const ExperimentConfig& cfg) {
    SynthSpec spec = cfg.synthetic;
    spec.dim = 2 * cfg.train.d_h;
    if (cfg.count_min > 0 && cfg.count_max > 0 && spec.per_class_counts.empty()) {
        // Seeded draw decoupled from the stream's own generator so that the
        // class centers do not depend on whether counts were drawn.
        Rng counts_rng(~spec.seed);
        spec.per_class_counts.resize(spec.classes);
        for (std::size_t c = 0; c < spec.classes; ++c)
            spec.per_class_counts[c] =
                cfg.count_min + counts_rng.below(cfg.count_max - cfg.count_min + 1);
    }
    return spec;
}

std::shared_ptr<const Dataset> build_dataset(const ExperimentConfig& cfg) {
    std::shared_ptr<const Dataset> dataset;
    if (cfg.data == "synthetic") {
        dataset = std::make_shared<const Dataset>(synth_stream(materialize_synth(cfg)));
    } else {
        dataset = std::make_shared<const Dataset>(load_jsonl(cfg.data));
    }
    if (dataset->feature_dim != 2 * cfg.train.d_h)
        throw std::invalid_argument(
            "config: dataset feature dimension " + std::to_string(dataset->feature_dim) +
            " does not match 2*d_h = " + std::to_string(2 * cfg.train.d_h));
    return dataset;
}

std::string matrix_csv(const AccuracyMatrix& matrix, std::size_t k_total) {
    std::string out = "after_task,acc_overall";
    for (std::size_t j = 1; j <= k_total; ++j) out += ",acc_T" + std::to_string(j);
    out += "\n";
    for (std::size_t k = 0; k < matrix.steps; ++k) {
        out += std::to_string(k + 1) + "," + fmt("%.6f", matrix.overall[k]);
        for (std::size_t j = 0; j < k_total; ++j) {
            out += ",";
            if (j < matrix.per_task[k].size()) out += fmt("%.6f", matrix.per_task[k][j]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_kd: return "no_kd";
        case Variant::no_cr: return "no_cr";
        case Variant::no_replay: return "no_replay";
    }
    return "full";
}

Variant parse_variant(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "no_kd") return Variant::no_kd;
    if (name == "no_cr") return Variant::no_cr;
    if (name == "no_replay") return Variant::no_replay;
    throw std::invalid_argument("config: unknown variant '" + name +
                                "' (expected full, no_kd, no_cr, or no_replay)");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "data") {
        data = value;
    } else if (key == "k_tasks") {
        k_tasks = parse_size(key, value);
    } else if (key == "seeds") {
        seeds.clear();
        for (const std::string& s : split_list(value)) seeds.push_back(parse_u64(key, s));
    } else if (key == "variants" || key == "variant") {
        variants.clear();
        for (const std::string& s : split_list(value)) variants.push_back(parse_variant(s));
    } else if (key == "out_dir") {
        out_dir = value;
    } else if (key == "epochs_init") {
        train.epochs_init = parse_size(key, value);
    } else if (key == "epochs_replay") {
        train.epochs_replay = parse_size(key, value);
    } else if (key == "batch_size") {
        train.batch_size = parse_size(key, value);
    } else if (key == "lr") {
        train.lr = parse_double(key, value);
    } else if (key == "momentum") {
        train.momentum = parse_double(key, value);
    } else if (key == "tau_contrastive") {
        train.tau_contrastive = parse_double(key, value);
    } else if (key == "tau_kd") {
        train.tau_kd = parse_double(key, value);
    } else if (key == "kd_weight") {
        train.kd_weight = parse_double(key, value);
    } else if (key == "memory_size") {
        train.memory_size = parse_size(key, value);
    } else if (key == "negatives_per_batch") {
        train.negatives_per_batch = parse_size(key, value);
    } else if (key == "d_h") {
        train.d_h = parse_size(key, value);
    } else if (key == "d_z") {
        train.d_z = parse_size(key, value);
    } else if (key == "synthetic.classes") {
        synthetic.classes = parse_size(key, value);
    } else if (key == "synthetic.per_class") {
        synthetic.per_class = parse_size(key, value);
    } else if (key == "synthetic.sigma") {
        synthetic.sigma = parse_double(key, value);
    } else if (key == "synthetic.center_scale") {
        synthetic.center_scale = parse_double(key, value);
    } else if (key == "synthetic.seed") {
        synthetic.seed = parse_u64(key, value);
    } else if (key == "synthetic.counts") {
        synthetic.per_class_counts.clear();
        for (const std::string& s : split_list(value))
            synthetic.per_class_counts.push_back(parse_size(key, s));
    } else if (key == "synthetic.count_min") {
        count_min = parse_size(key, value);
    } else if (key == "synthetic.count_max") {
        count_max = parse_size(key, value);
    } else {
        bad_key(key, "unknown key");
    }
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);

    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    bool in_synth = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line == "synthetic {") {
            if (in_synth)
                throw ParseError(path + ":" + std::to_string(lineno) + ": nested block");
            in_synth = true;
            continue;
        }
        if (line == "}") {
            if (!in_synth)
                throw ParseError(path + ":" + std::to_string(lineno) + ": unmatched '}'");
            in_synth = false;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
        if (in_synth) key = "synthetic." + key;
        try {
            cfg.set(key, value);
        } catch (const std::invalid_argument& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (in_synth) throw ParseError(path + ": unterminated synthetic block");
    return cfg;
}

void ExperimentConfig::validate() const {
    if (data.empty())
        throw std::invalid_argument("config: data must be 'synthetic' or a dataset path");
    if (k_tasks < 1) throw std::invalid_argument("config: k_tasks must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (variants.empty()) throw std::invalid_argument("config: variants must be non-empty");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be non-empty");
    train.validate();
    if (data == "synthetic") {
        if (synthetic.classes < 2)
            throw std::invalid_argument("config: synthetic.classes must be >= 2");
        if (synthetic.classes < k_tasks)
            throw std::invalid_argument("config: synthetic.classes must be >= k_tasks");
        if (synthetic.per_class < 1 && synthetic.per_class_counts.empty() && count_min == 0)
            throw std::invalid_argument("config: synthetic.per_class must be >= 1");
        if (!synthetic.per_class_counts.empty() &&
            synthetic.per_class_counts.size() != synthetic.classes)
            throw std::invalid_argument(
                "config: synthetic.counts must list one count per class");
        if ((count_min > 0) != (count_max > 0))
            throw std::invalid_argument(
                "config: synthetic.count_min and synthetic.count_max must be set together");
        if (count_min > 0 && count_max < count_min)
            throw std::invalid_argument(
                "config: synthetic.count_max must be >= synthetic.count_min");
        if (synthetic.sigma < 0.0)
            throw std::invalid_argument("config: synthetic.sigma must be >= 0");
    }
}

std::string ExperimentConfig::to_text() const {
    std::string out;
    out += "data = " + data + "\n";
    out += "k_tasks = " + std::to_string(k_tasks) + "\n";
    out += "seeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i)
        out += (i ? "," : "") + std::to_string(seeds[i]);
    out += "\nvariants = ";
    for (std::size_t i = 0; i < variants.size(); ++i)
        out += std::string(i ? "," : "") + variant_name(variants[i]);
    out += "\nout_dir = " + out_dir + "\n";
    out += "epochs_init = " + std::to_string(train.epochs_init) + "\n";
    out += "epochs_replay = " + std::to_string(train.epochs_replay) + "\n";
    out += "batch_size = " + std::to_string(train.batch_size) + "\n";
    out += "lr = " + fmt("%.17g", train.lr) + "\n";
    out += "momentum = " + fmt("%.17g", train.momentum) + "\n";
    out += "tau_contrastive = " + fmt("%.17g", train.tau_contrastive) + "\n";
    out += "tau_kd = " + fmt("%.17g", train.tau_kd) + "\n";
    out += "kd_weight = " + fmt("%.17g", train.kd_weight) + "\n";
    out += "memory_size = " + std::to_string(train.memory_size) + "\n";
    out += "negatives_per_batch = " + std::to_string(train.negatives_per_batch) + "\n";
    out += "d_h = " + std::to_string(train.d_h) + "\n";
    out += "d_z = " + std::to_string(train.d_z) + "\n";
    if (data == "synthetic") {
        out += "synthetic {\n";
        out += "  classes = " + std::to_string(synthetic.classes) + "\n";
        out += "  per_class = " + std::to_string(synthetic.per_class) + "\n";
        out += "  sigma = " + fmt("%.17g", synthetic.sigma) + "\n";
        out += "  center_scale = " + fmt("%.17g", synthetic.center_scale) + "\n";
        out += "  seed = " + std::to_string(synthetic.seed) + "\n";
        if (!synthetic.per_class_counts.empty()) {
            out += "  counts = ";
            for (std::size_t i = 0; i < synthetic.per_class_counts.size(); ++i)
                out += (i ? "," : "") + std::to_string(synthetic.per_class_counts[i]);
            out += "\n";
        }
        if (count_min > 0) {
            out += "  count_min = " + std::to_string(count_min) + "\n";
            out += "  count_max = " + std::to_string(count_max) + "\n";
        }
        out += "}\n";
    }
    return out;
}

Report run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    std::shared_ptr<const Dataset> dataset = build_dataset(config);
    if (dataset->relation_count() < config.k_tasks)
        throw std::invalid_argument("config: k_tasks exceeds the dataset's relation count");

    Report report;
    report.config = config;
    for (Variant variant : config.variants) {
        for (std::uint64_t seed : config.seeds) {
            const TaskStream stream = split_tasks(dataset, config.k_tasks, seed);
            const TrainConfig tc = variant_train_config(config.train, variant, seed);
            RunResult run;
            run.variant = variant;
            run.seed = seed;
            run.matrix = run_sequence(stream, tc);
            report.runs.push_back(std::move(run));
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<VariantSummary> summarize(const Report& report) {
    std::vector<VariantSummary> out;
    for (Variant variant : report.config.variants) {
        VariantSummary vs;
        vs.variant = variant;
        std::vector<const AccuracyMatrix*> matrices;
        for (const RunResult& run : report.runs)
            if (run.variant == variant) matrices.push_back(&run.matrix);
        if (matrices.empty()) continue;
        const std::size_t steps = matrices.front()->steps;
        const double n = static_cast<double>(matrices.size());
        for (std::size_t k = 0; k < steps; ++k) {
            double mean = 0.0;
            for (const auto* m : matrices) mean += m->overall[k];
            mean /= n;
            double var = 0.0;
            for (const auto* m : matrices) {
                const double d = m->overall[k] - mean;
                var += d * d;
            }
            var = matrices.size() > 1 ? var / (n - 1.0) : 0.0;
            vs.mean_overall.push_back(mean);
            vs.std_overall.push_back(std::sqrt(var));
        }
        vs.final_mean = vs.mean_overall.back();
        vs.final_std = vs.std_overall.back();
        out.push_back(std::move(vs));
    }
    return out;
}

void write_report(const Report& report) {
    namespace fs = std::filesystem;
    const fs::path dir(report.config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());

    for (const RunResult& run : report.runs) {
        const std::string name = std::string("matrix_") + variant_name(run.variant) + "_seed" +
                                 std::to_string(run.seed) + ".csv";
        write_atomic((dir / name).string(), matrix_csv(run.matrix, report.config.k_tasks));
    }

    const std::vector<VariantSummary> summaries = summarize(report);

    // Human-readable table: rows = variants, columns = mean accuracy (%) on
    // all observed relations after each task.
    std::string table;
    table += "Mean accuracy (%) on all observed relations, " +
             std::to_string(report.config.seeds.size()) + " seed(s), memory_size = " +
             std::to_string(report.config.train.memory_size) + "\n\n";
    table += "variant   ";
    for (std::size_t k = 1; k <= report.config.k_tasks; ++k) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%7s", ("T" + std::to_string(k)).c_str());
        table += buf;
    }
    table += "\n";
    for (const VariantSummary& vs : summaries) {
        char head[16];
        std::snprintf(head, sizeof(head), "%-10s", variant_name(vs.variant));
        table += head;
        for (double v : vs.mean_overall) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%7.1f", 100.0 * v);
            table += buf;
        }
        table += "\n";
    }
    write_atomic((dir / "summary.txt").string(), table);

    nlohmann::json j;
    j["config"] = nlohmann::json::object();
    j["config"]["text"] = report.config.to_text();
    j["config"]["data"] = report.config.data;
    j["config"]["k_tasks"] = report.config.k_tasks;
    j["config"]["seeds"] = report.config.seeds;
    {
        std::vector<std::string> names;
        for (Variant v : report.config.variants) names.emplace_back(variant_name(v));
        j["config"]["variants"] = names;
    }
    j["config"]["train"] = {{"epochs_init", report.config.train.epochs_init},
                            {"epochs_replay", report.config.train.epochs_replay},
                            {"batch_size", report.config.train.batch_size},
                            {"lr", report.config.train.lr},
                            {"momentum", report.config.train.momentum},
                            {"tau_contrastive", report.config.train.tau_contrastive},
                            {"tau_kd", report.config.train.tau_kd},
                            {"kd_weight", report.config.train.kd_weight},
                            {"memory_size", report.config.train.memory_size},
                            {"negatives_per_batch", report.config.train.negatives_per_batch},
                            {"d_h", report.config.train.d_h},
                            {"d_z", report.config.train.d_z}};
    j["wall_seconds"] = report.wall_seconds;
    j["runs"] = nlohmann::json::array();
    for (const RunResult& run : report.runs) {
        nlohmann::json r;
        r["variant"] = variant_name(run.variant);
        r["seed"] = run.seed;
        r["overall"] = run.matrix.overall;
        r["per_task"] = run.matrix.per_task;
        j["runs"].push_back(std::move(r));
    }
    j["summary"] = nlohmann::json::object();
    for (const VariantSummary& vs : summaries) {
        nlohmann::json s;
        s["mean_overall"] = vs.mean_overall;
        s["std_overall"] = vs.std_overall;
        s["final_mean"] = vs.final_mean;
        s["final_std"] = vs.final_std;
        j["summary"][variant_name(vs.variant)] = std::move(s);
    }
    write_atomic((dir / "summary.json").string(), j.dump(2) + "\n");
}

void export_embeddings(const ExperimentConfig& config, std::size_t stage_task,
                       std::size_t slice_task, const std::string& out_path) {
    config.validate();
    if (stage_task < 1 || stage_task > config.k_tasks)
        throw std::invalid_argument("export: stage task must be in [1, k_tasks]");
    if (slice_task < 1 || slice_task > stage_task)
        throw std::invalid_argument("export: slice task must be in [1, stage task]");

    std::shared_ptr<const Dataset> dataset = build_dataset(config);
    if (dataset->relation_count() < config.k_tasks)
        throw std::invalid_argument("config: k_tasks exceeds the dataset's relation count");

    const std::uint64_t seed = config.seeds.front();
    const TaskStream stream = split_tasks(dataset, config.k_tasks, seed);
    const TrainConfig tc = variant_train_config(config.train, config.variants.front(), seed);

    RunState state = make_run_state(tc);  // seed value; move-assigned by the run
    run_sequence(stream, tc, stage_task, &state);

    const PrototypeSet protos = memory_prototypes(state);
    const Task& slice = stream.tasks[slice_task - 1];

    std::string out;
    for (std::size_t idx : slice.test) {
        const ExampleView v = dataset->view(idx);
        const Embedding emb = embed(v.features, state.params);
        const int predicted = ncm_predict(emb.unit, protos);
        out += std::to_string(v.id);
        out += '\t';
        out += dataset->label_names[static_cast<std::size_t>(v.label)];
        out += '\t';
        out += dataset->label_names[static_cast<std::size_t>(predicted)];
        for (double z : emb.unit) {
            out += '\t';
            out += fmt("%.17g", z);
        }
        out += '\n';
    }
    write_atomic(out_path, out);
}

}  // namespace crl
