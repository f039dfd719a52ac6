// Command-line experiment runner. All functionality is reached through the
// public C API in crl/crl.h; this translation unit owns only argument
// parsing and exit codes.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crl/crl.h"

namespace {

struct ConfigDeleter {
    void operator()(crl_config_t* c) const { crl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<crl_config_t, ConfigDeleter>;

int fail(const char* context) {
    std::fprintf(stderr, "crl: %s: %s\n", context, crl_last_error());
    return 1;
}

// Loads the config file if given, otherwise starts from defaults, then
// applies --set overrides followed by the dedicated flags.
ConfigPtr build_config(const std::string& config_path, const std::vector<std::string>& sets,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
    ConfigPtr cfg(config_path.empty() ? crl_config_default()
                                      : crl_config_load(config_path.c_str()));
    if (!cfg) return nullptr;
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "crl: --set expects key=value, got '%s'\n", kv.c_str());
            return nullptr;
        }
        // Trim spaces around the separator so "--set lr = 0.1" also works.
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(kv.substr(0, eq));
        const std::string value = trim(kv.substr(eq + 1));
        if (crl_config_set(cfg.get(), key.c_str(), value.c_str()) != CRL_OK) {
            std::fprintf(stderr, "crl: --set %s: %s\n", kv.c_str(), crl_last_error());
            return nullptr;
        }
    }
    for (const auto& [key, value] : overrides) {
        if (value.empty()) continue;
        if (crl_config_set(cfg.get(), key.c_str(), value.c_str()) != CRL_OK) {
            std::fprintf(stderr, "crl: --%s %s: %s\n", key.c_str(), value.c_str(),
                         crl_last_error());
            return nullptr;
        }
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual relation-representation learning experiments"};
    app.set_version_flag("--version", std::string("crl ") + crl_version());
    app.require_subcommand(1);

    std::string config_path;
    std::string seeds, memory_size, variant, out_dir;
    std::vector<std::string> sets;

    CLI::App* run = app.add_subcommand("run", "Run a seed x variant sweep and write reports");
    run->add_option("--config", config_path, "Configuration file (defaults when omitted)");
    run->add_option("--seeds", seeds, "Comma-separated run seeds, e.g. 1,2,3");
    run->add_option("--memory-size", memory_size, "Exemplars kept per relation");
    run->add_option("--variant", variant, "full, no_kd, no_cr, or no_replay");
    run->add_option("--out", out_dir, "Output directory for reports");
    run->add_option("--set", sets, "Extra override key=value (repeatable)");

    int stage_task = 0;
    int slice_task = 1;
    std::string export_path;
    CLI::App* exp = app.add_subcommand(
        "export-embeddings", "Train up to a task and export test-set embeddings as TSV");
    exp->add_option("--config", config_path, "Configuration file (defaults when omitted)");
    exp->add_option("--task", stage_task, "Train tasks 1..K up to this one (1-based)")
        ->required();
    exp->add_option("--slice", slice_task, "Task whose test set is exported (default 1)");
    exp->add_option("--out", export_path, "Output file path")->required();
    exp->add_option("--set", sets, "Extra override key=value (repeatable)");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        ConfigPtr cfg = build_config(config_path, sets,
                                     {{"seeds", seeds},
                                      {"memory_size", memory_size},
                                      {"variant", variant},
                                      {"out_dir", out_dir}});
        if (!cfg) return 1;
        if (crl_run_experiment(cfg.get()) != CRL_OK) return fail("run");
        return 0;
    }

    ConfigPtr cfg = build_config(config_path, sets, {});
    if (!cfg) return 1;
    if (crl_export_embeddings(cfg.get(), stage_task, slice_task, export_path.c_str()) != CRL_OK)
        return fail("export-embeddings");
    return 0;
}
