#include "crl/crl.h"

#include <cstring>
#include <exception>
#include <new>
#include <stdexcept>
#include <string>

#include "crl/data.hpp"
#include "crl/experiment.hpp"

struct crl_config {
    crl::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

// Maps the active exception to a status code and records its message.
crl_status status_from_exception() {
    try {
        throw;
    } catch (const crl::ParseError& e) {
        set_error(e.what());
        return CRL_ERR_PARSE;
    } catch (const crl::IoError& e) {
        set_error(e.what());
        return CRL_ERR_IO;
    } catch (const std::invalid_argument& e) {
        set_error(e.what());
        return CRL_ERR_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return CRL_ERR_RUNTIME;
    } catch (const std::exception& e) {
        set_error(e.what());
        return CRL_ERR_RUNTIME;
    } catch (...) {
        set_error("unknown error");
        return CRL_ERR_RUNTIME;
    }
}

}  // namespace

extern "C" {

const char* crl_version(void) { return "0.1.0"; }

const char* crl_last_error(void) { return g_last_error.c_str(); }

crl_config_t* crl_config_default(void) {
    try {
        return new crl_config{};
    } catch (...) {
        status_from_exception();
        return nullptr;
    }
}

crl_config_t* crl_config_load(const char* path) {
    if (path == nullptr) {
        set_error("crl_config_load: path is NULL");
        return nullptr;
    }
    try {
        return new crl_config{crl::ExperimentConfig::load(path)};
    } catch (...) {
        status_from_exception();
        return nullptr;
    }
}

crl_status crl_config_set(crl_config_t* config, const char* key, const char* value) {
    if (config == nullptr || key == nullptr || value == nullptr) {
        set_error("crl_config_set: NULL argument");
        return CRL_ERR_INVALID_ARGUMENT;
    }
    try {
        config->cfg.set(key, value);
        return CRL_OK;
    } catch (...) {
        return status_from_exception();
    }
}

char* crl_config_text(const crl_config_t* config) {
    if (config == nullptr) {
        set_error("crl_config_text: config is NULL");
        return nullptr;
    }
    try {
        const std::string text = config->cfg.to_text();
        char* out = new char[text.size() + 1];
        std::memcpy(out, text.c_str(), text.size() + 1);
        return out;
    } catch (...) {
        status_from_exception();
        return nullptr;
    }
}

void crl_config_free(crl_config_t* config) { delete config; }

void crl_string_free(char* s) { delete[] s; }

crl_status crl_run_experiment(const crl_config_t* config) {
    if (config == nullptr) {
        set_error("crl_run_experiment: config is NULL");
        return CRL_ERR_INVALID_ARGUMENT;
    }
    try {
        const crl::Report report = crl::run_experiment(config->cfg);
        crl::write_report(report);
        return CRL_OK;
    } catch (...) {
        return status_from_exception();
    }
}

crl_status crl_export_embeddings(const crl_config_t* config, int stage_task, int slice_task,
                                 const char* out_path) {
    if (config == nullptr || out_path == nullptr) {
        set_error("crl_export_embeddings: NULL argument");
        return CRL_ERR_INVALID_ARGUMENT;
    }
    if (stage_task < 1 || slice_task < 1) {
        set_error("crl_export_embeddings: task numbers are 1-based and must be positive");
        return CRL_ERR_INVALID_ARGUMENT;
    }
    try {
        crl::export_embeddings(config->cfg, static_cast<std::size_t>(stage_task),
                               static_cast<std::size_t>(slice_task), out_path);
        return CRL_OK;
    } catch (...) {
        return status_from_exception();
    }
}

}  // extern "C"
