#include "fbmseg/config.hpp"

#include "fbmseg/bundle_io.hpp"
#include "fbmseg/dataset_io.hpp"
#include "fbmseg/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>

#ifndef FBMSEG_VERSION
#define FBMSEG_VERSION "0.0.0"
#endif

namespace fbmseg::config {

namespace {

const std::set<std::string> kKeys = {"window_sizes", "lambda",   "extension", "k",         "min_len",
                                     "min_len_inclusive", "auto_min_len", "max_k", "restarts",
                                     "max_iter",     "tol",      "cov_floor", "significance", "threads",
                                     "seed",         "merge_rule", "merge_error_cov"};

} // namespace

nlohmann::json DetectSettings::to_json() const {
    const auto& p = pipeline;
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [len, level] : p.significance.levels()) {
        sig[std::to_string(len)] = level;
    }
    return {{"window_sizes", p.signal.window_sizes},
            {"lambda", p.signal.lambda},
            {"extension", p.signal.effective_extension()},
            {"k", p.gmm.k_request},
            {"min_len", p.gmm.min_len},
            {"min_len_inclusive", p.gmm.inclusive},
            {"auto_min_len", p.auto_min_len},
            {"max_k", p.gmm.max_k},
            {"restarts", p.gmm.restarts},
            {"max_iter", p.gmm.max_iter},
            {"tol", p.gmm.tol},
            {"cov_floor", p.gmm.cov_floor},
            {"significance", sig},
            {"merge_rule", merge::to_string(p.rule)},
            {"merge_error_cov", p.error_cov},
            {"threads", p.threads},
            {"seed", p.gmm.seed}};
}

DetectSettings DetectSettings::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParameterError("configuration must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!kKeys.count(key)) {
            throw ParameterError("unknown configuration key '" + key + "'");
        }
    }
    DetectSettings s;
    auto& p = s.pipeline;
    try {
        p.signal.window_sizes = j.value("window_sizes", p.signal.window_sizes);
        p.signal.lambda = j.value("lambda", p.signal.lambda);
        p.signal.extension = j.value("extension", p.signal.extension);
        p.gmm.k_request = j.value("k", p.gmm.k_request);
        p.gmm.min_len = j.value("min_len", p.gmm.min_len);
        p.gmm.inclusive = j.value("min_len_inclusive", p.gmm.inclusive);
        p.auto_min_len = j.value("auto_min_len", p.auto_min_len);
        p.gmm.max_k = j.value("max_k", p.gmm.max_k);
        p.gmm.restarts = j.value("restarts", p.gmm.restarts);
        p.gmm.max_iter = j.value("max_iter", p.gmm.max_iter);
        p.gmm.tol = j.value("tol", p.gmm.tol);
        p.gmm.cov_floor = j.value("cov_floor", p.gmm.cov_floor);
        p.threads = j.value("threads", p.threads);
        p.gmm.seed = j.value("seed", p.gmm.seed);
        if (j.contains("merge_rule")) {
            p.rule = merge::rule_kind_from_string(j.at("merge_rule").get<std::string>());
        }
        p.error_cov = j.value("merge_error_cov", p.error_cov);
        if (j.contains("significance")) {
            for (const auto& [key, value] : j.at("significance").items()) {
                std::size_t len = 0;
                try {
                    len = std::stoul(key);
                } catch (const std::exception&) {
                    throw ParameterError("significance key '" + key + "' is not a length");
                }
                p.significance.set(len, value.get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("bad configuration value: ") + e.what());
    }
    s.validate();
    return s;
}

std::string default_model_path() {
    if (const char* dir = std::getenv(kModelDirEnv); dir != nullptr && *dir != '\0') {
        return (std::filesystem::path(dir) / kDefaultModelFile).string();
    }
    return kDefaultModelFile;
}

std::string config_hash(const nlohmann::json& config) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", bundle_io::crc32_of(config.dump()));
    return buf;
}

std::string version() { return FBMSEG_VERSION; }

nlohmann::json make_manifest(const std::string& subcommand, const nlohmann::json& config,
                             const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    auto file_entry = [](const std::string& path) {
        nlohmann::json e = {{"path", path}};
        if (std::filesystem::is_regular_file(path)) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%08x", bundle_io::crc32_of(io::read_text_file(path)));
            e["crc32"] = buf;
        }
        return e;
    };
    nlohmann::json in = nlohmann::json::array();
    for (const auto& p : inputs) {
        in.push_back(file_entry(p));
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : outputs) {
        out.push_back(file_entry(p));
    }
    return {{"tool", "fbmseg"},
            {"version", version()},
            {"subcommand", subcommand},
            {"config", config},
            {"config_hash", config_hash(config)},
            {"inputs", in},
            {"outputs", out}};
}

} // namespace fbmseg::config
