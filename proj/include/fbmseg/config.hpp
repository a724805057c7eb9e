#pragma once

#include "fbmseg/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fbmseg::config {

/// Environment variable naming the default model directory.
inline constexpr const char* kModelDirEnv = "FBMSEG_MODEL_DIR";
inline constexpr const char* kDefaultModelFile = "model.fbm";

/// Detection settings. JSON keys:
///   window_sizes, lambda, extension, k, min_len, min_len_inclusive,
///   auto_min_len, max_k, restarts, max_iter, tol, cov_floor,
///   significance ({"5": level, ...}), threads, seed
struct DetectSettings {
    pipeline::PipelineConfig pipeline;

    void validate() const { pipeline.validate(); }
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are a ParameterError.
    static DetectSettings from_json(const nlohmann::json& j);
};

/// Model path from the environment (directory + model.fbm) or the
/// working directory.
std::string default_model_path();

/// Hex CRC-32 of the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

/// Run manifest: tool version, subcommand, full config, its hash, seeds,
/// and CRC-32 of each output file.
nlohmann::json make_manifest(const std::string& subcommand, const nlohmann::json& config,
                             const std::vector<std::string>& inputs, const std::vector<std::string>& outputs);

std::string version();

} // namespace fbmseg::config
