#pragma once

#include "fbmseg/features.hpp"
#include "fbmseg/models.hpp"
#include "fbmseg/types.hpp"

#include <array>
#include <optional>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fbmseg::estimators {

inline constexpr double kAlphaMin = 0.001;
inline constexpr double kAlphaMax = 1.999;

struct TrainConfig {
    std::size_t samples = 100000;
    std::size_t alpha_epochs = 20;
    std::size_t k_epochs = 20;
    std::size_t batch = 64;
    double alpha_lr = 1e-3;
    double k_lr = 1e-3;
    double clip_norm = 1.0;
    double log2k_min = -6.0;
    double log2k_max = 6.0;
    /// Length range for K training segments (uniform, inclusive).
    std::size_t k_min_length = 5;
    std::size_t k_max_length = 256;
    double validation_fraction = 0.05;
    /// Fresh segments per supported length used to measure estimator error.
    std::size_t calibration_samples = 500;
    std::uint64_t seed = 1;
    models::AlphaNetConfig alpha_net;
    models::KNetConfig k_net;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainingLog {
    std::vector<double> alpha_train, alpha_val;
    std::vector<double> k_train, k_val;

    nlohmann::json to_json() const;
    static TrainingLog from_json(const nlohmann::json& j);
};

/// Trained alpha and log K regressors. Immutable after construction; all
/// estimation entry points are const and thread-safe.
class RegressorBundle {
public:
    RegressorBundle(models::AlphaNet<float> alpha, models::KNet<float> k, nlohmann::json metadata)
        : alpha_(std::move(alpha)), k_(std::move(k)), metadata_(std::move(metadata)), id_(next_id()) {}

    const models::AlphaNet<float>& alpha_net() const { return alpha_; }
    const models::KNet<float>& k_net() const { return k_; }
    const nlohmann::json& metadata() const { return metadata_; }

    /// Raw per-sequence alpha predictions for feature windows of one
    /// supported length. Each window contributes one prediction per
    /// dimension (x first, then y).
    std::vector<double> predict_windows(const std::vector<features::AlphaFeatures>& windows) const;

    /// log K prediction from K features.
    std::vector<double> predict_logk(std::span<const double> k1) const;

    /// Covariance {var alpha, cov, var log K} of the estimate error at the
    /// largest supported length <= length; std::nullopt when the model
    /// carries no calibration.
    std::optional<std::array<double, 3>> error_cov(std::size_t length) const;

private:
    models::AlphaNet<float> alpha_;
    models::KNet<float> k_;
    nlohmann::json metadata_;
    /// Shared by copies; keys the per-thread inference networks.
    std::uint64_t id_;

    static std::uint64_t next_id();
};

/// Mean over sliding windows and dimensions, clamped to [0.001, 1.999].
double estimate_alpha(const RegressorBundle& bundle, std::span<const Point2> segment);

/// Per-window predictions (averaged over dimensions) before averaging.
std::vector<double> alpha_window_predictions(const RegressorBundle& bundle, std::span<const Point2> segment);

double estimate_logk(const RegressorBundle& bundle, std::span<const Point2> segment);

Estimate estimate(const RegressorBundle& bundle, std::span<const Point2> segment);

/// Measures the estimate error covariance per supported length on
/// single-state segments with alpha ~ U(0.001, 1.999) and log2 K uniform in
/// [log2k_min, log2k_max]. Returns the metadata value stored under
/// "estimate_error".
nlohmann::json calibrate_error(const RegressorBundle& bundle, std::size_t per_length, double log2k_min,
                               double log2k_max, std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

RegressorBundle train_models(const TrainConfig& config, TrainingLog* log = nullptr, const ProgressFn& progress = {});

/// Brute-force baseline: log-log slope of the time-averaged MSD over lags
/// 1..max(2, T/4), clamped like the learned estimator.
double tamsd_alpha(std::span<const Point2> segment);

} // namespace fbmseg::estimators
