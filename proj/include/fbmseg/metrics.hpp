#pragma once

#include "fbmseg/merge.hpp"
#include "fbmseg/types.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace fbmseg::metrics {

struct PairingResult {
    /// (predicted frame, true frame), increasing in both.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> false_positives;
    std::vector<std::size_t> false_negatives;
    std::size_t tolerance = 10;

    std::size_t tp() const { return pairs.size(); }
    std::size_t fp() const { return false_positives.size(); }
    std::size_t fn() const { return false_negatives.size(); }
};

/// Maximum-cardinality matching with |pred - true| < tol; among those, the
/// one with the smallest sum of squared then absolute distances. Inputs must
/// be sorted.
PairingResult pair_changepoints(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                std::size_t tol = 10);

/// TP / (TP + FP + FN); 1 when all three are zero.
double jsc(std::size_t tp, std::size_t fp, std::size_t fn);
double jsc(const PairingResult& pairing);

double mae(std::span<const double> pred, std::span<const double> truth);
/// Requires strictly positive inputs (DomainError otherwise).
double male(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
double msle(std::span<const double> pred, std::span<const double> truth);

/// Ground truth of one trajectory in evaluation form.
struct TruthRecord {
    std::int64_t traj_id = 0;
    std::size_t length = 0;
    std::vector<TruthSegment> segments;
};

struct EvalConfig {
    std::size_t tolerance = 10;
};

struct Report {
    std::size_t trajectories = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double jsc = 1.0;
    /// Over TP changepoint pairs; NaN when there are none.
    double cp_rmse = 0.0;
    double cp_mae = 0.0;
    /// Over TP segments; NaN when there are none.
    std::size_t tp_segments = 0;
    double alpha_mae = 0.0;
    double k_msle = 0.0;
    double k_male = 0.0;
    /// Share of changepoint-free trajectories predicted without changepoints.
    std::size_t null_trajectories = 0;
    std::size_t null_correct = 0;

    nlohmann::json to_json() const;
};

/// True segment i matches predicted segment j when both boundaries of i are
/// paired to the boundaries of j (trajectory ends pair with themselves).
std::vector<std::pair<std::size_t, std::size_t>> pair_segments(const PairingResult& pairing,
                                                               std::span<const std::size_t> pred_cps,
                                                               std::span<const std::size_t> true_cps);

/// Aggregates over all trajectories; ids must match one-to-one.
Report evaluate_dataset(std::span<const merge::SegmentedTrajectory> predictions, std::span<const TruthRecord> truth,
                        const EvalConfig& config = {});

} // namespace fbmseg::metrics
