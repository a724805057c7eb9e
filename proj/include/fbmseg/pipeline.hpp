#pragma once

#include "fbmseg/clustering.hpp"
#include "fbmseg/estimators.hpp"
#include "fbmseg/merge.hpp"
#include "fbmseg/signal.hpp"
#include "fbmseg/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace fbmseg::pipeline {

struct PipelineConfig {
    signal::SignalConfig signal;
    clustering::GmmConfig gmm;
    merge::SignificanceTable significance;
    merge::RuleKind rule = merge::RuleKind::Membership;
    /// Add the model's calibrated estimate error to the membership test.
    bool error_cov = true;
    /// Worker threads; 0 uses the hardware concurrency.
    std::size_t threads = 0;
    /// On too few clustering points, halve min_len (down to 4) and refit.
    bool auto_min_len = false;
    bool keep_signals = false;

    void validate() const;
    std::size_t effective_threads() const;
};

struct PipelineResult {
    std::vector<merge::SegmentedTrajectory> segmentations;
    /// Initial sub-trajectory estimates of the whole sample, in trajectory
    /// order; the clustering input before the length filter.
    std::vector<clustering::MixturePoint> points;
    clustering::MixtureModel model;
    std::size_t min_len_used = 0;
    std::vector<signal::CandidateSet> candidates;
    /// Filled when keep_signals is set.
    std::vector<signal::Signal> signals;
    merge::MergeStats totals;
};

/// Runs fn(i) for i in [0, n) on `threads` workers. The exception of the
/// lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Signal and candidates per trajectory, estimates of the initial
/// sub-trajectories, sample-wide mixture fit, then the merge loop per
/// trajectory. Output order follows the input order.
PipelineResult run_pipeline(const std::vector<Trajectory>& trajs, const estimators::RegressorBundle& bundle,
                            const PipelineConfig& config);

} // namespace fbmseg::pipeline
