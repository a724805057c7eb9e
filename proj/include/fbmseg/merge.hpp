#pragma once

#include "fbmseg/clustering.hpp"
#include "fbmseg/signal.hpp"
#include "fbmseg/types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fbmseg::merge {

/// Significance level per supported segment length.
class SignificanceTable {
public:
    SignificanceTable();
    explicit SignificanceTable(std::map<std::size_t, double> levels);

    /// Level for the largest supported length <= length (5 for shorter).
    double level_for(std::size_t length) const;
    void set(std::size_t length, double level);
    const std::map<std::size_t, double>& levels() const { return levels_; }

private:
    void validate() const;
    std::map<std::size_t, double> levels_;
};

/// Decides whether two adjacent segments describe the same state.
class MergeRule {
public:
    virtual ~MergeRule() = default;
    virtual bool should_merge(const Segment& left, const Segment& right) const = 0;
};

/// Merge when both points share the most likely mixture component, or when
/// p_same = sum_c P(c|left) P(c|right) exceeds 1 - level(shorter length).
class MixtureMergeRule final : public MergeRule {
public:
    MixtureMergeRule(const clustering::MixtureModel& model, SignificanceTable table)
        : model_(model), table_(std::move(table)) {}

    bool should_merge(const Segment& left, const Segment& right) const override;

    static double p_same(const std::vector<double>& left, const std::vector<double>& right);

private:
    const clustering::MixtureModel& model_;
    SignificanceTable table_;
};

/// Merge when both points share the most likely mixture component, or when
/// one segment belongs to the other's component with posterior probability
/// at least level(shorter length). Short segments get small levels and
/// therefore need strong evidence to stay split. When an error covariance
/// per segment length is given, it is added to every component covariance
/// before a segment's posterior is computed.
class MembershipMergeRule final : public MergeRule {
public:
    using ErrorCov = std::function<clustering::Cov2(std::size_t length)>;

    MembershipMergeRule(const clustering::MixtureModel& model, SignificanceTable table, ErrorCov error = {})
        : model_(model), table_(std::move(table)), error_(std::move(error)) {}

    bool should_merge(const Segment& left, const Segment& right) const override;

    /// Component posterior of a point observed with the given error.
    std::vector<double> posterior(const clustering::Vec2& point, const clustering::Cov2& error = zero_cov()) const;

    /// max(P(argmax right | left), P(argmax left | right)).
    static double p_same_cluster(const std::vector<double>& left, const std::vector<double>& right);

    static clustering::Cov2 zero_cov() { return {0.0, 0.0, 0.0}; }

private:
    const clustering::MixtureModel& model_;
    SignificanceTable table_;
    ErrorCov error_;
};

enum class RuleKind { Membership, Posterior };

RuleKind rule_kind_from_string(const std::string& name);
std::string to_string(RuleKind kind);
std::unique_ptr<MergeRule> make_rule(RuleKind kind, const clustering::MixtureModel& model, SignificanceTable table,
                                     MembershipMergeRule::ErrorCov error = {});

/// Estimates for [start, end); std::nullopt when the segment is too short or
/// degenerate.
using SegmentEstimator = std::function<std::optional<Estimate>(std::size_t start, std::size_t end)>;

struct SegmentedTrajectory {
    std::int64_t traj_id = 0;
    std::size_t length = 0;
    std::vector<Segment> segments;

    std::vector<std::size_t> changepoints() const;
};

struct MergeStats {
    std::size_t iterations = 0;
    std::size_t auto_merges = 0;
    std::size_t rule_merges = 0;
    std::size_t estimator_calls = 0;
};

/// Observer called after every iteration of the main loop with the current
/// segment boundaries (including 0 and T).
using IterationObserver = std::function<void(const std::vector<std::size_t>& bounds)>;

/// Minimum segment length the estimators accept.
inline constexpr std::size_t kMinSegmentLength = 5;

/// Bottom-up iterative merge. Candidates must be sorted and lie in (0, T).
SegmentedTrajectory segment_trajectory(std::int64_t traj_id, std::size_t length,
                                       const signal::CandidateSet& candidates, const SegmentEstimator& estimator,
                                       const clustering::MixtureModel& model, const MergeRule& rule,
                                       MergeStats* stats = nullptr, const IterationObserver& observer = {});

} // namespace fbmseg::merge
