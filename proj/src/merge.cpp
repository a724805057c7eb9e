#include "fbmseg/merge.hpp"

#include "fbmseg/error.hpp"
#include "fbmseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fbmseg::merge {

SignificanceTable::SignificanceTable()
    : levels_{{5, 1e-5}, {8, 1e-3}, {12, 2.5e-2}, {16, 1e-1}, {32, 1e-1}, {64, 1e-1}, {128, 1e-1}} {}

SignificanceTable::SignificanceTable(std::map<std::size_t, double> levels) : levels_(std::move(levels)) {
    validate();
}

void SignificanceTable::validate() const {
    for (std::size_t len : features::kSupportedLengths) {
        auto it = levels_.find(len);
        if (it == levels_.end()) {
            throw ParameterError("significance table lacks length " + std::to_string(len));
        }
        if (!(it->second > 0.0 && it->second < 1.0)) {
            throw ParameterError("significance levels must lie in (0,1)");
        }
    }
    if (levels_.size() != features::kSupportedLengths.size()) {
        throw ParameterError("significance table keys must be exactly the supported lengths");
    }
}

void SignificanceTable::set(std::size_t length, double level) {
    if (!features::is_supported_length(length)) {
        throw ParameterError("significance level for unsupported length " + std::to_string(length));
    }
    levels_[length] = level;
    validate();
}

double SignificanceTable::level_for(std::size_t length) const {
    const std::size_t snapped = std::max(features::snap_down(length), features::kSupportedLengths.front());
    return levels_.at(snapped);
}

double MixtureMergeRule::p_same(const std::vector<double>& left, const std::vector<double>& right) {
    double p = 0.0;
    for (std::size_t c = 0; c < left.size(); ++c) {
        p += left[c] * right[c];
    }
    return p;
}

bool MixtureMergeRule::should_merge(const Segment& left, const Segment& right) const {
    const clustering::Vec2 pl{left.estimate.alpha, left.estimate.log_k};
    const clustering::Vec2 pr{right.estimate.alpha, right.estimate.log_k};
    const auto post_l = clustering::posterior(model_, pl);
    const auto post_r = clustering::posterior(model_, pr);
    const auto arg_l = std::max_element(post_l.begin(), post_l.end()) - post_l.begin();
    const auto arg_r = std::max_element(post_r.begin(), post_r.end()) - post_r.begin();
    if (arg_l == arg_r) {
        return true;
    }
    const double level = table_.level_for(std::min(left.length(), right.length()));
    return p_same(post_l, post_r) > 1.0 - level;
}

std::vector<double> MembershipMergeRule::posterior(const clustering::Vec2& point, const clustering::Cov2& error) const {
    if (error.xx == 0.0 && error.xy == 0.0 && error.yy == 0.0) {
        return clustering::posterior(model_, point);
    }
    clustering::MixtureModel widened = model_;
    for (auto& c : widened.components) {
        c.cov = {c.cov.xx + error.xx, c.cov.xy + error.xy, c.cov.yy + error.yy};
    }
    return clustering::posterior(widened, point);
}

double MembershipMergeRule::p_same_cluster(const std::vector<double>& left, const std::vector<double>& right) {
    const auto cl = static_cast<std::size_t>(std::max_element(left.begin(), left.end()) - left.begin());
    const auto cr = static_cast<std::size_t>(std::max_element(right.begin(), right.end()) - right.begin());
    return std::max(left[cr], right[cl]);
}

bool MembershipMergeRule::should_merge(const Segment& left, const Segment& right) const {
    const clustering::Vec2 pl{left.estimate.alpha, left.estimate.log_k};
    const clustering::Vec2 pr{right.estimate.alpha, right.estimate.log_k};
    const auto el = error_ ? error_(left.length()) : zero_cov();
    const auto er = error_ ? error_(right.length()) : zero_cov();
    const auto post_l = posterior(pl, el);
    const auto post_r = posterior(pr, er);
    const auto cl = std::max_element(post_l.begin(), post_l.end()) - post_l.begin();
    const auto cr = std::max_element(post_r.begin(), post_r.end()) - post_r.begin();
    if (cl == cr) {
        return true;
    }
    return p_same_cluster(post_l, post_r) >= table_.level_for(std::min(left.length(), right.length()));
}

RuleKind rule_kind_from_string(const std::string& name) {
    if (name == "membership") {
        return RuleKind::Membership;
    }
    if (name == "posterior") {
        return RuleKind::Posterior;
    }
    throw ParameterError("merge rule must be 'membership' or 'posterior', got '" + name + "'");
}

std::string to_string(RuleKind kind) {
    return kind == RuleKind::Membership ? "membership" : "posterior";
}

std::unique_ptr<MergeRule> make_rule(RuleKind kind, const clustering::MixtureModel& model, SignificanceTable table,
                                     MembershipMergeRule::ErrorCov error) {
    if (kind == RuleKind::Membership) {
        return std::make_unique<MembershipMergeRule>(model, std::move(table), std::move(error));
    }
    return std::make_unique<MixtureMergeRule>(model, std::move(table));
}

std::vector<std::size_t> SegmentedTrajectory::changepoints() const {
    std::vector<std::size_t> cps;
    for (std::size_t i = 1; i < segments.size(); ++i) {
        cps.push_back(segments[i].start);
    }
    return cps;
}

namespace {

struct Boundary {
    std::size_t frame = 0;
    double score = 0.0;
    bool explored = false;
};

class MergeState {
public:
    MergeState(std::size_t length, const signal::CandidateSet& candidates, const SegmentEstimator& estimator,
               MergeStats& stats)
        : length_(length), estimator_(estimator), stats_(stats) {
        std::size_t prev = 0;
        for (std::size_t i = 0; i < candidates.frames.size(); ++i) {
            const std::size_t f = candidates.frames[i];
            if (f <= prev || f >= length) {
                throw ParameterError("candidate changepoints must be strictly increasing inside (0, T)");
            }
            cps_.push_back({f, candidates.scores[i], false});
            prev = f;
        }
        estimates_.resize(cps_.size() + 1);
        for (std::size_t s = 0; s < estimates_.size(); ++s) {
            estimates_[s] = estimate(start(s), end(s));
        }
    }

    std::size_t segment_count() const { return cps_.size() + 1; }
    std::size_t start(std::size_t seg) const { return seg == 0 ? 0 : cps_[seg - 1].frame; }
    std::size_t end(std::size_t seg) const { return seg == cps_.size() ? length_ : cps_[seg].frame; }
    const std::optional<Estimate>& seg_estimate(std::size_t seg) const { return estimates_[seg]; }
    std::vector<Boundary>& cps() { return cps_; }

    std::optional<Estimate> estimate(std::size_t s, std::size_t e) {
        if (e - s < kMinSegmentLength) {
            return std::nullopt;
        }
        ++stats_.estimator_calls;
        return estimator_(s, e);
    }

    /// Removes changepoint `cp` (between segments cp and cp+1) and stores the
    /// union estimate. Neighboring changepoints become unexplored.
    void remove(std::size_t cp, std::optional<Estimate> union_estimate) {
        cps_.erase(cps_.begin() + static_cast<std::ptrdiff_t>(cp));
        estimates_.erase(estimates_.begin() + static_cast<std::ptrdiff_t>(cp) + 1);
        estimates_[cp] = union_estimate;
        if (cp > 0) {
            cps_[cp - 1].explored = false;
        }
        if (cp < cps_.size()) {
            cps_[cp].explored = false;
        }
    }

    std::vector<std::size_t> bounds() const {
        std::vector<std::size_t> b{0};
        for (const auto& c : cps_) {
            b.push_back(c.frame);
        }
        b.push_back(length_);
        return b;
    }

    Segment segment(std::int64_t traj_id, std::size_t seg) const {
        Segment s;
        s.traj_id = traj_id;
        s.start = start(seg);
        s.end = end(seg);
        if (estimates_[seg]) {
            s.estimate = *estimates_[seg];
        } else {
            s.estimate = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        }
        return s;
    }

private:
    std::size_t length_;
    const SegmentEstimator& estimator_;
    MergeStats& stats_;
    std::vector<Boundary> cps_;
    std::vector<std::optional<Estimate>> estimates_;
};

double union_likelihood(const clustering::MixtureModel& model, const std::optional<Estimate>& e) {
    if (!e) {
        return -1.0;
    }
    return clustering::mixture_density(model, {e->alpha, e->log_k});
}

} // namespace

SegmentedTrajectory segment_trajectory(std::int64_t traj_id, std::size_t length,
                                       const signal::CandidateSet& candidates, const SegmentEstimator& estimator,
                                       const clustering::MixtureModel& model, const MergeRule& rule,
                                       MergeStats* stats_out, const IterationObserver& observer) {
    MergeStats stats;
    MergeState state(length, candidates, estimator, stats);

    // Segments the estimators cannot handle (too short or without motion)
    // join the neighbor whose union is more likely under the mixture.
    while (state.segment_count() > 1) {
        std::size_t bad = state.segment_count();
        for (std::size_t s = 0; s < state.segment_count(); ++s) {
            if (!state.seg_estimate(s)) {
                bad = s;
                break;
            }
        }
        if (bad == state.segment_count()) {
            break;
        }
        std::optional<Estimate> with_left, with_right;
        double like_left = -2.0, like_right = -2.0;
        if (bad > 0) {
            with_left = state.estimate(state.start(bad - 1), state.end(bad));
            like_left = union_likelihood(model, with_left);
        }
        if (bad + 1 < state.segment_count()) {
            with_right = state.estimate(state.start(bad), state.end(bad + 1));
            like_right = union_likelihood(model, with_right);
        }
        if (like_left >= like_right) {
            state.remove(bad - 1, with_left);
        } else {
            state.remove(bad, with_right);
        }
        ++stats.auto_merges;
    }

    auto& cps = state.cps();
    while (true) {
        std::size_t pick = cps.size();
        for (std::size_t i = 0; i < cps.size(); ++i) {
            if (!cps[i].explored && (pick == cps.size() || cps[i].score < cps[pick].score)) {
                pick = i;
            }
        }
        if (pick == cps.size()) {
            break;
        }
        ++stats.iterations;
        const Segment left = state.segment(traj_id, pick);
        const Segment right = state.segment(traj_id, pick + 1);
        if (rule.should_merge(left, right)) {
            auto merged = state.estimate(left.start, right.end);
            if (!merged) {
                merged = left.length() >= right.length() ? left.estimate : right.estimate;
            }
            state.remove(pick, merged);
            ++stats.rule_merges;
        } else {
            cps[pick].explored = true;
        }
        if (observer) {
            observer(state.bounds());
        }
    }

    SegmentedTrajectory out;
    out.traj_id = traj_id;
    out.length = length;
    for (std::size_t s = 0; s < state.segment_count(); ++s) {
        Segment seg = state.segment(traj_id, s);
        if (std::isfinite(seg.estimate.alpha) && !model.components.empty()) {
            seg.cluster = static_cast<int>(clustering::argmax_component(model, {seg.estimate.alpha, seg.estimate.log_k}));
        }
        out.segments.push_back(seg);
    }
    if (stats_out != nullptr) {
        *stats_out = stats;
    }
    return out;
}

} // namespace fbmseg::merge
