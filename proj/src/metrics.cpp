#include "fbmseg/metrics.hpp"

#include "fbmseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace fbmseg::metrics {

namespace {

struct Score {
    std::size_t count = 0;
    std::size_t sq = 0;
    std::size_t abs = 0;

    bool better_than(const Score& o) const {
        if (count != o.count) {
            return count > o.count;
        }
        if (sq != o.sq) {
            return sq < o.sq;
        }
        return abs < o.abs;
    }
};

enum class Move : unsigned char { None, Match, SkipPred, SkipTruth };

void check_same_size(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ParameterError("metric inputs must have equal length");
    }
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

} // namespace

PairingResult pair_changepoints(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                std::size_t tol) {
    const std::size_t n = pred.size();
    const std::size_t m = truth.size();
    if (!std::is_sorted(pred.begin(), pred.end()) || !std::is_sorted(truth.begin(), truth.end())) {
        throw ParameterError("changepoint lists must be sorted");
    }
    // An optimal matching never crosses, so a prefix DP over both sorted
    // lists is exact.
    std::vector<Score> dp((n + 1) * (m + 1));
    std::vector<Move> move((n + 1) * (m + 1), Move::None);
    auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t j = 0; j <= m; ++j) {
            if (i == 0 && j == 0) {
                continue;
            }
            Score best;
            Move best_move = Move::None;
            auto consider = [&](const Score& s, Move mv) {
                if (best_move == Move::None || s.better_than(best)) {
                    best = s;
                    best_move = mv;
                }
            };
            if (i > 0 && j > 0) {
                const std::size_t d = pred[i - 1] > truth[j - 1] ? pred[i - 1] - truth[j - 1] : truth[j - 1] - pred[i - 1];
                if (d < tol) {
                    Score s = dp[at(i - 1, j - 1)];
                    s.count += 1;
                    s.sq += d * d;
                    s.abs += d;
                    consider(s, Move::Match);
                }
            }
            if (i > 0) {
                consider(dp[at(i - 1, j)], Move::SkipPred);
            }
            if (j > 0) {
                consider(dp[at(i, j - 1)], Move::SkipTruth);
            }
            dp[at(i, j)] = best;
            move[at(i, j)] = best_move;
        }
    }

    PairingResult out;
    out.tolerance = tol;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        switch (move[at(i, j)]) {
        case Move::Match:
            out.pairs.emplace_back(pred[i - 1], truth[j - 1]);
            --i;
            --j;
            break;
        case Move::SkipPred:
            out.false_positives.push_back(pred[i - 1]);
            --i;
            break;
        case Move::SkipTruth:
            out.false_negatives.push_back(truth[j - 1]);
            --j;
            break;
        case Move::None:
            i = j = 0;
            break;
        }
    }
    std::reverse(out.pairs.begin(), out.pairs.end());
    std::reverse(out.false_positives.begin(), out.false_positives.end());
    std::reverse(out.false_negatives.begin(), out.false_negatives.end());
    return out;
}

double jsc(std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t denom = tp + fp + fn;
    return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

double jsc(const PairingResult& pairing) {
    return jsc(pairing.tp(), pairing.fp(), pairing.fn());
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_same_size(pred, truth);
    if (pred.empty()) {
        return nan();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred[i] - truth[i]);
    }
    return acc / static_cast<double>(pred.size());
}

double male(std::span<const double> pred, std::span<const double> truth) {
    check_same_size(pred, truth);
    if (pred.empty()) {
        return nan();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred[i] > 0.0) || !(truth[i] > 0.0)) {
            throw DomainError("MALE requires strictly positive values");
        }
        acc += std::abs(std::log(pred[i]) - std::log(truth[i]));
    }
    return acc / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    check_same_size(pred, truth);
    if (pred.empty()) {
        return nan();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double msle(std::span<const double> pred, std::span<const double> truth) {
    check_same_size(pred, truth);
    if (pred.empty()) {
        return nan();
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred[i] > -1.0) || !(truth[i] > -1.0)) {
            throw DomainError("MSLE requires values greater than -1");
        }
        const double d = std::log1p(pred[i]) - std::log1p(truth[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

std::vector<std::pair<std::size_t, std::size_t>> pair_segments(const PairingResult& pairing,
                                                               std::span<const std::size_t> pred_cps,
                                                               std::span<const std::size_t> true_cps) {
    // Boundary index -> partner boundary index; ends pair with themselves.
    std::map<std::size_t, std::size_t> true_to_pred;
    true_to_pred[0] = 0;
    true_to_pred[true_cps.size() + 1] = pred_cps.size() + 1;
    for (const auto& [p, t] : pairing.pairs) {
        const auto pi = static_cast<std::size_t>(std::lower_bound(pred_cps.begin(), pred_cps.end(), p) - pred_cps.begin()) + 1;
        const auto ti = static_cast<std::size_t>(std::lower_bound(true_cps.begin(), true_cps.end(), t) - true_cps.begin()) + 1;
        true_to_pred[ti] = pi;
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t seg = 0; seg <= true_cps.size(); ++seg) {
        auto a = true_to_pred.find(seg);
        auto b = true_to_pred.find(seg + 1);
        if (a == true_to_pred.end() || b == true_to_pred.end()) {
            continue;
        }
        if (b->second == a->second + 1) {
            out.emplace_back(seg, a->second);
        }
    }
    return out;
}

Report evaluate_dataset(std::span<const merge::SegmentedTrajectory> predictions, std::span<const TruthRecord> truth,
                        const EvalConfig& config) {
    std::map<std::int64_t, const merge::SegmentedTrajectory*> pred_by_id;
    for (const auto& p : predictions) {
        if (!pred_by_id.emplace(p.traj_id, &p).second) {
            throw DataError("duplicate predicted trajectory id " + std::to_string(p.traj_id));
        }
    }
    std::map<std::int64_t, const TruthRecord*> truth_by_id;
    for (const auto& t : truth) {
        if (!truth_by_id.emplace(t.traj_id, &t).second) {
            throw DataError("duplicate ground-truth trajectory id " + std::to_string(t.traj_id));
        }
    }
    std::vector<std::int64_t> missing_pred, missing_truth;
    for (const auto& [id, t] : truth_by_id) {
        if (!pred_by_id.count(id)) {
            missing_pred.push_back(id);
        }
    }
    for (const auto& [id, p] : pred_by_id) {
        if (!truth_by_id.count(id)) {
            missing_truth.push_back(id);
        }
    }
    if (!missing_pred.empty() || !missing_truth.empty()) {
        std::ostringstream os;
        os << "trajectory ids differ between predictions and ground truth;";
        if (!missing_pred.empty()) {
            os << " without prediction:";
            for (auto id : missing_pred) os << ' ' << id;
            os << ';';
        }
        if (!missing_truth.empty()) {
            os << " without ground truth:";
            for (auto id : missing_truth) os << ' ' << id;
        }
        throw DataError(os.str());
    }

    Report r;
    std::vector<double> cp_pred, cp_true;
    std::vector<double> a_pred, a_true, k_pred, k_true;
    for (const auto& [id, t] : truth_by_id) {
        const auto& p = *pred_by_id.at(id);
        ++r.trajectories;
        std::vector<std::size_t> true_cps;
        for (const auto& seg : t->segments) {
            if (seg.start > 0) {
                true_cps.push_back(seg.start);
            }
        }
        const auto pred_cps = p.changepoints();
        const auto pairing = pair_changepoints(pred_cps, true_cps, config.tolerance);
        r.tp += pairing.tp();
        r.fp += pairing.fp();
        r.fn += pairing.fn();
        for (const auto& [pf, tf] : pairing.pairs) {
            cp_pred.push_back(static_cast<double>(pf));
            cp_true.push_back(static_cast<double>(tf));
        }
        if (true_cps.empty()) {
            ++r.null_trajectories;
            if (pred_cps.empty()) {
                ++r.null_correct;
            }
        }
        for (const auto& [ts, ps] : pair_segments(pairing, pred_cps, true_cps)) {
            const auto& est = p.segments.at(ps).estimate;
            const auto& st = t->segments.at(ts).state;
            if (!std::isfinite(est.alpha) || !std::isfinite(est.log_k)) {
                continue;
            }
            a_pred.push_back(est.alpha);
            a_true.push_back(st.alpha);
            k_pred.push_back(std::exp(est.log_k));
            k_true.push_back(st.k);
        }
    }
    r.jsc = jsc(r.tp, r.fp, r.fn);
    r.cp_rmse = rmse(cp_pred, cp_true);
    r.cp_mae = mae(cp_pred, cp_true);
    r.tp_segments = a_pred.size();
    r.alpha_mae = mae(a_pred, a_true);
    r.k_msle = msle(k_pred, k_true);
    r.k_male = male(k_pred, k_true);
    return r;
}

nlohmann::json Report::to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"trajectories", trajectories},
            {"tp", tp},
            {"fp", fp},
            {"fn", fn},
            {"jsc", jsc},
            {"cp_rmse", num(cp_rmse)},
            {"cp_mae", num(cp_mae)},
            {"tp_segments", tp_segments},
            {"alpha_mae", num(alpha_mae)},
            {"k_msle", num(k_msle)},
            {"k_male", num(k_male)},
            {"null_trajectories", null_trajectories},
            {"null_correct", null_correct}};
}

} // namespace fbmseg::metrics
