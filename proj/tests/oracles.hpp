#pragma once

// Brute-force reference implementations used to check the metrics module.

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <vector>

namespace oracle {

struct MatchScore {
    std::size_t count = 0;
    long long sq = 0;
    long long abs = 0;

    bool operator==(const MatchScore&) const = default;
};

inline bool better(const MatchScore& a, const MatchScore& b) {
    if (a.count != b.count) {
        return a.count > b.count;
    }
    if (a.sq != b.sq) {
        return a.sq < b.sq;
    }
    return a.abs < b.abs;
}

// Tries every assignment of predicted to true changepoints.
inline void search(const std::vector<long long>& pred, const std::vector<long long>& truth, long long tol,
                   std::size_t i, std::vector<bool>& used, MatchScore cur, MatchScore& best) {
    if (i == pred.size()) {
        if (better(cur, best)) {
            best = cur;
        }
        return;
    }
    search(pred, truth, tol, i + 1, used, cur, best);
    for (std::size_t j = 0; j < truth.size(); ++j) {
        const long long d = std::llabs(pred[i] - truth[j]);
        if (!used[j] && d < tol) {
            used[j] = true;
            MatchScore next = cur;
            next.count += 1;
            next.sq += d * d;
            next.abs += d;
            search(pred, truth, tol, i + 1, used, next, best);
            used[j] = false;
        }
    }
}

inline MatchScore best_matching(const std::vector<long long>& pred, const std::vector<long long>& truth,
                                long long tol) {
    std::vector<bool> used(truth.size(), false);
    MatchScore best;
    search(pred, truth, tol, 0, used, MatchScore{}, best);
    return best;
}

inline double jsc(double tp, double fp, double fn) {
    return tp + fp + fn == 0 ? 1.0 : tp / (tp + fp + fn);
}

inline double mae(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - t[i]);
    return s / p.size();
}

inline double rmse(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::pow(p[i] - t[i], 2);
    return std::sqrt(s / p.size());
}

inline double male(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(std::log(p[i] / t[i]));
    return s / p.size();
}

inline double msle(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::pow(std::log((1 + p[i]) / (1 + t[i])), 2);
    return s / p.size();
}

} // namespace oracle
