#include "fbmseg/pipeline.hpp"

#include "fbmseg/error.hpp"
#include "fbmseg/features.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace fbmseg::pipeline {

namespace {

using EstimateCache = std::map<std::pair<std::size_t, std::size_t>, std::optional<Estimate>>;

std::optional<Estimate> cached_estimate(const estimators::RegressorBundle& bundle, std::span<const Point2> coords,
                                        EstimateCache& cache, std::size_t start, std::size_t end) {
    const auto key = std::make_pair(start, end);
    if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    std::optional<Estimate> out;
    try {
        const Estimate e = estimators::estimate(bundle, slice(coords, start, end));
        if (std::isfinite(e.alpha) && std::isfinite(e.log_k)) {
            out = e;
        }
    } catch (const TooShortError&) {
    } catch (const DegenerateSegmentError&) {
    }
    cache.emplace(key, out);
    return out;
}

void check_trajectory(const Trajectory& t) {
    if (t.length() < merge::kMinSegmentLength) {
        throw DataError("trajectory " + std::to_string(t.id) + " has " + std::to_string(t.length()) +
                        " frames; at least 5 are required");
    }
    try {
        (void)features::features_alpha(t.coords);
    } catch (const DegenerateSegmentError&) {
        throw DataError("trajectory " + std::to_string(t.id) + " does not move in some dimension");
    }
}

} // namespace

void PipelineConfig::validate() const {
    signal.validate();
    if (gmm.k_request == 0 || gmm.k_request < -1) {
        throw ParameterError("k must be -1 (BIC) or positive");
    }
    if (gmm.max_k == 0 || gmm.restarts == 0 || gmm.max_iter == 0) {
        throw ParameterError("max_k, restarts and max_iter must be positive");
    }
}

std::size_t PipelineConfig::effective_threads() const {
    if (threads > 0) {
        return threads;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

PipelineResult run_pipeline(const std::vector<Trajectory>& trajs, const estimators::RegressorBundle& bundle,
                            const PipelineConfig& config) {
    config.validate();
    const std::size_t n = trajs.size();
    const std::size_t threads = config.effective_threads();
    for (const auto& t : trajs) {
        check_trajectory(t);
    }

    PipelineResult result;
    result.candidates.resize(n);
    if (config.keep_signals) {
        result.signals.resize(n);
    }
    std::vector<EstimateCache> caches(n);
    std::vector<std::vector<clustering::MixturePoint>> per_traj(n);

    parallel_for(n, threads, [&](std::size_t i) {
        const auto& t = trajs[i];
        auto sig = signal::aggregate_signal(t.coords, config.signal, config.keep_signals);
        result.candidates[i] = signal::candidate_changepoints(sig.s, config.signal.lambda);
        std::size_t start = 0;
        auto bounds = result.candidates[i].frames;
        bounds.push_back(t.length());
        for (const std::size_t end : bounds) {
            if (auto e = cached_estimate(bundle, t.coords, caches[i], start, end)) {
                per_traj[i].push_back({e->alpha, e->log_k, end - start, t.id});
            }
            start = end;
        }
        if (config.keep_signals) {
            result.signals[i] = std::move(sig);
        }
    });
    for (auto& pts : per_traj) {
        result.points.insert(result.points.end(), pts.begin(), pts.end());
    }

    // Sample-wide clustering: every trajectory waits for this fit.
    auto gmm = config.gmm;
    while (true) {
        try {
            result.model = clustering::fit_gmm(result.points, gmm);
            break;
        } catch (const InsufficientDataError&) {
            if (!config.auto_min_len || gmm.min_len <= 4) {
                throw;
            }
            gmm.min_len = std::max<std::size_t>(4, gmm.min_len / 2);
        }
    }
    result.min_len_used = gmm.min_len;

    merge::MembershipMergeRule::ErrorCov error;
    if (config.error_cov && bundle.error_cov(features::kSupportedLengths.front())) {
        std::map<std::size_t, clustering::Cov2> table;
        for (const std::size_t len : features::kSupportedLengths) {
            const auto e = *bundle.error_cov(len);
            table[len] = {e[0], e[1], e[2]};
        }
        error = [table = std::move(table)](std::size_t length) {
            auto it = table.upper_bound(length);
            return it == table.begin() ? it->second : std::prev(it)->second;
        };
    }
    const auto rule = merge::make_rule(config.rule, result.model, config.significance, std::move(error));
    result.segmentations.resize(n);
    std::vector<merge::MergeStats> stats(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto& t = trajs[i];
        merge::SegmentEstimator est = [&](std::size_t s, std::size_t e) {
            return cached_estimate(bundle, t.coords, caches[i], s, e);
        };
        result.segmentations[i] =
            merge::segment_trajectory(t.id, t.length(), result.candidates[i], est, result.model, *rule, &stats[i]);
        caches[i].clear();
    });
    for (const auto& s : stats) {
        result.totals.iterations += s.iterations;
        result.totals.auto_merges += s.auto_merges;
        result.totals.rule_merges += s.rule_merges;
        result.totals.estimator_calls += s.estimator_calls;
    }
    return result;
}

} // namespace fbmseg::pipeline
