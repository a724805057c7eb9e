#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fbmseg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Anomalous exponent alpha in (0,2) and generalized diffusion coefficient
/// k > 0 (pixel^2 / frame^alpha).
struct DiffusiveState {
    double alpha = 1.0;
    double k = 1.0;

    friend bool operator==(const DiffusiveState&, const DiffusiveState&) = default;
};

/// Ground-truth segment: state active from frame `start` until the next
/// segment's start. The first segment always starts at frame 0.
struct TruthSegment {
    std::size_t start = 0;
    DiffusiveState state;

    friend bool operator==(const TruthSegment&, const TruthSegment&) = default;
};

struct Trajectory {
    std::int64_t id = 0;
    std::vector<Point2> coords;
    std::optional<std::vector<TruthSegment>> truth;

    std::size_t length() const noexcept { return coords.size(); }

    /// Internal ground-truth changepoints (segment starts other than 0).
    std::vector<std::size_t> truth_changepoints() const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Sub-trajectory estimate. `log_k` is the natural log of K.
struct Estimate {
    double alpha = 0.0;
    double log_k = 0.0;

    friend bool operator==(const Estimate&, const Estimate&) = default;
};

struct Segment {
    std::int64_t traj_id = 0;
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // exclusive
    Estimate estimate;
    std::optional<int> cluster;

    std::size_t length() const noexcept { return end - start; }
};

inline std::span<const Point2> slice(std::span<const Point2> coords, std::size_t start, std::size_t end) {
    return coords.subspan(start, end - start);
}

} // namespace fbmseg
