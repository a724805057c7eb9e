#include "fbmseg/features.hpp"

#include "fbmseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fbmseg::features {

bool is_supported_length(std::size_t n) {
    return std::find(kSupportedLengths.begin(), kSupportedLengths.end(), n) != kSupportedLengths.end();
}

std::size_t snap_down(std::size_t n) {
    std::size_t best = 0;
    for (std::size_t len : kSupportedLengths) {
        if (len <= n) {
            best = len;
        }
    }
    return best;
}

namespace {

double population_std(std::span<const Point2> coords, double Point2::*axis) {
    double mean = 0.0;
    for (const auto& p : coords) {
        mean += p.*axis;
    }
    mean /= static_cast<double>(coords.size());
    double var = 0.0;
    for (const auto& p : coords) {
        var += (p.*axis - mean) * (p.*axis - mean);
    }
    return std::sqrt(var / static_cast<double>(coords.size()));
}

double mean_step(std::span<const Point2> coords) {
    double acc = 0.0;
    for (std::size_t t = 1; t < coords.size(); ++t) {
        acc += std::hypot(coords[t].x - coords[t - 1].x, coords[t].y - coords[t - 1].y);
    }
    return acc / static_cast<double>(coords.size() - 1);
}

} // namespace

AlphaFeatures features_alpha(std::span<const Point2> coords) {
    const std::size_t n = coords.size();
    if (n < 2) {
        throw TooShortError("alpha features need at least 2 coordinates");
    }
    const double sx = population_std(coords, &Point2::x);
    const double sy = population_std(coords, &Point2::y);
    const double step = mean_step(coords);
    if (!(sx > 0.0) || !(sy > 0.0) || !(step > 0.0)) {
        throw DegenerateSegmentError("segment without motion in some dimension");
    }
    const double len = static_cast<double>(n);
    AlphaFeatures f;
    f.a1_x.assign(n, 0.0);
    f.a1_y.assign(n, 0.0);
    f.a2.assign(n, 0.0);
    f.a3_x.assign(n, 0.0);
    f.a3_y.assign(n, 0.0);
    double cx = 0.0, cy = 0.0;
    const Point2 origin = coords.front();
    for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) {
            cx += std::abs(coords[j].x - coords[j - 1].x);
            cy += std::abs(coords[j].y - coords[j - 1].y);
        }
        const double dx = coords[j].x - origin.x;
        const double dy = coords[j].y - origin.y;
        f.a1_x[j] = cx / (sx * len);
        f.a1_y[j] = cy / (sy * len);
        f.a2[j] = std::hypot(dx, dy) / step / len;
        f.a3_x[j] = dx / step / len;
        f.a3_y[j] = dy / step / len;
    }
    return f;
}

double feature_k(std::span<const Point2> coords) {
    if (coords.size() < 2) {
        throw TooShortError("K feature needs at least one step");
    }
    const double step = mean_step(coords);
    if (!(step > 0.0)) {
        throw DegenerateSegmentError("segment without motion");
    }
    return std::log(step);
}

SplitPlan split_lengths(std::size_t length) {
    if (length < kSupportedLengths.front()) {
        throw TooShortError("segment of length " + std::to_string(length) + " is shorter than 5");
    }
    SplitPlan plan;
    plan.window = snap_down(length);
    for (std::size_t off = 0; off + plan.window <= length; ++off) {
        plan.offsets.push_back(off);
    }
    return plan;
}

} // namespace fbmseg::features
