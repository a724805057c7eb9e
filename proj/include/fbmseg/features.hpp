#pragma once

#include "fbmseg/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace fbmseg::features {

/// Input lengths accepted by the alpha regressor.
inline constexpr std::array<std::size_t, 7> kSupportedLengths{5, 8, 12, 16, 32, 64, 128};

bool is_supported_length(std::size_t n);

/// Largest supported length <= n; 0 if n < 5.
std::size_t snap_down(std::size_t n);

/// Three equal-length channels per dimension. a2 (radial) is shared.
struct AlphaFeatures {
    std::vector<double> a1_x, a1_y;
    std::vector<double> a2;
    std::vector<double> a3_x, a3_y;

    std::size_t length() const { return a2.size(); }
};

/// Throws DegenerateSegmentError when the coordinate std of a dimension or
/// the mean step length is zero.
AlphaFeatures features_alpha(std::span<const Point2> coords);

/// log of the mean Euclidean step length.
double feature_k(std::span<const Point2> coords);

struct SplitPlan {
    std::size_t window = 0;
    std::vector<std::size_t> offsets;
};

/// Window length = largest supported length <= T (capped at 128) and every
/// sliding start offset 0..T-window.
SplitPlan split_lengths(std::size_t length);

} // namespace fbmseg::features
