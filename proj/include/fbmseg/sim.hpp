#pragma once

#include "fbmseg/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fbmseg::sim {

/// Lag-j autocovariance of unit-scale fractional Gaussian noise:
/// (|j+1|^a - 2|j|^a + |j-1|^a) / 2.
double fgn_autocovariance(double alpha, std::size_t lag);

/// Exact fractional Gaussian noise of length n with unit variance.
///
/// Uses circulant embedding; if the embedding has a negative eigenvalue the
/// Cholesky factor of the Toeplitz covariance is used instead.
std::vector<double> generate_fgn(double alpha, std::size_t n, std::uint64_t seed);

/// Same as generate_fgn but always through the Cholesky route. Exposed for
/// cross-checking the two synthesis paths.
std::vector<double> generate_fgn_cholesky(double alpha, std::size_t n, std::uint64_t seed);

struct SwitchingSpec {
    std::vector<DiffusiveState> states;
    double transition_p = 0.0;
    std::size_t length = 200;
    std::size_t dims = 2;
    std::uint64_t seed = 0;
    std::int64_t id = 0;
    /// Optional fixed changepoints (alternating through `states` from a
    /// random start state). When set, transition_p is ignored.
    std::vector<std::size_t> fixed_changepoints;
    /// Index of the initial state; -1 draws it uniformly.
    int initial_state = -1;

    void validate() const;
};

/// One multi-state fBm trajectory. Every constant-state run gets a fresh fGn
/// stream scaled by sqrt(2K) per dimension, starting at the origin.
Trajectory generate_trajectory(const SwitchingSpec& spec);

/// Time-averaged MSD at lags 1..max_lag (index 0 holds lag 0, always 0).
std::vector<double> time_averaged_msd(std::span<const Point2> coords, std::size_t max_lag);

/// Least-squares slope and intercept of log(msd[lag]) on log(lag) for lags
/// in [first_lag, last_lag]. Returns {slope, intercept}.
std::pair<double, double> fit_loglog(std::span<const double> msd, std::size_t first_lag, std::size_t last_lag);

} // namespace fbmseg::sim
