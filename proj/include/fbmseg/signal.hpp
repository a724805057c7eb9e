#pragma once

#include "fbmseg/types.hpp"

#include <map>
#include <span>
#include <vector>

namespace fbmseg::signal {

struct SignalConfig {
    std::vector<std::size_t> window_sizes = default_window_sizes();
    double lambda = 0.15;
    /// Extension length; 0 selects max(window_sizes) / 2.
    std::size_t extension = 0;

    static std::vector<std::size_t> default_window_sizes();

    std::size_t effective_extension() const;
    void validate() const;
};

/// Reflection-extended trajectory: `extension` points on each side.
struct Extended {
    std::vector<double> x;
    std::vector<double> y;
    std::size_t extension = 0;
};

/// Point-reflects both extremities: x[-j] = 2 x[0] - x[j] and
/// x[T-1+j] = 2 x[T-1] - x[T-1-j]. Extensions longer than T-1 reflect the
/// already-extended sequence again.
Extended extend_trajectory(std::span<const Point2> coords, std::size_t extension);

struct HalfStats {
    double a = 0.0;        // sum of |x_k - x_0| in x
    double b = 0.0;        // same in y
    double sigma_x = 0.0;  // population std of raw x
    double sigma_y = 0.0;
};

/// Statistics of one window half: coordinates [begin, begin + len).
HalfStats half_stats(const Extended& ext, std::size_t begin, std::size_t len);

struct WindowStats {
    HalfStats left;
    HalfStats right;
};

/// Halves [split - w/2, split) and [split, split + w/2) in extended indices.
WindowStats half_window_stats(const Extended& ext, std::size_t split, std::size_t w);

/// Ratio part of the window score: |dA/max(A) + dB/max(B)| with 0/0 := 0.
double ratio_term(const WindowStats& s);
/// Standard-deviation part: |dsigma_x| + |dsigma_y|.
double sigma_term(const WindowStats& s);

/// v_i^w = ratio_term + sigma_term.
double window_score(const Extended& ext, std::size_t split, std::size_t w);

struct Signal {
    /// Normalized score per split frame 0..T (T+1 entries).
    std::vector<double> s;
    /// Raw score before normalization.
    std::vector<double> raw;
    /// Per-window-size V^w over the same frames.
    std::map<std::size_t, std::vector<double>> components;
};

Signal aggregate_signal(std::span<const Point2> coords, const SignalConfig& config, bool keep_components = false);

struct CandidateSet {
    std::vector<std::size_t> frames;
    std::vector<double> scores;
};

/// Strict local maxima of s with value >= lambda, restricted to (0, T).
/// A plateau maximum reports its midpoint (lower midpoint on even runs).
CandidateSet candidate_changepoints(std::span<const double> s, double lambda);

} // namespace fbmseg::signal
