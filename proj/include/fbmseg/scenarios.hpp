#pragma once

#include "fbmseg/estimators.hpp"
#include "fbmseg/metrics.hpp"
#include "fbmseg/pipeline.hpp"
#include "fbmseg/types.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbmseg::scenarios {

/// One cell of a benchmark grid: a two-state sample.
struct Cell {
    std::string grid;
    std::string label;
    /// Distance between the two states along the varied axis.
    double contrast = 0.0;
    std::vector<DiffusiveState> states;
};

/// {(K=0.1, alpha), (K=0.1, alpha=1.0)} for alpha in 0.1, 0.3, ..., 1.9.
std::vector<Cell> alpha_grid();
/// {(K=2^x, alpha=1), (K=1, alpha=1)} for x in -5..5.
std::vector<Cell> k_grid();
/// Two-state scenario used by the length study: (K=1, alpha=1) and
/// (K=0.01, alpha=0.2).
Cell length_scenario();

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// `n` Markov-switching trajectories of one cell with ids 0..n-1.
std::vector<Trajectory> simulate_cell(const Cell& cell, std::size_t n, std::size_t length, double transition_p,
                                      std::uint64_t seed);

/// `n_switch` trajectories of length 2T with one changepoint at T, followed
/// by `n_null` single-state trajectories of length 2T. Start states are
/// drawn uniformly.
std::vector<Trajectory> simulate_length_sample(const Cell& cell, std::size_t half_length, std::size_t n_switch,
                                               std::size_t n_null, std::uint64_t seed);

std::vector<metrics::TruthRecord> truth_records(const std::vector<Trajectory>& trajs);

struct CellResult {
    Cell cell;
    std::size_t length = 0;
    std::size_t trajectories = 0;
    metrics::Report report;
    std::size_t mixture_k = 0;
    std::size_t min_len_used = 0;
    double seconds = 0.0;
};

/// Runs the full pipeline on a simulated sample and evaluates it.
CellResult run_cell(const Cell& cell, const std::vector<Trajectory>& trajs,
                    const estimators::RegressorBundle& bundle, const pipeline::PipelineConfig& config);

using Progress = std::function<void(const CellResult&)>;

/// Simulates and evaluates every cell of a grid; each cell is its own sample.
std::vector<CellResult> run_grid(const std::vector<Cell>& cells, std::size_t n, std::size_t length,
                                 double transition_p, std::uint64_t seed, const estimators::RegressorBundle& bundle,
                                 const pipeline::PipelineConfig& config, const Progress& progress = {});

/// One sample per half length T: n_switch trajectories of length 2T with a
/// changepoint at T plus n_null changepoint-free ones.
std::vector<CellResult> run_length_study(const Cell& cell, const std::vector<std::size_t>& half_lengths,
                                         std::size_t n_switch, std::size_t n_null, std::uint64_t seed,
                                         const estimators::RegressorBundle& bundle,
                                         const pipeline::PipelineConfig& config, const Progress& progress = {});

/// Header plus one row per result.
void write_curve_csv(std::ostream& out, const std::vector<CellResult>& results);

struct ContrastPoint {
    double contrast = 0.0;
    double jsc = 0.0;
};

/// JSC from TP/FP/FN summed over cells of equal contrast, ascending.
std::vector<ContrastPoint> jsc_by_contrast(const std::vector<CellResult>& results);

/// Number of i with values[i+1] < values[i] - tol.
std::size_t count_decreases(const std::vector<double>& values, double tol);

} // namespace fbmseg::scenarios
