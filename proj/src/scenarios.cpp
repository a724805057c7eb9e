#include "fbmseg/scenarios.hpp"

#include "fbmseg/dataset_io.hpp"
#include "fbmseg/sim.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace fbmseg::scenarios {

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string csv_number(double v) {
    return std::isfinite(v) ? io::format_double(v) : std::string();
}

} // namespace

std::vector<Cell> alpha_grid() {
    std::vector<Cell> out;
    for (int i = 0; i < 10; ++i) {
        const double a = 0.1 + 0.2 * i;
        Cell c;
        c.grid = "alpha";
        c.label = "alpha=" + fixed(a, 1);
        c.contrast = std::round(std::abs(a - 1.0) * 10.0) / 10.0;
        c.states = {{a, 0.1}, {1.0, 0.1}};
        out.push_back(c);
    }
    return out;
}

std::vector<Cell> k_grid() {
    std::vector<Cell> out;
    for (int x = -5; x <= 5; ++x) {
        Cell c;
        c.grid = "k";
        c.label = "log2k=" + std::to_string(x);
        c.contrast = std::abs(x);
        c.states = {{1.0, std::ldexp(1.0, x)}, {1.0, 1.0}};
        out.push_back(c);
    }
    return out;
}

Cell length_scenario() {
    Cell c;
    c.grid = "length";
    c.label = "A";
    c.states = {{1.0, 1.0}, {0.2, 0.01}};
    return c;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<Trajectory> simulate_cell(const Cell& cell, std::size_t n, std::size_t length, double transition_p,
                                      std::uint64_t seed) {
    std::vector<Trajectory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sim::SwitchingSpec spec;
        spec.states = cell.states;
        spec.transition_p = transition_p;
        spec.length = length;
        spec.seed = derive_seed(seed, i);
        spec.id = static_cast<std::int64_t>(i);
        out.push_back(sim::generate_trajectory(spec));
    }
    return out;
}

std::vector<Trajectory> simulate_length_sample(const Cell& cell, std::size_t half_length, std::size_t n_switch,
                                               std::size_t n_null, std::uint64_t seed) {
    std::vector<Trajectory> out;
    out.reserve(n_switch + n_null);
    for (std::size_t i = 0; i < n_switch + n_null; ++i) {
        sim::SwitchingSpec spec;
        spec.states = cell.states;
        spec.length = 2 * half_length;
        spec.seed = derive_seed(seed, half_length, i);
        spec.id = static_cast<std::int64_t>(i);
        if (i < n_switch) {
            spec.fixed_changepoints = {half_length};
        }
        out.push_back(sim::generate_trajectory(spec));
    }
    return out;
}

std::vector<metrics::TruthRecord> truth_records(const std::vector<Trajectory>& trajs) {
    std::vector<metrics::TruthRecord> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) {
        metrics::TruthRecord r;
        r.traj_id = t.id;
        r.length = t.length();
        if (t.truth) {
            r.segments = *t.truth;
        }
        out.push_back(std::move(r));
    }
    return out;
}

CellResult run_cell(const Cell& cell, const std::vector<Trajectory>& trajs,
                    const estimators::RegressorBundle& bundle, const pipeline::PipelineConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = pipeline::run_pipeline(trajs, bundle, config);
    const auto truth = truth_records(trajs);
    CellResult out;
    out.cell = cell;
    out.length = trajs.empty() ? 0 : trajs.front().length();
    out.trajectories = trajs.size();
    out.report = metrics::evaluate_dataset(res.segmentations, truth);
    out.mixture_k = res.model.k();
    out.min_len_used = res.min_len_used;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::vector<CellResult> run_grid(const std::vector<Cell>& cells, std::size_t n, std::size_t length,
                                 double transition_p, std::uint64_t seed, const estimators::RegressorBundle& bundle,
                                 const pipeline::PipelineConfig& config, const Progress& progress) {
    std::vector<CellResult> out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto trajs = simulate_cell(cells[c], n, length, transition_p, derive_seed(seed, c, 1));
        out.push_back(run_cell(cells[c], trajs, bundle, config));
        if (progress) {
            progress(out.back());
        }
    }
    return out;
}

std::vector<CellResult> run_length_study(const Cell& cell, const std::vector<std::size_t>& half_lengths,
                                         std::size_t n_switch, std::size_t n_null, std::uint64_t seed,
                                         const estimators::RegressorBundle& bundle,
                                         const pipeline::PipelineConfig& config, const Progress& progress) {
    std::vector<CellResult> out;
    for (std::size_t T : half_lengths) {
        Cell c = cell;
        c.label = cell.label + ":T=" + std::to_string(T);
        c.contrast = static_cast<double>(T);
        const auto trajs = simulate_length_sample(cell, T, n_switch, n_null, seed);
        out.push_back(run_cell(c, trajs, bundle, config));
        if (progress) {
            progress(out.back());
        }
    }
    return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CellResult>& results) {
    out << "grid,cell,contrast,T,trajectories,tp,fp,fn,jsc,cp_rmse,cp_mae,alpha_mae,k_msle,k_male,"
           "null_trajectories,null_correct,mixture_k,min_len,seconds\n";
    for (const auto& r : results) {
        const auto& m = r.report;
        out << r.cell.grid << ',' << r.cell.label << ',' << io::format_double(r.cell.contrast) << ',' << r.length
            << ',' << r.trajectories << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << csv_number(m.jsc) << ','
            << csv_number(m.cp_rmse) << ',' << csv_number(m.cp_mae) << ',' << csv_number(m.alpha_mae) << ','
            << csv_number(m.k_msle) << ',' << csv_number(m.k_male) << ',' << m.null_trajectories << ','
            << m.null_correct << ',' << r.mixture_k << ',' << r.min_len_used << ',' << fixed(r.seconds, 2) << '\n';
    }
}

std::vector<ContrastPoint> jsc_by_contrast(const std::vector<CellResult>& results) {
    std::map<double, std::array<std::size_t, 3>> sums;
    for (const auto& r : results) {
        auto& s = sums[r.cell.contrast];
        s[0] += r.report.tp;
        s[1] += r.report.fp;
        s[2] += r.report.fn;
    }
    std::vector<ContrastPoint> out;
    for (const auto& [c, s] : sums) {
        out.push_back({c, metrics::jsc(s[0], s[1], s[2])});
    }
    return out;
}

std::size_t count_decreases(const std::vector<double>& values, double tol) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        if (values[i + 1] < values[i] - tol) {
            ++n;
        }
    }
    return n;
}

} // namespace fbmseg::scenarios
