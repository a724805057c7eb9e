#include "fbmseg/sim.hpp"

#include "fbmseg/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <random>
#include <string>

namespace fbmseg::sim {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0)) {
        throw ParameterError("alpha must lie in (0,2), got " + std::to_string(alpha));
    }
}

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are cached per transform size.
class PlanCache {
public:
    ~PlanCache() {
        for (auto& [n, plan] : plans_) {
            fftw_destroy_plan(plan);
        }
    }

    fftw_plan forward(std::size_t n) {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) {
            return it->second;
        }
        auto* buf = fftw_alloc_complex(n);
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_free(buf);
        plans_.emplace(n, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {}
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* data;
};

// Hosking / Durbin-Levinson recursion: exact sequential sampling from the
// Toeplitz covariance in O(n^2) time and O(n) memory.
std::vector<double> durbin_levinson(double alpha, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> gamma(n);
    for (std::size_t j = 0; j < n; ++j) {
        gamma[j] = fgn_autocovariance(alpha, j);
    }
    std::vector<double> out(n);
    std::vector<double> phi;
    std::vector<double> prev;
    double v = gamma[0];
    out[0] = std::sqrt(v) * normal(rng);
    for (std::size_t t = 1; t < n; ++t) {
        prev = phi;
        double num = gamma[t];
        for (std::size_t j = 1; j < t; ++j) {
            num -= prev[j - 1] * gamma[t - j];
        }
        const double kappa = num / v;
        phi.assign(t, 0.0);
        for (std::size_t j = 1; j < t; ++j) {
            phi[j - 1] = prev[j - 1] - kappa * prev[t - j - 1];
        }
        phi[t - 1] = kappa;
        v *= (1.0 - kappa * kappa);
        if (v <= 0.0) {
            throw NumericError("covariance factorization lost positive definiteness");
        }
        double mean = 0.0;
        for (std::size_t j = 1; j <= t; ++j) {
            mean += phi[j - 1] * out[t - j];
        }
        out[t] = mean + std::sqrt(v) * normal(rng);
    }
    return out;
}

} // namespace

double fgn_autocovariance(double alpha, std::size_t lag) {
    const double j = static_cast<double>(lag);
    return 0.5 * (std::pow(j + 1.0, alpha) - 2.0 * std::pow(j, alpha) + std::pow(std::abs(j - 1.0), alpha));
}

std::vector<double> generate_fgn_cholesky(double alpha, std::size_t n, std::uint64_t seed) {
    check_alpha(alpha);
    if (n == 0) {
        throw ParameterError("fGn length must be >= 1");
    }
    std::mt19937_64 rng(seed);
    return durbin_levinson(alpha, n, rng);
}

std::vector<double> generate_fgn(double alpha, std::size_t n, std::uint64_t seed) {
    check_alpha(alpha);
    if (n == 0) {
        throw ParameterError("fGn length must be >= 1");
    }
    std::mt19937_64 rng(seed);
    if (n == 1) {
        std::normal_distribution<double> normal(0.0, 1.0);
        return {normal(rng)};
    }

    const std::size_t m = n;
    const std::size_t size = 2 * m;
    fftw_plan plan = plan_cache().forward(size);

    FftwBuffer row(size);
    for (std::size_t j = 0; j <= m; ++j) {
        row.data[j][0] = fgn_autocovariance(alpha, j);
        row.data[j][1] = 0.0;
    }
    for (std::size_t j = m + 1; j < size; ++j) {
        row.data[j][0] = row.data[size - j][0];
        row.data[j][1] = 0.0;
    }
    fftw_execute_dft(plan, row.data, row.data);

    std::vector<double> eig(size);
    double max_eig = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
        eig[k] = row.data[k][0];
        max_eig = std::max(max_eig, eig[k]);
    }
    const double tol = 1e-10 * max_eig;
    for (double& e : eig) {
        if (e < -tol) {
            return durbin_levinson(alpha, n, rng);
        }
        e = std::max(e, 0.0);
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    FftwBuffer w(size);
    const double nn = static_cast<double>(size);
    w.data[0][0] = std::sqrt(eig[0] / nn) * normal(rng);
    w.data[0][1] = 0.0;
    w.data[m][0] = std::sqrt(eig[m] / nn) * normal(rng);
    w.data[m][1] = 0.0;
    for (std::size_t k = 1; k < m; ++k) {
        const double scale = std::sqrt(eig[k] / (2.0 * nn));
        const double re = normal(rng);
        const double im = normal(rng);
        w.data[k][0] = scale * re;
        w.data[k][1] = scale * im;
        w.data[size - k][0] = scale * re;
        w.data[size - k][1] = -scale * im;
    }
    fftw_execute_dft(plan, w.data, w.data);

    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = w.data[j][0];
    }
    return out;
}

void SwitchingSpec::validate() const {
    if (states.empty()) {
        throw ParameterError("switching spec needs at least one state");
    }
    for (const auto& s : states) {
        check_alpha(s.alpha);
        if (!(s.k > 0.0) || !std::isfinite(s.k)) {
            throw ParameterError("diffusion coefficient must be positive and finite");
        }
    }
    if (!(transition_p >= 0.0 && transition_p < 1.0)) {
        throw ParameterError("transition probability must lie in [0,1)");
    }
    if (length < 1) {
        throw ParameterError("trajectory length must be >= 1");
    }
    if (dims != 2) {
        throw ParameterError("only 2-D trajectories are supported");
    }
    if (initial_state >= static_cast<int>(states.size())) {
        throw ParameterError("initial state index out of range");
    }
    std::size_t prev = 0;
    for (std::size_t cp : fixed_changepoints) {
        if (cp <= prev || cp >= length) {
            throw ParameterError("fixed changepoints must be strictly increasing inside (0, T)");
        }
        prev = cp;
    }
}

Trajectory generate_trajectory(const SwitchingSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const std::size_t n_states = spec.states.size();

    auto pick_other = [&](std::size_t current) {
        if (n_states == 1) {
            return current;
        }
        std::uniform_int_distribution<std::size_t> dist(0, n_states - 2);
        std::size_t next = dist(rng);
        return next >= current ? next + 1 : next;
    };

    std::size_t state = 0;
    if (spec.initial_state >= 0) {
        state = static_cast<std::size_t>(spec.initial_state);
    } else {
        std::uniform_int_distribution<std::size_t> dist(0, n_states - 1);
        state = dist(rng);
    }

    std::vector<TruthSegment> truth{{0, spec.states[state]}};
    std::vector<std::size_t> state_index{state};
    if (!spec.fixed_changepoints.empty()) {
        for (std::size_t cp : spec.fixed_changepoints) {
            state = pick_other(state);
            truth.push_back({cp, spec.states[state]});
            state_index.push_back(state);
        }
    } else if (spec.transition_p > 0.0 && n_states > 1) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t frame = 1; frame < spec.length; ++frame) {
            if (unif(rng) < spec.transition_p) {
                state = pick_other(state);
                truth.push_back({frame, spec.states[state]});
                state_index.push_back(state);
            }
        }
    }

    Trajectory traj;
    traj.id = spec.id;
    traj.coords.assign(spec.length, Point2{});
    // Increment t (t >= 1) moves frame t-1 to frame t and follows the state
    // active at frame t.
    for (std::size_t s = 0; s < truth.size(); ++s) {
        const std::size_t first = std::max<std::size_t>(truth[s].start, 1);
        const std::size_t last = s + 1 < truth.size() ? truth[s + 1].start : spec.length;
        const std::uint64_t seed_x = rng();
        const std::uint64_t seed_y = rng();
        if (last <= first) {
            continue;
        }
        const std::size_t n = last - first;
        const DiffusiveState& st = truth[s].state;
        const double scale = std::sqrt(2.0 * st.k);
        const auto dx = generate_fgn(st.alpha, n, seed_x);
        const auto dy = generate_fgn(st.alpha, n, seed_y);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t t = first + j;
            traj.coords[t].x = traj.coords[t - 1].x + scale * dx[j];
            traj.coords[t].y = traj.coords[t - 1].y + scale * dy[j];
        }
    }
    traj.truth = std::move(truth);
    return traj;
}

std::vector<double> time_averaged_msd(std::span<const Point2> coords, std::size_t max_lag) {
    if (max_lag >= coords.size()) {
        throw ParameterError("max_lag must be smaller than the trajectory length");
    }
    std::vector<double> msd(max_lag + 1, 0.0);
    const std::size_t n = coords.size();
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) {
            const double dx = coords[t + lag].x - coords[t].x;
            const double dy = coords[t + lag].y - coords[t].y;
            acc += dx * dx + dy * dy;
        }
        msd[lag] = acc / static_cast<double>(n - lag);
    }
    return msd;
}

std::pair<double, double> fit_loglog(std::span<const double> msd, std::size_t first_lag, std::size_t last_lag) {
    if (first_lag == 0 || last_lag <= first_lag || last_lag >= msd.size()) {
        throw ParameterError("invalid lag range for log-log fit");
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double count = 0.0;
    for (std::size_t lag = first_lag; lag <= last_lag; ++lag) {
        if (!(msd[lag] > 0.0)) {
            throw NumericError("non-positive MSD value in log-log fit");
        }
        const double x = std::log(static_cast<double>(lag));
        const double y = std::log(msd[lag]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / count;
    return {slope, intercept};
}

} // namespace fbmseg::sim
