// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (capped at 100).

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "fbmseg/bundle_io.hpp"
#include "fbmseg/config.hpp"
#include "fbmseg/dataset_io.hpp"
#include "fbmseg/estimators.hpp"
#include "fbmseg/metrics.hpp"
#include "fbmseg/scenarios.hpp"
#include "fbmseg/sim.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace fbmseg;

namespace {

// Tolerances and sizes, pinned.
constexpr double kSeLimit = 3.0;
constexpr double kLag1Alpha05 = -0.2929;
constexpr double kLag1Tol = 0.02;
constexpr double kMsdSlopeTol = 0.05;
constexpr double kMsd1RelTol = 0.05;
constexpr double kAlphaMae128Max = 0.2;
constexpr double kMaleRatioMin = 3.0;
constexpr double kAlphaPeak = 0.4;
constexpr double kKPeak = 0.8;
constexpr double kPeakTol = 0.15;
constexpr std::size_t kMaxInversions = 1;
constexpr double kInversionTol = 0.01;
constexpr double kLengthJsc128Min = 0.6;
constexpr double kNullCleanMin = 0.8;
constexpr double kOracleTol = 1e-12;
constexpr double kDetectBudgetSeconds = 30 * 60;
constexpr double kGridBudgetSeconds = 60 * 60;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

Trajectory single_state(double alpha, double k, std::size_t length, std::uint64_t seed) {
    sim::SwitchingSpec s;
    s.states = {{alpha, k}};
    s.length = length;
    s.seed = seed;
    return sim::generate_trajectory(s);
}

pipeline::PipelineConfig harness_config(std::size_t threads) {
    config::DetectSettings s;
    s.pipeline.auto_min_len = true;
    s.pipeline.threads = threads;
    return s.pipeline;
}

void progress_line(const scenarios::CellResult& r) {
    std::cerr << "  " << r.cell.label << ": JSC " << fmt(r.report.jsc, 3) << ", k=" << r.mixture_k << " ("
              << fmt(r.seconds, 3) << " s)\n";
}

// ------------------------------------------------------------------ 1

Outcome fgn_autocovariance() {
    const std::vector<double> alphas{0.25, 0.5, 1.0, 1.5, 1.75};
    constexpr std::size_t reps = 1000, n = 100, max_lag = 5;
    bool ok = true;
    double worst = 0.0, lag1 = 0.0;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::vector<std::vector<double>> est(max_lag + 1, std::vector<double>(reps));
        for (std::size_t r = 0; r < reps; ++r) {
            const auto x = sim::generate_fgn(alphas[ai], n, scenarios::derive_seed(101, ai, r));
            for (std::size_t lag = 0; lag <= max_lag; ++lag) {
                double s = 0.0;
                for (std::size_t i = 0; i + lag < n; ++i) {
                    s += x[i] * x[i + lag];
                }
                est[lag][r] = s / static_cast<double>(n - lag);
            }
        }
        for (std::size_t lag = 0; lag <= max_lag; ++lag) {
            const auto& e = est[lag];
            const double mean = std::accumulate(e.begin(), e.end(), 0.0) / reps;
            double var = 0.0;
            for (double v : e) var += (v - mean) * (v - mean);
            const double se = std::sqrt(var / (reps - 1) / reps);
            const double z = std::abs(mean - sim::fgn_autocovariance(alphas[ai], lag)) / se;
            worst = std::max(worst, z);
            ok = ok && z <= kSeLimit;
            if (alphas[ai] == 0.5 && lag == 1) {
                lag1 = mean;
            }
        }
    }
    const bool lag1_ok = std::abs(lag1 - kLag1Alpha05) <= kLag1Tol;
    return {ok && lag1_ok, "max |z| " + fmt(worst, 3) + " (limit 3), lag-1 at alpha=0.5 " + fmt(lag1) +
                               " (target -0.2929 +- 0.02)"};
}

// ------------------------------------------------------------------ 2

Outcome msd_law() {
    constexpr std::size_t n = 10000, length = 100;
    constexpr double k = 1.0;
    bool ok = true;
    std::string detail;
    std::size_t ai = 0;
    for (double alpha : {0.4, 1.0, 1.6}) {
        std::vector<double> msd(length, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = single_state(alpha, k, length, scenarios::derive_seed(202, ai, i));
            for (std::size_t lag = 1; lag < length; ++lag) {
                const double dx = t.coords[lag].x - t.coords[0].x;
                const double dy = t.coords[lag].y - t.coords[0].y;
                msd[lag] += dx * dx + dy * dy;
            }
        }
        for (auto& m : msd) m /= n;
        const auto [slope, intercept] = sim::fit_loglog(msd, 1, length - 1);
        const double rel = std::abs(msd[1] - 4.0 * k) / (4.0 * k);
        ok = ok && std::abs(slope - alpha) <= kMsdSlopeTol && rel <= kMsd1RelTol;
        detail += "alpha " + fmt(alpha, 2) + ": slope " + fmt(slope) + ", MSD(1) " + fmt(msd[1]) + "; ";
        ++ai;
    }
    return {ok, detail + "tol +-0.05 slope, 5% MSD(1)"};
}

// ------------------------------------------------------------------ 3, 4

double log_uniform_k(std::mt19937_64& rng) {
    return std::exp2(std::uniform_real_distribution<double>(-4.0, 4.0)(rng));
}

Outcome estimator_trend(const estimators::RegressorBundle& bundle) {
    const std::vector<double> alphas{0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8};
    const std::vector<std::size_t> lengths{8, 16, 32, 64, 128};
    constexpr std::size_t per_cell = 300;
    std::map<std::size_t, std::vector<double>> mae_net, mae_tamsd;
    std::mt19937_64 rng(303);
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            std::vector<double> p_net(per_cell), p_tamsd(per_cell), truth(per_cell, alphas[ai]);
            for (std::size_t i = 0; i < per_cell; ++i) {
                const auto t = single_state(alphas[ai], log_uniform_k(rng), lengths[li],
                                            scenarios::derive_seed(303, li * 100 + ai, i));
                p_net[i] = estimators::estimate_alpha(bundle, t.coords);
                p_tamsd[i] = estimators::tamsd_alpha(t.coords);
            }
            mae_net[lengths[li]].push_back(metrics::mae(p_net, truth));
            mae_tamsd[lengths[li]].push_back(metrics::mae(p_tamsd, truth));
        }
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    bool trend = true;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        trend = trend && mae_net[128][ai] < mae_net[8][ai];
    }
    const double mae128 = mean(mae_net[128]);
    bool beats = true;
    std::string detail = "MAE net/TAMSD by T:";
    for (auto T : lengths) {
        detail += " " + std::to_string(T) + "=" + fmt(mean(mae_net[T]), 3) + "/" + fmt(mean(mae_tamsd[T]), 3);
        if (T <= 32) {
            beats = beats && mean(mae_net[T]) < mean(mae_tamsd[T]);
        }
    }
    detail += "; per-bin T=128<T=8 " + std::string(trend ? "yes" : "no");
    detail += "; mean MAE(128) " + fmt(mae128, 3) + " (max 0.2)";
    detail += "; beats TAMSD for T<=32 " + std::string(beats ? "yes" : "no");
    std::cerr << "  per-bin MAE at T=8 / T=128:";
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::cerr << " " << fmt(alphas[ai], 2) << ":" << fmt(mae_net[8][ai], 3) << "/" << fmt(mae_net[128][ai], 3);
    }
    std::cerr << "\n";
    return {trend && mae128 <= kAlphaMae128Max && beats, detail};
}

Outcome k_degradation(const estimators::RegressorBundle& bundle) {
    constexpr std::size_t n = 1000, length = 128;
    std::map<double, double> male;
    for (double alpha : {1.0, 1.99}) {
        std::mt19937_64 rng(404);
        std::vector<double> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = log_uniform_k(rng);
            const auto t = single_state(alpha, truth[i], length, scenarios::derive_seed(404, i));
            pred[i] = std::exp(estimators::estimate_logk(bundle, t.coords));
        }
        male[alpha] = metrics::male(pred, truth);
    }
    const double ratio = male[1.99] / male[1.0];
    return {ratio >= kMaleRatioMin, "MALE alpha=1.0 " + fmt(male[1.0], 3) + ", alpha=1.99 " + fmt(male[1.99], 3) +
                                        ", ratio " + fmt(ratio, 3) + " (min 3)"};
}

// ------------------------------------------------------------------ 5, 6

Outcome grid_reproduction(const estimators::RegressorBundle& bundle, std::size_t threads, const fs::path& work) {
    constexpr std::size_t n = 1000, length = 200;
    constexpr double p = 0.01;
    const auto cfg = harness_config(threads);
    bool ok = true;
    std::string detail;
    for (const auto& [name, cells, target] :
         {std::tuple{"alpha", scenarios::alpha_grid(), kAlphaPeak}, std::tuple{"K", scenarios::k_grid(), kKPeak}}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto results = scenarios::run_grid(cells, n, length, p, 505, bundle, cfg, progress_line);
        const double secs = seconds_since(t0);
        {
            std::ostringstream os;
            scenarios::write_curve_csv(os, results);
            io::write_text_file((work / (std::string("curve_") + name + ".csv")).string(), os.str());
        }
        double peak = 0.0;
        for (const auto& r : results) peak = std::max(peak, r.report.jsc);
        std::vector<double> curve;
        for (const auto& pt : scenarios::jsc_by_contrast(results)) curve.push_back(pt.jsc);
        const auto inversions = scenarios::count_decreases(curve, kInversionTol);
        const bool grid_ok = std::abs(peak - target) <= kPeakTol && inversions <= kMaxInversions &&
                             secs <= kGridBudgetSeconds;
        ok = ok && grid_ok;
        detail += std::string(name) + " grid: peak " + fmt(peak, 3) + " (target " + fmt(target, 2) + " +- 0.15), " +
                  std::to_string(inversions) + " inversion(s), " + fmt(secs, 4) + " s; ";
    }
    return {ok, detail};
}

Outcome length_study(const estimators::RegressorBundle& bundle, std::size_t threads, const fs::path& work) {
    const std::vector<std::size_t> lengths{8, 16, 32, 64, 128};
    const auto results = scenarios::run_length_study(scenarios::length_scenario(), lengths, 500, 500, 606, bundle,
                                                     harness_config(threads), progress_line);
    {
        std::ostringstream os;
        scenarios::write_curve_csv(os, results);
        io::write_text_file((work / "curve_length.csv").string(), os.str());
    }
    std::vector<double> jscs;
    std::size_t null_n = 0, null_ok = 0;
    std::string detail = "JSC by T:";
    for (std::size_t i = 0; i < results.size(); ++i) {
        jscs.push_back(results[i].report.jsc);
        null_n += results[i].report.null_trajectories;
        null_ok += results[i].report.null_correct;
        detail += " " + std::to_string(lengths[i]) + "=" + fmt(jscs.back(), 3);
    }
    const auto inversions = scenarios::count_decreases(jscs, kInversionTol);
    const double clean = null_n ? static_cast<double>(null_ok) / null_n : 0.0;
    detail += "; " + std::to_string(inversions) + " inversion(s); null trajectories clean " + fmt(clean, 3) +
              " (min 0.8); JSC(128) min 0.6";
    return {inversions <= kMaxInversions && jscs.back() >= kLengthJsc128Min && clean >= kNullCleanMin, detail};
}

// ------------------------------------------------------------------ 7

Outcome metric_oracle() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    std::size_t mismatches = 0;
    double worst = 0.0;
    constexpr std::size_t instances = 1000;
    for (std::size_t trial = 0; trial < instances; ++trial) {
        const std::size_t T = 30 + rng() % 170;
        std::set<std::size_t> ps, ts;
        const std::size_t np = rng() % 7, nt = rng() % 7;
        while (ps.size() < np) ps.insert(1 + rng() % (T - 1));
        while (ts.size() < nt) ts.insert(1 + rng() % (T - 1));
        const std::vector<std::size_t> p(ps.begin(), ps.end()), t(ts.begin(), ts.end());
        const auto r = metrics::pair_changepoints(p, t, 10);
        oracle::MatchScore got;
        for (auto [a, b] : r.pairs) {
            const long long d = static_cast<long long>(a) - static_cast<long long>(b);
            got.count += 1;
            got.sq += d * d;
            got.abs += std::llabs(d);
        }
        const auto best = oracle::best_matching(std::vector<long long>(p.begin(), p.end()),
                                                std::vector<long long>(t.begin(), t.end()), 10);
        const double jsc_ref = oracle::jsc(static_cast<double>(best.count), static_cast<double>(np - best.count),
                                           static_cast<double>(nt - best.count));
        if (!(got == best) || r.fp() != np - best.count || r.fn() != nt - best.count ||
            std::abs(metrics::jsc(r) - jsc_ref) > kOracleTol) {
            ++mismatches;
        }
        std::vector<double> pv(1 + rng() % 20), tv(pv.size());
        for (std::size_t i = 0; i < pv.size(); ++i) {
            pv[i] = u(rng);
            tv[i] = u(rng);
        }
        for (double d : {metrics::mae(pv, tv) - oracle::mae(pv, tv), metrics::rmse(pv, tv) - oracle::rmse(pv, tv),
                         metrics::male(pv, tv) - oracle::male(pv, tv), metrics::msle(pv, tv) - oracle::msle(pv, tv)}) {
            worst = std::max(worst, std::abs(d));
        }
    }
    return {mismatches == 0 && worst <= kOracleTol, std::to_string(mismatches) + " pairing/JSC mismatches in " +
                                                        std::to_string(instances) + " instances, max point-metric " +
                                                        "deviation " + fmt(worst, 3) + " (limit 1e-12)"};
}

// ------------------------------------------------------------------ 8

int run(const std::string& cmd) {
    std::cerr << "  $ " << cmd << "\n";
    return std::system(cmd.c_str());
}

std::string shell_quote(const fs::path& p) { return "'" + p.string() + "'"; }

Outcome detect_determinism(const std::string& cli, const std::string& model, const fs::path& work) {
    const auto dir = work / "determinism";
    fs::create_directories(dir);
    const std::string bin = shell_quote(cli);
    if (run(bin + " simulate --out " + shell_quote(dir / "data") +
            " --state 0.5,0.1 --state 1.0,1.0 -n 1000 --length 200 --transition-p 0.01 --seed 808") != 0) {
        return {false, "simulate failed"};
    }
    double secs = 0.0;
    for (const char* out : {"run1", "run2"}) {
        const auto t0 = std::chrono::steady_clock::now();
        if (run(bin + " detect --coords " + shell_quote(dir / "data" / "coords.csv") + " --model " + shell_quote(model) +
                " --out " + shell_quote(dir / out) + " --auto-min-len --seed 7") != 0) {
            return {false, std::string("detect failed in ") + out};
        }
        secs = std::max(secs, seconds_since(t0));
    }
    bool same = true;
    for (const char* f : {"predictions.json", "predictions.csv", "mixture.json"}) {
        same = same && io::read_text_file((dir / "run1" / f).string()) == io::read_text_file((dir / "run2" / f).string());
    }
    return {same && secs <= kDetectBudgetSeconds,
            std::string("outputs ") + (same ? "bit-identical" : "DIFFER") + "; slowest run " + fmt(secs, 4) + " s on " +
                std::to_string(pipeline::PipelineConfig{}.effective_threads()) + " thread(s) (budget 1800 s)"};
}

// ------------------------------------------------------------------ 9

struct CaseCounter : doctest::IReporter {
    static inline std::size_t started = 0;
    explicit CaseCounter(const doctest::ContextOptions&) {}
    void report_query(const doctest::QueryData&) override {}
    void test_run_start() override {}
    void test_run_end(const doctest::TestRunStats&) override {}
    void test_case_start(const doctest::TestCaseData&) override { ++started; }
    void test_case_reenter(const doctest::TestCaseData&) override {}
    void test_case_end(const doctest::CurrentTestCaseStats&) override {}
    void test_case_exception(const doctest::TestCaseException&) override {}
    void subcase_start(const doctest::SubcaseSignature&) override {}
    void subcase_end() override {}
    void log_assert(const doctest::AssertData&) override {}
    void log_message(const doctest::MessageData&) override {}
    void test_case_skipped(const doctest::TestCaseData&) override {}
};
REGISTER_LISTENER("case_counter", 1, CaseCounter);

Outcome property_suites() {
    const std::vector<std::string> cases{"window score",
                                         "aggregate signal properties",
                                         "EM log-likelihood never decreases",
                                         "merge loop properties on random inputs",
                                         "bundle round trip"};
    std::string filter;
    for (const auto& c : cases) {
        filter += (filter.empty() ? "" : ",") + c;
    }
    doctest::Context ctx;
    ctx.setOption("test-case", filter.c_str());
    ctx.setOption("minimal", true);
    CaseCounter::started = 0;
    const int rc = ctx.run();
    const bool all_ran = CaseCounter::started == cases.size();
    return {rc == 0 && all_ran, std::to_string(CaseCounter::started) + "/" + std::to_string(cases.size()) +
                                    " suites ran (signal translation/scale/half-swap, EM monotonicity, merge bound and "
                                    "partition, model round trip), " +
                                    (rc == 0 ? "all passed" : "failures reported above")};
}

} // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
    CLI::App app{"Acceptance criteria"};
    std::string model, cli, work = "acceptance_work";
    std::vector<int> only;
    std::size_t threads = 0;
    app.add_option("--model", model, "Trained model bundle");
    app.add_option("--cli", cli, "Path of the fbmseg executable");
    app.add_option("--work", work, "Scratch directory for outputs");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    app.add_option("--threads", threads, "Worker threads (default: all cores)");
    CLI11_PARSE(app, argc, argv);

    auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
    fs::create_directories(work);

    std::optional<estimators::RegressorBundle> bundle;
    auto need_bundle = [&]() -> const estimators::RegressorBundle& {
        if (!bundle) {
            bundle = bundle_io::load_bundle(model.empty() ? config::default_model_path() : model);
        }
        return *bundle;
    };

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "fGn autocovariance", fgn_autocovariance},
        {2, "MSD law", msd_law},
        {3, "alpha estimator trend", [&] { return estimator_trend(need_bundle()); }},
        {4, "K estimator degradation near alpha=2", [&] { return k_degradation(need_bundle()); }},
        {5, "scenario grids", [&] { return grid_reproduction(need_bundle(), threads, work); }},
        {6, "length study", [&] { return length_study(need_bundle(), threads, work); }},
        {7, "metric oracle equivalence", metric_oracle},
        {8, "detect determinism and throughput",
         [&] { return detect_determinism(cli, model.empty() ? config::default_model_path() : model, work); }},
        {9, "property suites", property_suites},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!wanted(c.id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << fmt(seconds_since(t0), 4) << " s)" << std::endl;
    }
    return std::min(failed, 100);
}
