// fbmseg command-line front end: simulate, train, detect, evaluate, benchmark.

#include "fbmseg/bundle_io.hpp"
#include "fbmseg/config.hpp"
#include "fbmseg/dataset_io.hpp"
#include "fbmseg/error.hpp"
#include "fbmseg/estimators.hpp"
#include "fbmseg/pipeline.hpp"
#include "fbmseg/scenarios.hpp"
#include "fbmseg/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace fbmseg;

namespace {

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create directory '" + dir + "': " + ec.message());
    }
}

template <typename Fn>
void write_stream(const std::string& path, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    io::write_text_file(path, os.str());
}

std::vector<DiffusiveState> parse_states(const std::vector<std::string>& specs) {
    std::vector<DiffusiveState> out;
    for (const auto& s : specs) {
        const auto comma = s.find(',');
        if (comma == std::string::npos) {
            throw ParameterError("state '" + s + "' must be ALPHA,K");
        }
        try {
            out.push_back({std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))});
        } catch (const std::exception&) {
            throw ParameterError("state '" + s + "' must be ALPHA,K");
        }
    }
    return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string out_dir;
    std::size_t n = 100;
    std::size_t length = 200;
    double transition_p = 0.01;
    std::uint64_t seed = 1;
    std::vector<std::string> states;
    std::string grid;
    std::size_t cell = 0;
};

int cmd_simulate(const SimulateArgs& a) {
    scenarios::Cell cell;
    if (!a.grid.empty()) {
        const auto cells = a.grid == "alpha" ? scenarios::alpha_grid()
                           : a.grid == "k"   ? scenarios::k_grid()
                                             : throw ParameterError("grid must be 'alpha' or 'k'");
        if (a.cell >= cells.size()) {
            throw ParameterError("cell index out of range for grid " + a.grid);
        }
        cell = cells[a.cell];
    } else {
        cell.states = parse_states(a.states);
        if (cell.states.empty()) {
            throw ParameterError("give --state ALPHA,K (repeatable) or --grid/--cell");
        }
    }
    const auto trajs = scenarios::simulate_cell(cell, a.n, a.length, a.transition_p, a.seed);
    ensure_dir(a.out_dir);
    const auto coords = join(a.out_dir, "coords.csv");
    const auto truth = join(a.out_dir, "truth.json");
    write_stream(coords, [&](std::ostream& os) { io::write_coords_csv(os, trajs); });
    io::write_json_file(truth, io::truth_to_json(trajs));

    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : cell.states) {
        states.push_back({{"alpha", s.alpha}, {"k", s.k}});
    }
    const nlohmann::json cfg = {{"n", a.n},         {"length", a.length}, {"transition_p", a.transition_p},
                                {"seed", a.seed},   {"states", states},   {"grid", a.grid},
                                {"cell", a.cell}};
    io::write_json_file(join(a.out_dir, "manifest.json"), config::make_manifest("simulate", cfg, {}, {coords, truth}));
    std::cerr << "wrote " << trajs.size() << " trajectories to " << a.out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string out;
    std::string config_path;
    std::size_t samples = 0;
    std::size_t alpha_epochs = 0;
    std::size_t k_epochs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_train(const TrainArgs& a) {
    estimators::TrainConfig cfg;
    if (!a.config_path.empty()) {
        cfg = estimators::TrainConfig::from_json(io::read_json_file(a.config_path));
    }
    if (a.samples) cfg.samples = a.samples;
    if (a.alpha_epochs) cfg.alpha_epochs = a.alpha_epochs;
    if (a.k_epochs) cfg.k_epochs = a.k_epochs;
    if (a.seed_set) cfg.seed = a.seed;
    cfg.validate();

    const auto t0 = std::chrono::steady_clock::now();
    estimators::TrainingLog log;
    const auto bundle = estimators::train_models(cfg, &log, [&](const std::string& msg) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "[" << static_cast<long>(s) << "s] " << msg << "\n";
    });
    const fs::path out = a.out.empty() ? fs::path(config::default_model_path()) : fs::path(a.out);
    if (out.has_parent_path()) {
        ensure_dir(out.parent_path().string());
    }
    bundle_io::save_bundle(bundle, out.string());
    io::write_json_file(out.string() + ".manifest.json",
                        config::make_manifest("train", cfg.to_json(), {}, {out.string()}));
    std::cerr << "saved model to " << out.string() << "\n";
    return 0;
}

// ------------------------------------------------------------------ detect

struct DetectOverrides {
    std::string config_path;
    std::vector<std::size_t> windows;
    double lambda = -1;
    std::size_t extension = 0;
    int k = 0;
    bool k_set = false;
    std::size_t min_len = 0;
    bool inclusive = false;
    bool auto_min_len = false;
    std::vector<std::string> significance;
    std::string merge_rule;
    bool no_error_cov = false;
    std::size_t threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

config::DetectSettings detect_settings(const DetectOverrides& o) {
    config::DetectSettings s;
    if (!o.config_path.empty()) {
        s = config::DetectSettings::from_json(io::read_json_file(o.config_path));
    }
    auto& p = s.pipeline;
    if (!o.windows.empty()) p.signal.window_sizes = o.windows;
    if (o.lambda >= 0) p.signal.lambda = o.lambda;
    if (o.extension) p.signal.extension = o.extension;
    if (o.k_set) p.gmm.k_request = o.k;
    if (o.min_len) p.gmm.min_len = o.min_len;
    if (o.inclusive) p.gmm.inclusive = true;
    if (o.auto_min_len) p.auto_min_len = true;
    if (!o.merge_rule.empty()) p.rule = merge::rule_kind_from_string(o.merge_rule);
    if (o.no_error_cov) p.error_cov = false;
    if (o.threads) p.threads = o.threads;
    if (o.seed_set) p.gmm.seed = o.seed;
    for (const auto& kv : o.significance) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ParameterError("significance override '" + kv + "' must be LENGTH=LEVEL");
        }
        try {
            p.significance.set(std::stoul(kv.substr(0, eq)), std::stod(kv.substr(eq + 1)));
        } catch (const std::invalid_argument&) {
            throw ParameterError("significance override '" + kv + "' must be LENGTH=LEVEL");
        }
    }
    s.validate();
    return s;
}

void add_detect_options(CLI::App* app, DetectOverrides& o) {
    app->add_option("--config", o.config_path, "JSON file with detection settings");
    app->add_option("--windows", o.windows, "Even window sizes (default 20,22,...,40)")->delimiter(',');
    app->add_option("--lambda", o.lambda, "Candidate threshold on the normalized signal (default 0.15)");
    app->add_option("--extension", o.extension, "Reflection length (default max window / 2)");
    app->add_option_function<int>(
        "--k", [&o](int k) { o.k = k; o.k_set = true; }, "Number of mixture components, -1 selects by BIC");
    app->add_option("--min-len", o.min_len, "Sub-trajectories longer than this enter the clustering (default 16)");
    app->add_flag("--min-len-inclusive", o.inclusive, "Use length >= min-len instead of >");
    app->add_flag("--auto-min-len", o.auto_min_len, "Halve min-len (down to 4) when too few points remain");
    app->add_option("--significance", o.significance, "Override a significance level, LENGTH=LEVEL (repeatable)");
    app->add_option("--merge-rule", o.merge_rule, "Merge test: membership (default) or posterior");
    app->add_flag("--no-error-cov", o.no_error_cov, "Ignore the model's estimate error in the membership test");
    app->add_option("--threads", o.threads, "Worker threads (default: all cores)");
    app->add_option_function<std::uint64_t>(
        "--seed", [&o](std::uint64_t s) { o.seed = s; o.seed_set = true; }, "Seed of the mixture restarts");
}

estimators::RegressorBundle load_model(const std::string& path) {
    const std::string p = path.empty() ? config::default_model_path() : path;
    if (!fs::exists(p)) {
        throw DataError("model file '" + p + "' not found (set --model or " + std::string(config::kModelDirEnv) + ")");
    }
    return bundle_io::load_bundle(p);
}

struct DetectArgs {
    std::string coords;
    std::string model;
    std::string out_dir;
    bool emit_signal = false;
    bool emit_clusters = false;
    DetectOverrides overrides;
};

int cmd_detect(const DetectArgs& a) {
    const auto settings = detect_settings(a.overrides);
    auto pcfg = settings.pipeline;
    pcfg.keep_signals = a.emit_signal;
    const auto bundle = load_model(a.model);
    std::ifstream in(a.coords);
    if (!in) {
        throw DataError("cannot open '" + a.coords + "'");
    }
    const auto trajs = io::read_coords_csv(in);
    const auto res = pipeline::run_pipeline(trajs, bundle, pcfg);

    ensure_dir(a.out_dir);
    std::vector<std::string> outputs;
    const auto pred = join(a.out_dir, "predictions.json");
    io::write_json_file(pred, io::predictions_to_json(res.segmentations));
    outputs.push_back(pred);
    const auto flat = join(a.out_dir, "predictions.csv");
    write_stream(flat, [&](std::ostream& os) { io::write_flat_predictions(os, res.segmentations); });
    outputs.push_back(flat);
    const auto mix = join(a.out_dir, "mixture.json");
    auto mix_json = res.model.to_json();
    mix_json["min_len"] = res.min_len_used;
    io::write_json_file(mix, mix_json);
    outputs.push_back(mix);
    if (a.emit_clusters) {
        const auto clusters = join(a.out_dir, "clusters.csv");
        write_stream(clusters, [&](std::ostream& os) { io::write_clusters_csv(os, res.points, res.model); });
        outputs.push_back(clusters);
    }
    if (a.emit_signal) {
        const auto dir = join(a.out_dir, "signals");
        ensure_dir(dir);
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            const auto path = join(dir, "traj_" + std::to_string(trajs[i].id) + ".csv");
            write_stream(path, [&](std::ostream& os) { io::write_signal_csv(os, res.signals[i]); });
        }
    }

    auto cfg = settings.to_json();
    cfg["threads"] = pcfg.effective_threads();
    cfg["model"] = a.model.empty() ? config::default_model_path() : a.model;
    auto manifest = config::make_manifest("detect", cfg, {a.coords, cfg["model"].get<std::string>()}, outputs);
    manifest["model_metadata_hash"] = config::config_hash(bundle.metadata());
    manifest["stats"] = {{"trajectories", trajs.size()},
                         {"candidates_total", [&] {
                              std::size_t n = 0;
                              for (const auto& c : res.candidates) n += c.frames.size();
                              return n;
                          }()},
                         {"merge_iterations", res.totals.iterations},
                         {"rule_merges", res.totals.rule_merges},
                         {"auto_merges", res.totals.auto_merges},
                         {"mixture_k", res.model.k()}};
    io::write_json_file(join(a.out_dir, "manifest.json"), manifest);
    std::cerr << "segmented " << trajs.size() << " trajectories; mixture k=" << res.model.k() << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string pred;
    std::string truth;
    std::string out;
    std::string label = "dataset";
    std::size_t tolerance = 10;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto preds = io::predictions_from_json(io::read_json_file(a.pred));
    const auto truth = io::truth_from_json(io::read_json_file(a.truth));
    metrics::EvalConfig cfg;
    cfg.tolerance = a.tolerance;
    const auto report = metrics::evaluate_dataset(preds, truth, cfg);
    auto j = report.to_json();
    j["tolerance"] = a.tolerance;
    j["label"] = a.label;
    std::cout << j.dump(2) << "\n";
    if (!a.out.empty()) {
        io::write_json_file(a.out, j);
        scenarios::CellResult row;
        row.cell.grid = "dataset";
        row.cell.label = a.label;
        row.trajectories = report.trajectories;
        row.report = report;
        write_stream(a.out + ".csv", [&](std::ostream& os) { scenarios::write_curve_csv(os, {row}); });
    }
    return 0;
}

// --------------------------------------------------------------- benchmark

struct BenchmarkArgs {
    std::string grid;
    std::string model;
    std::string out_dir;
    std::size_t n = 1000;
    std::size_t length = 200;
    double transition_p = 0.01;
    std::uint64_t seed = 1;
    std::vector<std::size_t> lengths{8, 16, 32, 64, 128};
    std::size_t n_switch = 500;
    std::size_t n_null = 500;
    DetectOverrides overrides;
};

int cmd_benchmark(const BenchmarkArgs& a) {
    auto overrides = a.overrides;
    overrides.auto_min_len = true;
    const auto settings = detect_settings(overrides);
    const auto bundle = load_model(a.model);
    auto progress = [](const scenarios::CellResult& r) {
        std::cerr << r.cell.label << ": JSC " << r.report.jsc << " (" << r.seconds << " s)\n";
    };
    std::vector<scenarios::CellResult> results;
    if (a.grid == "alpha" || a.grid == "k") {
        const auto cells = a.grid == "alpha" ? scenarios::alpha_grid() : scenarios::k_grid();
        results = scenarios::run_grid(cells, a.n, a.length, a.transition_p, a.seed, bundle, settings.pipeline, progress);
    } else if (a.grid == "length") {
        results = scenarios::run_length_study(scenarios::length_scenario(), a.lengths, a.n_switch, a.n_null, a.seed,
                                              bundle, settings.pipeline, progress);
    } else {
        throw ParameterError("grid must be 'alpha', 'k' or 'length'");
    }

    ensure_dir(a.out_dir);
    const auto curve = join(a.out_dir, "curve_" + a.grid + ".csv");
    write_stream(curve, [&](std::ostream& os) { scenarios::write_curve_csv(os, results); });

    nlohmann::json summary;
    if (a.grid == "length") {
        std::vector<double> jscs;
        std::size_t null_n = 0, null_ok = 0;
        for (const auto& r : results) {
            jscs.push_back(r.report.jsc);
            null_n += r.report.null_trajectories;
            null_ok += r.report.null_correct;
        }
        summary = {{"jsc_by_T", jscs},
                   {"decreases", scenarios::count_decreases(jscs, 0.01)},
                   {"null_fraction_clean", null_n ? static_cast<double>(null_ok) / null_n : 1.0}};
    } else {
        const auto pts = scenarios::jsc_by_contrast(results);
        std::vector<double> jscs;
        nlohmann::json curve_json = nlohmann::json::array();
        for (const auto& p : pts) {
            jscs.push_back(p.jsc);
            curve_json.push_back({{"contrast", p.contrast}, {"jsc", p.jsc}});
        }
        double peak = 0.0;
        for (const auto& r : results) {
            peak = std::max(peak, r.report.jsc);
        }
        summary = {{"peak_jsc", peak},
                   {"jsc_by_contrast", curve_json},
                   {"decreases", scenarios::count_decreases(jscs, 0.01)}};
    }
    const auto summary_path = join(a.out_dir, "summary_" + a.grid + ".json");
    io::write_json_file(summary_path, summary);
    std::cout << summary.dump(2) << "\n";

    auto cfg = settings.to_json();
    cfg["grid"] = a.grid;
    cfg["n"] = a.n;
    cfg["length"] = a.length;
    cfg["transition_p"] = a.transition_p;
    cfg["benchmark_seed"] = a.seed;
    cfg["lengths"] = a.lengths;
    cfg["n_switch"] = a.n_switch;
    cfg["n_null"] = a.n_null;
    const std::string model = a.model.empty() ? config::default_model_path() : a.model;
    io::write_json_file(join(a.out_dir, "manifest_" + a.grid + ".json"),
                        config::make_manifest("benchmark", cfg, {model}, {curve, summary_path}));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Inference buffers change shape from call to call; keep freed heap
    // memory instead of returning it to the kernel after every segment.
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
    CLI::App app{"Changepoint detection and diffusion-state estimation for 2-D fBm trajectories"};
    app.require_subcommand(1);
    app.set_version_flag("--version", config::version());

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "Simulate Markov-switching fBm trajectories");
    sim->add_option("--out", sim_args.out_dir, "Output directory")->required();
    sim->add_option("-n,--trajectories", sim_args.n, "Number of trajectories");
    sim->add_option("--length", sim_args.length, "Frames per trajectory");
    sim->add_option("--transition-p", sim_args.transition_p, "Per-frame switching probability");
    sim->add_option("--seed", sim_args.seed, "Random seed");
    sim->add_option("--state", sim_args.states, "Diffusive state ALPHA,K (repeatable)");
    sim->add_option("--grid", sim_args.grid, "Take the states from a benchmark grid: alpha or k");
    sim->add_option("--cell", sim_args.cell, "Cell index within --grid");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train the alpha and K regressors on simulated data");
    train->add_option("--out", train_args.out, "Model file (default: $FBMSEG_MODEL_DIR/model.fbm)");
    train->add_option("--config", train_args.config_path, "JSON training configuration");
    train->add_option("--samples", train_args.samples, "Training samples per model (default 100000)");
    train->add_option("--alpha-epochs", train_args.alpha_epochs, "Epochs for the alpha regressor");
    train->add_option("--k-epochs", train_args.k_epochs, "Epochs for the K regressor");
    train->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { train_args.seed = s; train_args.seed_set = true; }, "Random seed");

    DetectArgs detect_args;
    auto* detect = app.add_subcommand("detect", "Segment trajectories and estimate per-segment alpha and K");
    detect->add_option("--coords", detect_args.coords, "Coordinate CSV (traj_idx,frame,x,y)")->required();
    detect->add_option("--model", detect_args.model, "Model file (default: $FBMSEG_MODEL_DIR/model.fbm)");
    detect->add_option("--out", detect_args.out_dir, "Output directory")->required();
    detect->add_flag("--emit-signal", detect_args.emit_signal, "Write per-trajectory signal CSVs");
    detect->add_flag("--emit-clusters", detect_args.emit_clusters, "Write the clustering points CSV");
    add_detect_options(detect, detect_args.overrides);

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
    evaluate->add_option("--pred", eval_args.pred, "predictions.json from detect")->required();
    evaluate->add_option("--truth", eval_args.truth, "truth.json from simulate")->required();
    evaluate->add_option("--out", eval_args.out, "Report JSON path (a .csv row is written next to it)");
    evaluate->add_option("--label", eval_args.label, "Scenario label for the CSV row");
    evaluate->add_option("--tolerance", eval_args.tolerance, "Pairing tolerance in frames (strict)");

    BenchmarkArgs bench_args;
    auto* bench = app.add_subcommand("benchmark", "Run a scenario grid and write JSC curves");
    bench->add_option("--grid", bench_args.grid, "alpha, k or length")->required();
    bench->add_option("--model", bench_args.model, "Model file (default: $FBMSEG_MODEL_DIR/model.fbm)");
    bench->add_option("--out", bench_args.out_dir, "Output directory")->required();
    bench->add_option("-n,--trajectories", bench_args.n, "Trajectories per grid cell");
    bench->add_option("--length", bench_args.length, "Frames per trajectory (alpha/k grids)");
    bench->add_option("--transition-p", bench_args.transition_p, "Switching probability (alpha/k grids)");
    bench->add_option("--benchmark-seed", bench_args.seed, "Simulation seed");
    bench->add_option("--lengths", bench_args.lengths, "Half lengths T of the length study")->delimiter(',');
    bench->add_option("--n-switch", bench_args.n_switch, "Length study: trajectories with a changepoint");
    bench->add_option("--n-null", bench_args.n_null, "Length study: changepoint-free trajectories");
    add_detect_options(bench, bench_args.overrides);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::Config);
    }

    try {
        if (*sim) return cmd_simulate(sim_args);
        if (*train) return cmd_train(train_args);
        if (*detect) return cmd_detect(detect_args);
        if (*evaluate) return cmd_evaluate(eval_args);
        if (*bench) return cmd_benchmark(bench_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Data);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
