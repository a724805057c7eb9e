#include "fbmseg/estimators.hpp"

#include "fbmseg/error.hpp"
#include "fbmseg/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <numeric>
#include <random>
#include <sstream>

namespace fbmseg::estimators {

namespace {

constexpr std::size_t kMaxInferenceBatch = 256;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Packs windows column-wise: column 2w is the x-dimension triple of window w,
// column 2w+1 the y-dimension triple.
nn::Sequence<float> pack_windows(const std::vector<features::AlphaFeatures>& windows, std::size_t first,
                                 std::size_t count) {
    const std::size_t len = windows[first].length();
    nn::Sequence<float> seq(len, nn::Mat<float>(3, static_cast<Eigen::Index>(2 * count)));
    for (std::size_t w = 0; w < count; ++w) {
        const auto& f = windows[first + w];
        const auto cx = static_cast<Eigen::Index>(2 * w);
        const auto cy = cx + 1;
        for (std::size_t t = 0; t < len; ++t) {
            auto& m = seq[t];
            m(0, cx) = static_cast<float>(f.a1_x[t]);
            m(1, cx) = static_cast<float>(f.a2[t]);
            m(2, cx) = static_cast<float>(f.a3_x[t]);
            m(0, cy) = static_cast<float>(f.a1_y[t]);
            m(1, cy) = static_cast<float>(f.a2[t]);
            m(2, cy) = static_cast<float>(f.a3_y[t]);
        }
    }
    return seq;
}

// Layers cache activations during forward, so every thread runs its own copy
// of a bundle's network. The copy is kept until another bundle is used.
template <typename Net>
Net& thread_copy(const Net& net, std::uint64_t id) {
    thread_local std::uint64_t cached_id = 0;
    thread_local std::optional<Net> cached;
    if (!cached || cached_id != id) {
        cached.emplace(net);
        cached_id = id;
    }
    return *cached;
}

double clamp_alpha(double a) {
    return std::clamp(a, kAlphaMin, kAlphaMax);
}

} // namespace

void TrainConfig::validate() const {
    if (samples < 10000) {
        throw ParameterError("training needs at least 10^4 samples");
    }
    if (batch == 0 || alpha_epochs == 0 || k_epochs == 0) {
        throw ParameterError("batch size and epoch counts must be positive");
    }
    if (!(log2k_min < log2k_max)) {
        throw ParameterError("log2 K range is empty");
    }
    if (k_min_length < 5 || k_max_length < k_min_length) {
        throw ParameterError("K training length range must satisfy 5 <= min <= max");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 0.5)) {
        throw ParameterError("validation fraction must lie in [0, 0.5)");
    }
    if (calibration_samples == 1) {
        throw ParameterError("calibration needs 0 (off) or at least 2 samples per length");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"samples", samples},
            {"alpha_epochs", alpha_epochs},
            {"k_epochs", k_epochs},
            {"batch", batch},
            {"alpha_lr", alpha_lr},
            {"k_lr", k_lr},
            {"clip_norm", clip_norm},
            {"log2k_min", log2k_min},
            {"log2k_max", log2k_max},
            {"k_min_length", k_min_length},
            {"k_max_length", k_max_length},
            {"validation_fraction", validation_fraction},
            {"calibration_samples", calibration_samples},
            {"seed", seed},
            {"alpha_net", alpha_net.to_json()},
            {"k_net", k_net.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.samples = j.value("samples", c.samples);
    c.alpha_epochs = j.value("alpha_epochs", c.alpha_epochs);
    c.k_epochs = j.value("k_epochs", c.k_epochs);
    c.batch = j.value("batch", c.batch);
    c.alpha_lr = j.value("alpha_lr", c.alpha_lr);
    c.k_lr = j.value("k_lr", c.k_lr);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.log2k_min = j.value("log2k_min", c.log2k_min);
    c.log2k_max = j.value("log2k_max", c.log2k_max);
    c.k_min_length = j.value("k_min_length", c.k_min_length);
    c.k_max_length = j.value("k_max_length", c.k_max_length);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.calibration_samples = j.value("calibration_samples", c.calibration_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("alpha_net")) {
        c.alpha_net = models::AlphaNetConfig::from_json(j.at("alpha_net"));
    }
    if (j.contains("k_net")) {
        c.k_net = models::KNetConfig::from_json(j.at("k_net"));
    }
    return c;
}

nlohmann::json TrainingLog::to_json() const {
    return {{"alpha_train", alpha_train}, {"alpha_val", alpha_val}, {"k_train", k_train}, {"k_val", k_val}};
}

TrainingLog TrainingLog::from_json(const nlohmann::json& j) {
    TrainingLog log;
    log.alpha_train = j.value("alpha_train", std::vector<double>{});
    log.alpha_val = j.value("alpha_val", std::vector<double>{});
    log.k_train = j.value("k_train", std::vector<double>{});
    log.k_val = j.value("k_val", std::vector<double>{});
    return log;
}

std::uint64_t RegressorBundle::next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

std::vector<double> RegressorBundle::predict_windows(const std::vector<features::AlphaFeatures>& windows) const {
    std::vector<double> out;
    if (windows.empty()) {
        return out;
    }
    const std::size_t len = windows.front().length();
    if (!features::is_supported_length(len)) {
        throw ParameterError("alpha regressor does not accept length " + std::to_string(len));
    }
    out.reserve(2 * windows.size());
    auto& net = thread_copy(alpha_, id_);
    const std::size_t per_chunk = kMaxInferenceBatch / 2;
    for (std::size_t first = 0; first < windows.size(); first += per_chunk) {
        const std::size_t count = std::min(per_chunk, windows.size() - first);
        const auto pred = net.forward(pack_windows(windows, first, count));
        for (Eigen::Index c = 0; c < pred.cols(); ++c) {
            out.push_back(static_cast<double>(pred(0, c)));
        }
    }
    return out;
}

std::vector<double> RegressorBundle::predict_logk(std::span<const double> k1) const {
    auto& net = thread_copy(k_, id_);
    nn::Mat<float> x(1, static_cast<Eigen::Index>(k1.size()));
    for (std::size_t i = 0; i < k1.size(); ++i) {
        x(0, static_cast<Eigen::Index>(i)) = static_cast<float>(k1[i]);
    }
    const auto pred = net.forward(x);
    std::vector<double> out(k1.size());
    for (std::size_t i = 0; i < k1.size(); ++i) {
        out[i] = static_cast<double>(pred(0, static_cast<Eigen::Index>(i)));
    }
    return out;
}

std::vector<double> alpha_window_predictions(const RegressorBundle& bundle, std::span<const Point2> segment) {
    const auto plan = features::split_lengths(segment.size());
    std::vector<features::AlphaFeatures> windows;
    windows.reserve(plan.offsets.size());
    for (std::size_t off : plan.offsets) {
        windows.push_back(features::features_alpha(segment.subspan(off, plan.window)));
    }
    const auto raw = bundle.predict_windows(windows);
    std::vector<double> per_window(windows.size());
    for (std::size_t w = 0; w < windows.size(); ++w) {
        per_window[w] = 0.5 * (raw[2 * w] + raw[2 * w + 1]);
    }
    return per_window;
}

double estimate_alpha(const RegressorBundle& bundle, std::span<const Point2> segment) {
    const auto preds = alpha_window_predictions(bundle, segment);
    const double mean = std::accumulate(preds.begin(), preds.end(), 0.0) / static_cast<double>(preds.size());
    return clamp_alpha(mean);
}

std::optional<std::array<double, 3>> RegressorBundle::error_cov(std::size_t length) const {
    const auto it = metadata_.find("estimate_error");
    if (it == metadata_.end() || !it->is_array() || it->empty()) {
        return std::nullopt;
    }
    const nlohmann::json* best = &it->front();
    for (const auto& row : *it) {
        if (row.at("length").get<std::size_t>() <= length) {
            best = &row;
        }
    }
    return std::array<double, 3>{best->at("var_alpha").get<double>(), best->at("cov").get<double>(),
                                 best->at("var_log_k").get<double>()};
}

double estimate_logk(const RegressorBundle& bundle, std::span<const Point2> segment) {
    if (segment.size() < features::kSupportedLengths.front()) {
        throw TooShortError("segment shorter than 5 frames");
    }
    const double k1 = features::feature_k(segment);
    return bundle.predict_logk(std::span<const double>(&k1, 1)).front();
}

Estimate estimate(const RegressorBundle& bundle, std::span<const Point2> segment) {
    return {estimate_alpha(bundle, segment), estimate_logk(bundle, segment)};
}

double tamsd_alpha(std::span<const Point2> segment) {
    if (segment.size() < 3) {
        throw TooShortError("TAMSD fit needs at least 3 coordinates");
    }
    const std::size_t max_lag = std::min(segment.size() - 1, std::max<std::size_t>(2, segment.size() / 4));
    const auto msd = sim::time_averaged_msd(segment, max_lag);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        if (!(msd[lag] > 0.0)) {
            throw DegenerateSegmentError("zero MSD in TAMSD fit");
        }
    }
    return clamp_alpha(sim::fit_loglog(msd, 1, max_lag).first);
}

namespace {

struct AlphaExample {
    features::AlphaFeatures features;
    float label = 0.0f;
};

struct KExample {
    float feature = 0.0f;
    float label = 0.0f;
};

sim::SwitchingSpec single_state(double alpha, double k, std::size_t length, std::uint64_t seed) {
    sim::SwitchingSpec spec;
    spec.states = {{alpha, k}};
    spec.length = length;
    spec.seed = seed;
    return spec;
}

void check_finite(double loss, const char* what, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << what << " training diverged at epoch " << epoch << " (loss " << loss << ")";
        throw NumericError(os.str());
    }
}

// One example = one (window, dimension) sequence; groups by length.
using LengthGroups = std::map<std::size_t, std::vector<std::size_t>>;

struct AlphaSequenceRef {
    std::size_t example;
    bool y_dim;
};

nn::Sequence<float> pack_refs(const std::vector<AlphaExample>& examples, std::span<const AlphaSequenceRef> refs,
                              nn::Mat<float>& target) {
    const std::size_t len = examples[refs.front().example].features.length();
    nn::Sequence<float> seq(len, nn::Mat<float>(3, static_cast<Eigen::Index>(refs.size())));
    target.resize(1, static_cast<Eigen::Index>(refs.size()));
    for (std::size_t c = 0; c < refs.size(); ++c) {
        const auto& ex = examples[refs[c].example];
        const auto& f = ex.features;
        const auto& a1 = refs[c].y_dim ? f.a1_y : f.a1_x;
        const auto& a3 = refs[c].y_dim ? f.a3_y : f.a3_x;
        const auto col = static_cast<Eigen::Index>(c);
        for (std::size_t t = 0; t < len; ++t) {
            seq[t](0, col) = static_cast<float>(a1[t]);
            seq[t](1, col) = static_cast<float>(f.a2[t]);
            seq[t](2, col) = static_cast<float>(a3[t]);
        }
        target(0, col) = ex.label;
    }
    return seq;
}

std::vector<std::vector<AlphaSequenceRef>> make_batches(const std::vector<AlphaExample>& examples,
                                                        std::span<const std::size_t> ids, std::size_t batch,
                                                        std::mt19937_64* rng) {
    std::map<std::size_t, std::vector<AlphaSequenceRef>> by_len;
    for (std::size_t id : ids) {
        auto& bucket = by_len[examples[id].features.length()];
        bucket.push_back({id, false});
        bucket.push_back({id, true});
    }
    std::vector<std::vector<AlphaSequenceRef>> batches;
    for (auto& [len, refs] : by_len) {
        if (rng != nullptr) {
            std::shuffle(refs.begin(), refs.end(), *rng);
        }
        for (std::size_t i = 0; i < refs.size(); i += batch) {
            const std::size_t end = std::min(refs.size(), i + batch);
            batches.emplace_back(refs.begin() + static_cast<std::ptrdiff_t>(i),
                                 refs.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    if (rng != nullptr) {
        std::shuffle(batches.begin(), batches.end(), *rng);
    }
    return batches;
}

double lr_at(double base, std::size_t epoch, std::size_t epochs) {
    double lr = base;
    if (epoch >= (epochs * 3) / 5) {
        lr *= 0.5;
    }
    if (epoch >= (epochs * 4) / 5) {
        lr *= 0.5;
    }
    return lr;
}

} // namespace

nlohmann::json calibrate_error(const RegressorBundle& bundle, std::size_t per_length, double log2k_min,
                               double log2k_max, std::uint64_t seed) {
    if (per_length < 2) {
        throw ParameterError("calibration needs at least 2 samples per length");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> alpha_dist(kAlphaMin, kAlphaMax);
    std::uniform_real_distribution<double> log2k_dist(log2k_min, log2k_max);
    nlohmann::json rows = nlohmann::json::array();
    std::size_t index = 0;
    for (const std::size_t len : features::kSupportedLengths) {
        std::vector<double> ea(per_length), ek(per_length);
        for (std::size_t i = 0; i < per_length; ++i) {
            const double alpha = alpha_dist(rng);
            const double log2k = log2k_dist(rng);
            const auto traj =
                sim::generate_trajectory(single_state(alpha, std::exp2(log2k), len, mix_seed(seed, index++)));
            const auto est = estimate(bundle, traj.coords);
            ea[i] = est.alpha - alpha;
            ek[i] = est.log_k - log2k * std::log(2.0);
        }
        const double n = static_cast<double>(per_length);
        const double ma = std::accumulate(ea.begin(), ea.end(), 0.0) / n;
        const double mk = std::accumulate(ek.begin(), ek.end(), 0.0) / n;
        double saa = 0.0, sak = 0.0, skk = 0.0;
        for (std::size_t i = 0; i < per_length; ++i) {
            saa += (ea[i] - ma) * (ea[i] - ma);
            sak += (ea[i] - ma) * (ek[i] - mk);
            skk += (ek[i] - mk) * (ek[i] - mk);
        }
        rows.push_back({{"length", len},
                        {"var_alpha", saa / (n - 1.0)},
                        {"cov", sak / (n - 1.0)},
                        {"var_log_k", skk / (n - 1.0)},
                        {"bias_alpha", ma},
                        {"bias_log_k", mk}});
    }
    return rows;
}

RegressorBundle train_models(const TrainConfig& config, TrainingLog* log_out, const ProgressFn& progress) {
    config.validate();
    auto report = [&](const std::string& msg) {
        if (progress) {
            progress(msg);
        }
    };
    TrainingLog log;

    // Data: noiseless single-state 2-D fBm, alpha ~ U(0.001, 1.999),
    // log2 K ~ U(log2k_min, log2k_max).
    std::vector<AlphaExample> alpha_data;
    std::vector<KExample> k_data;
    alpha_data.reserve(config.samples);
    k_data.reserve(config.samples);
    {
        std::mt19937_64 rng(config.seed);
        std::uniform_real_distribution<double> alpha_dist(kAlphaMin, kAlphaMax);
        std::uniform_real_distribution<double> log2k_dist(config.log2k_min, config.log2k_max);
        std::uniform_int_distribution<std::size_t> len_idx(0, features::kSupportedLengths.size() - 1);
        std::uniform_int_distribution<std::size_t> k_len(config.k_min_length, config.k_max_length);
        std::size_t index = 0;
        while (alpha_data.size() < config.samples) {
            const double alpha = alpha_dist(rng);
            const double k = std::exp2(log2k_dist(rng));
            const std::size_t len = features::kSupportedLengths[len_idx(rng)];
            const auto traj = sim::generate_trajectory(single_state(alpha, k, len, mix_seed(config.seed, index++)));
            alpha_data.push_back({features::features_alpha(traj.coords), static_cast<float>(alpha)});
        }
        while (k_data.size() < config.samples) {
            const double alpha = alpha_dist(rng);
            const double log2k = log2k_dist(rng);
            const std::size_t len = k_len(rng);
            const auto traj =
                sim::generate_trajectory(single_state(alpha, std::exp2(log2k), len, mix_seed(config.seed, index++)));
            k_data.push_back({static_cast<float>(features::feature_k(traj.coords)),
                              static_cast<float>(log2k * std::log(2.0))});
        }
    }
    report("simulated " + std::to_string(config.samples) + " training samples per model");

    const auto n_val = static_cast<std::size_t>(std::round(config.validation_fraction * static_cast<double>(config.samples)));
    std::vector<std::size_t> train_ids(config.samples - n_val);
    std::vector<std::size_t> val_ids(n_val);
    std::iota(train_ids.begin(), train_ids.end(), std::size_t{0});
    std::iota(val_ids.begin(), val_ids.end(), config.samples - n_val);

    // Alpha model.
    models::AlphaNet<float> alpha_net(config.alpha_net);
    std::mt19937_64 rng(mix_seed(config.seed, 0xa1fa));
    alpha_net.init(rng);
    nn::RmsProp rmsprop(config.alpha_lr);
    const auto val_batches = make_batches(alpha_data, val_ids, 256, nullptr);
    for (std::size_t epoch = 0; epoch < config.alpha_epochs; ++epoch) {
        rmsprop.set_lr(lr_at(config.alpha_lr, epoch, config.alpha_epochs));
        const auto batches = make_batches(alpha_data, train_ids, config.batch, &rng);
        double loss_sum = 0.0;
        double count = 0.0;
        nn::Mat<float> target, grad;
        for (const auto& b : batches) {
            const auto seq = pack_refs(alpha_data, b, target);
            alpha_net.params().zero_grad();
            const auto pred = alpha_net.forward(seq);
            const double loss = models::mae_loss<float>(pred, target, &grad);
            alpha_net.backward(grad);
            nn::clip_grad_norm(alpha_net.params().grads(), config.clip_norm);
            rmsprop.step(alpha_net.params().values(), alpha_net.params().grads());
            loss_sum += loss * static_cast<double>(b.size());
            count += static_cast<double>(b.size());
        }
        const double train_loss = loss_sum / count;
        check_finite(train_loss, "alpha", epoch);
        double val_sum = 0.0, val_count = 0.0;
        for (const auto& b : val_batches) {
            const auto seq = pack_refs(alpha_data, b, target);
            const auto pred = alpha_net.forward(seq);
            val_sum += models::mae_loss<float>(pred, target, nullptr) * static_cast<double>(b.size());
            val_count += static_cast<double>(b.size());
        }
        const double val_loss = val_count > 0.0 ? val_sum / val_count : train_loss;
        log.alpha_train.push_back(train_loss);
        log.alpha_val.push_back(val_loss);
        std::ostringstream os;
        os << "alpha epoch " << epoch + 1 << "/" << config.alpha_epochs << " train MAE " << train_loss << " val MAE "
           << val_loss;
        report(os.str());
    }

    // K model.
    models::KNet<float> k_net(config.k_net);
    k_net.init(rng);
    nn::Adam adam(config.k_lr);
    for (std::size_t epoch = 0; epoch < config.k_epochs; ++epoch) {
        adam.set_lr(lr_at(config.k_lr, epoch, config.k_epochs));
        std::vector<std::size_t> order = train_ids;
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        nn::Mat<float> grad;
        for (std::size_t i = 0; i < order.size(); i += config.batch) {
            const std::size_t n = std::min(config.batch, order.size() - i);
            nn::Mat<float> x(1, static_cast<Eigen::Index>(n));
            nn::Mat<float> y(1, static_cast<Eigen::Index>(n));
            for (std::size_t j = 0; j < n; ++j) {
                x(0, static_cast<Eigen::Index>(j)) = k_data[order[i + j]].feature;
                y(0, static_cast<Eigen::Index>(j)) = k_data[order[i + j]].label;
            }
            k_net.params().zero_grad();
            const auto pred = k_net.forward(x, true, &rng);
            loss_sum += models::mae_loss<float>(pred, y, &grad) * static_cast<double>(n);
            k_net.backward(grad);
            nn::clip_grad_norm(k_net.params().grads(), config.clip_norm);
            adam.step(k_net.params().values(), k_net.params().grads());
        }
        const double train_loss = loss_sum / static_cast<double>(order.size());
        check_finite(train_loss, "K", epoch);
        double val_loss = train_loss;
        if (!val_ids.empty()) {
            nn::Mat<float> x(1, static_cast<Eigen::Index>(val_ids.size()));
            nn::Mat<float> y(1, static_cast<Eigen::Index>(val_ids.size()));
            for (std::size_t j = 0; j < val_ids.size(); ++j) {
                x(0, static_cast<Eigen::Index>(j)) = k_data[val_ids[j]].feature;
                y(0, static_cast<Eigen::Index>(j)) = k_data[val_ids[j]].label;
            }
            val_loss = models::mae_loss<float>(k_net.forward(x), y, nullptr);
        }
        log.k_train.push_back(train_loss);
        log.k_val.push_back(val_loss);
        std::ostringstream os;
        os << "K epoch " << epoch + 1 << "/" << config.k_epochs << " train MAE " << train_loss << " val MAE "
           << val_loss;
        report(os.str());
    }

    nlohmann::json meta;
    meta["supported_lengths"] = features::kSupportedLengths;
    meta["alpha_net"] = config.alpha_net.to_json();
    meta["k_net"] = config.k_net.to_json();
    meta["alpha_params"] = alpha_net.params().size();
    meta["k_params"] = k_net.params().size();
    meta["training"] = config.to_json();
    meta["log"] = log.to_json();
    meta["log_k_base"] = "e";
    if (log_out != nullptr) {
        *log_out = log;
    }
    if (config.calibration_samples == 0) {
        return RegressorBundle(std::move(alpha_net), std::move(k_net), std::move(meta));
    }
    RegressorBundle bundle(std::move(alpha_net), std::move(k_net), meta);
    meta["estimate_error"] = calibrate_error(bundle, config.calibration_samples, config.log2k_min, config.log2k_max,
                                             mix_seed(config.seed, 0xca1b));
    report("calibrated estimate error on " + std::to_string(config.calibration_samples) + " segments per length");
    return RegressorBundle(bundle.alpha_net(), bundle.k_net(), std::move(meta));
}

} // namespace fbmseg::estimators
