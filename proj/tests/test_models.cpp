#include "fbmseg/bundle_io.hpp"
#include "fbmseg/error.hpp"
#include "fbmseg/estimators.hpp"
#include "fbmseg/models.hpp"
#include "fbmseg/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace fbmseg;

namespace {

estimators::RegressorBundle random_bundle(std::uint64_t seed) {
    models::AlphaNetConfig ac;
    ac.conv_filters = 4;
    ac.lstm1 = 6;
    ac.lstm2 = 5;
    ac.dense = 4;
    models::KNetConfig kc;
    kc.hidden = 8;
    std::mt19937_64 rng(seed);
    models::AlphaNet<float> a(ac);
    a.init(rng);
    models::KNet<float> k(kc);
    k.init(rng);
    return estimators::RegressorBundle(std::move(a), std::move(k), {{"note", "random"}});
}

std::vector<Point2> walk(std::size_t n, double alpha, std::uint64_t seed) {
    sim::SwitchingSpec s;
    s.states = {{alpha, 1.0}};
    s.length = n;
    s.seed = seed;
    return sim::generate_trajectory(s).coords;
}

// 0.5 * sum(out^2); gradient of the output is the output itself.
template <typename Net, typename Input>
double half_square(Net& net, const Input& x) {
    const auto out = net.forward(x);
    return 0.5 * out.squaredNorm();
}

template <typename Net, typename Input>
void check_gradients(Net& net, const Input& x) {
    auto& store = net.params();
    store.zero_grad();
    const auto out = net.forward(x);
    net.backward(out);
    const auto analytic = store.grads();
    std::mt19937_64 rng(99);
    for (const auto& block : store.blocks()) {
        std::uniform_int_distribution<std::size_t> pick(0, block.size() - 1);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t idx = block.offset + pick(rng);
            const double keep = store.values()[idx];
            const double h = 1e-6;
            store.values()[idx] = keep + h;
            const double up = half_square(net, x);
            store.values()[idx] = keep - h;
            const double down = half_square(net, x);
            store.values()[idx] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic[idx])});
            INFO(block.name << " index " << idx << " numeric " << numeric << " analytic " << analytic[idx]);
            CHECK(std::abs(numeric - analytic[idx]) / denom < 1e-3);
        }
    }
}

} // namespace

TEST_CASE("alpha network gradients match finite differences") {
    models::AlphaNetConfig cfg;
    cfg.conv_filters = 3;
    cfg.lstm1 = 4;
    cfg.lstm2 = 3;
    cfg.dense = 5;
    models::AlphaNet<double> net(cfg);
    std::mt19937_64 rng(1);
    net.init(rng);
    std::normal_distribution<double> nd(0.0, 1.0);
    nn::Sequence<double> x(6, nn::Mat<double>(3, 2));
    for (auto& m : x) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = nd(rng);
        }
    }
    check_gradients(net, x);
}

TEST_CASE("K network gradients match finite differences") {
    models::KNetConfig cfg;
    cfg.hidden = 6;
    models::KNet<double> net(cfg);
    std::mt19937_64 rng(2);
    net.init(rng);
    nn::Mat<double> x(1, 4);
    x << -1.5, -0.2, 0.7, 2.0;
    check_gradients(net, x);
}

TEST_CASE("estimation entry points") {
    const auto bundle = random_bundle(5);
    const auto seg = walk(200, 0.7, 3);

    SUBCASE("alpha is the clamped mean of 73 window predictions") {
        const auto per_window = estimators::alpha_window_predictions(bundle, seg);
        REQUIRE(per_window.size() == 73);
        const double mean = std::accumulate(per_window.begin(), per_window.end(), 0.0) / 73.0;
        CHECK(estimators::estimate_alpha(bundle, seg) == doctest::Approx(std::clamp(mean, 0.001, 1.999)).epsilon(1e-12));
    }
    SUBCASE("too short and degenerate segments") {
        CHECK_THROWS_AS(estimators::estimate(bundle, std::span(seg).first(4)), TooShortError);
        CHECK_THROWS_AS(estimators::estimate(bundle, std::vector<Point2>(10, Point2{1, 2})), DegenerateSegmentError);
    }
    SUBCASE("TAMSD baseline recovers a ballistic slope") {
        std::vector<Point2> line;
        for (int i = 0; i < 40; ++i) {
            line.push_back({0.5 * i, -0.25 * i});
        }
        CHECK(estimators::tamsd_alpha(line) == doctest::Approx(1.999));
    }
}

TEST_CASE("bundle round trip") {
    const auto bundle = random_bundle(8);
    const auto bytes = bundle_io::serialize_bundle(bundle);
    const auto back = bundle_io::deserialize_bundle(bytes);
    CHECK(back.alpha_net().params().values() == bundle.alpha_net().params().values());
    CHECK(back.k_net().params().values() == bundle.k_net().params().values());
    CHECK(bundle_io::serialize_bundle(back) == bytes);
    CHECK(back.metadata().at("note") == "random");

    // Bitwise-equal predictions on a probe set.
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto seg = walk(37 + 20 * s, 0.3 + 0.3 * static_cast<double>(s), s);
        const auto a = estimators::estimate(bundle, seg);
        const auto b = estimators::estimate(back, seg);
        CHECK(a.alpha == b.alpha);
        CHECK(a.log_k == b.log_k);
    }

    SUBCASE("corruption is detected") {
        auto bad = bytes;
        bad[bad.size() - 10] ^= 0x01;
        CHECK_THROWS_AS(bundle_io::deserialize_bundle(bad), FormatError);
    }
    SUBCASE("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(bundle_io::deserialize_bundle(bad), FormatError);
    }
    SUBCASE("other format versions are rejected") {
        auto bad = bytes;
        bad[8] = static_cast<char>(bundle_io::kFormatVersion + 1);
        CHECK_THROWS_AS(bundle_io::deserialize_bundle(bad), FormatError);
    }
    SUBCASE("truncation") {
        CHECK_THROWS_AS(bundle_io::deserialize_bundle(bytes.substr(0, bytes.size() / 2)), FormatError);
    }
}

TEST_CASE("training is reproducible for a seed") {
    estimators::TrainConfig cfg;
    cfg.samples = 10000;
    cfg.alpha_epochs = 1;
    cfg.k_epochs = 1;
    cfg.alpha_net.conv_filters = 4;
    cfg.alpha_net.lstm1 = 4;
    cfg.alpha_net.lstm2 = 4;
    cfg.alpha_net.dense = 4;
    cfg.k_net.hidden = 8;
    cfg.seed = 3;
    estimators::TrainingLog log;
    cfg.calibration_samples = 20;
    const auto a = estimators::train_models(cfg, &log);
    const auto b = estimators::train_models(cfg);
    CHECK(a.metadata().at("estimate_error") == b.metadata().at("estimate_error"));
    // Error covariance snaps down to the supported lengths.
    const auto e8 = a.error_cov(8);
    REQUIRE(e8);
    CHECK(a.error_cov(11) == e8);
    CHECK(a.error_cov(3) == a.error_cov(5));
    CHECK((*e8)[0] > 0.0);
    CHECK((*e8)[2] > 0.0);
    CHECK((*e8)[1] * (*e8)[1] <= (*e8)[0] * (*e8)[2]);
    CHECK_FALSE(random_bundle(1).error_cov(8));
    CHECK(a.alpha_net().params().values() == b.alpha_net().params().values());
    CHECK(a.k_net().params().values() == b.k_net().params().values());
    CHECK(log.alpha_train.size() == 1);
    CHECK(std::isfinite(log.alpha_val.at(0)));

    cfg.samples = 100;
    CHECK_THROWS_AS(estimators::train_models(cfg), ParameterError);
}
