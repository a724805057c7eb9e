#include "fbmseg/error.hpp"
#include "fbmseg/merge.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>

using namespace fbmseg;

namespace {

clustering::MixtureModel two_states() {
    clustering::MixtureModel m;
    m.components = {{0.5, {0.3, -2.0}, {0.0025, 0.0, 0.0025}}, {0.5, {1.2, 0.0}, {0.0025, 0.0, 0.0025}}};
    return m;
}

Segment seg(std::size_t start, std::size_t end, double alpha, double log_k) {
    Segment s;
    s.start = start;
    s.end = end;
    s.estimate = {alpha, log_k};
    return s;
}

// Overlap-weighted mixture of the true states: frames < switch_at are
// (0.3, -2), the rest (1.2, 0).
merge::SegmentEstimator piecewise(std::size_t switch_at) {
    return [switch_at](std::size_t s, std::size_t e) -> std::optional<Estimate> {
        const double before = static_cast<double>(std::min(e, switch_at) - std::min(s, switch_at));
        const double w = before / static_cast<double>(e - s);
        return Estimate{0.3 * w + 1.2 * (1 - w), -2.0 * w};
    };
}

signal::CandidateSet cands(std::vector<std::size_t> frames, std::vector<double> scores) {
    return {std::move(frames), std::move(scores)};
}

} // namespace

TEST_CASE("significance table") {
    merge::SignificanceTable t;
    CHECK(t.level_for(5) == 1e-5);
    CHECK(t.level_for(7) == 1e-5);
    CHECK(t.level_for(3) == 1e-5);
    CHECK(t.level_for(12) == 2.5e-2);
    CHECK(t.level_for(15) == 2.5e-2);
    CHECK(t.level_for(500) == 0.1);
    CHECK_THROWS_AS(t.set(10, 0.1), ParameterError);
    CHECK_THROWS_AS(t.set(8, 1.0), ParameterError);
    CHECK_THROWS_AS(merge::SignificanceTable({{5, 0.1}}), ParameterError);
}

TEST_CASE("merge decision") {
    const auto model = two_states();
    const merge::MixtureMergeRule rule(model, merge::SignificanceTable{});
    CHECK(rule.should_merge(seg(0, 40, 0.3, -2.0), seg(40, 90, 0.3, -2.0)));
    CHECK_FALSE(rule.should_merge(seg(0, 128, 0.3, -2.0), seg(128, 256, 1.2, 0.0)));
    CHECK(merge::MixtureMergeRule::p_same({0.6, 0.4}, {0.0, 1.0}) == doctest::Approx(0.4));
    // Ambiguous short left segment against a firm right one.
    clustering::MixtureModel wide;
    wide.components = {{0.5, {0.0, 0.0}, {1.0, 0.0, 1.0}}, {0.5, {1.0, 0.0}, {1.0, 0.0, 1.0}}};
    const merge::MixtureMergeRule wide_rule(wide, merge::SignificanceTable{});
    // log(0.6/0.4) = 1*(x - 0.5) * ... places x where P(c0) = 0.6.
    const double x = 0.5 - std::log(0.6 / 0.4);
    const auto p = clustering::posterior(wide, {x, 0.0});
    REQUIRE(p[0] == doctest::Approx(0.6));
    CHECK_FALSE(wide_rule.should_merge(seg(0, 5, x, 0.0), seg(5, 100, 40.0, 0.0)));
}

namespace {

// Posterior of a point under a mixture whose covariances are widened by
// `extra`, evaluated with explicit Gaussian densities.
std::vector<double> widened_posterior(const clustering::MixtureModel& m, const clustering::Vec2& p,
                                      const clustering::Cov2& extra) {
    std::vector<double> dens;
    double total = 0.0;
    for (const auto& c : m.components) {
        Eigen::Matrix2d s;
        s << c.cov.xx + extra.xx, c.cov.xy + extra.xy, c.cov.xy + extra.xy, c.cov.yy + extra.yy;
        const Eigen::Vector2d d(p[0] - c.mean[0], p[1] - c.mean[1]);
        const double v = c.weight * std::exp(-0.5 * d.dot(s.inverse() * d)) / (2.0 * M_PI * std::sqrt(s.determinant()));
        dens.push_back(v);
        total += v;
    }
    for (auto& v : dens) {
        v /= total;
    }
    return dens;
}

} // namespace

TEST_CASE("membership merge rule") {
    const auto model = two_states();
    const merge::MembershipMergeRule rule(model, merge::SignificanceTable{});
    // Same most likely component.
    CHECK(rule.should_merge(seg(0, 40, 0.3, -2.0), seg(40, 90, 0.35, -1.9)));
    // Far apart, long segments.
    CHECK_FALSE(rule.should_merge(seg(0, 128, 0.3, -2.0), seg(128, 256, 1.2, 0.0)));
    CHECK(merge::MembershipMergeRule::p_same_cluster({0.9, 0.1, 0.0}, {0.3, 0.05, 0.65}) == doctest::Approx(0.3));
    // Overlapping components: the right point sits in component 1 with
    // P(c0 | right) = 0.05, enough at length 5 (level 1e-5) but not at
    // length 100 (level 0.1).
    clustering::MixtureModel wide;
    wide.components = {{0.5, {0.0, 0.0}, {0.04, 0.0, 0.04}}, {0.5, {1.0, 0.0}, {0.04, 0.0, 0.04}}};
    const double x = 0.5 + 0.04 * std::log(0.95 / 0.05);
    REQUIRE(clustering::posterior(wide, {x, 0.0})[0] == doctest::Approx(0.05));
    const merge::MembershipMergeRule wide_rule(wide, merge::SignificanceTable{});
    const auto left = seg(0, 100, 0.0, 0.0);
    CHECK(wide_rule.should_merge(left, seg(100, 105, x, 0.0)));
    CHECK_FALSE(wide_rule.should_merge(left, seg(100, 200, x, 0.0)));
    // A wide component does not absorb a pair that two components explain.
    clustering::MixtureModel narrow_wide;
    narrow_wide.components = {{0.8, {0.2, -2.0}, {0.005, 0.0, 0.05}}, {0.2, {0.85, -2.0}, {0.13, 0.0, 0.06}}};
    const merge::MembershipMergeRule nw_rule(narrow_wide, merge::SignificanceTable{});
    CHECK_FALSE(nw_rule.should_merge(seg(0, 100, 0.2, -2.0), seg(100, 200, 1.0, -2.0)));
    // Estimate error widens the components for short segments.
    const merge::MembershipMergeRule noisy(
        model, merge::SignificanceTable{}, [](std::size_t len) {
            return len < 16 ? clustering::Cov2{0.25, 0.0, 0.25} : merge::MembershipMergeRule::zero_cov();
        });
    CHECK_FALSE(rule.should_merge(seg(0, 128, 0.3, -2.0), seg(128, 136, 0.9, -1.0)));
    CHECK(noisy.should_merge(seg(0, 128, 0.3, -2.0), seg(128, 136, 0.9, -1.0)));
}

TEST_CASE("membership posterior matches explicit densities") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.01, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
        clustering::MixtureModel m;
        const int k = 1 + static_cast<int>(rng() % 3);
        for (int c = 0; c < k; ++c) {
            const double xx = pos(rng), yy = pos(rng);
            const double xy = 0.9 * u(rng) * std::sqrt(xx * yy);
            m.components.push_back({1.0 / k, {u(rng), u(rng)}, {xx, xy, yy}});
        }
        const merge::MembershipMergeRule rule(m, merge::SignificanceTable{});
        const clustering::Vec2 a{u(rng), u(rng)};
        const clustering::Cov2 e{pos(rng), 0.01, pos(rng)};
        const auto got = rule.posterior(a, e);
        const auto expect = widened_posterior(m, a, e);
        REQUIRE(got.size() == expect.size());
        for (std::size_t c = 0; c < got.size(); ++c) {
            CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-9));
        }
    }
}

TEST_CASE("merge rule names") {
    CHECK(merge::rule_kind_from_string("membership") == merge::RuleKind::Membership);
    CHECK(merge::rule_kind_from_string("posterior") == merge::RuleKind::Posterior);
    CHECK(merge::to_string(merge::RuleKind::Posterior) == "posterior");
    CHECK_THROWS_AS(merge::rule_kind_from_string("likelihood"), ParameterError);
}

TEST_CASE("segmentation examples") {
    const auto model = two_states();
    const merge::MixtureMergeRule rule(model, merge::SignificanceTable{});

    SUBCASE("no candidates") {
        const auto out = merge::segment_trajectory(4, 200, {}, piecewise(100), model, rule);
        REQUIRE(out.segments.size() == 1);
        CHECK(out.segments[0].start == 0);
        CHECK(out.segments[0].end == 200);
        CHECK(out.segments[0].traj_id == 4);
        CHECK(out.segments[0].cluster.has_value());
    }
    SUBCASE("false candidates are removed, the true one survives") {
        merge::MergeStats stats;
        const auto out = merge::segment_trajectory(
            0, 200, cands({30, 60, 100, 150}, {0.3, 0.2, 0.9, 0.4}), piecewise(100), model, rule, &stats);
        CHECK(out.changepoints() == std::vector<std::size_t>{100});
        CHECK(out.segments[0].cluster != out.segments[1].cluster);
        CHECK(out.segments[0].estimate.alpha == doctest::Approx(0.3));
        CHECK(stats.rule_merges == 3);
    }
    SUBCASE("segments shorter than five are absorbed") {
        merge::MergeStats stats;
        const auto out = merge::segment_trajectory(0, 200, cands({2, 100, 197}, {0.9, 0.9, 0.9}), piecewise(100),
                                                   model, rule, &stats);
        CHECK(out.changepoints() == std::vector<std::size_t>{100});
        CHECK(stats.auto_merges == 2);
    }
    SUBCASE("unestimable segments join the more likely neighbor") {
        // [40, 60) has no motion: it should end up with the left state.
        merge::SegmentEstimator est = [](std::size_t s, std::size_t e) -> std::optional<Estimate> {
            if (s >= 40 && e <= 60) {
                return std::nullopt;
            }
            if (e <= 60) {
                return Estimate{0.3, -2.0};
            }
            if (s >= 60) {
                return Estimate{1.2, 0.0};
            }
            return Estimate{0.6, -1.3};
        };
        const auto out = merge::segment_trajectory(0, 120, cands({40, 60}, {0.5, 0.8}), est, model, rule);
        CHECK(out.changepoints() == std::vector<std::size_t>{60});
    }
    SUBCASE("invalid candidates") {
        CHECK_THROWS_AS(merge::segment_trajectory(0, 50, cands({10, 10}, {0.2, 0.3}), piecewise(25), model, rule),
                        ParameterError);
        CHECK_THROWS_AS(merge::segment_trajectory(0, 50, cands({50}, {0.2}), piecewise(25), model, rule),
                        ParameterError);
    }
}

TEST_CASE("merge loop properties on random inputs") {
    std::mt19937_64 rng(11);
    clustering::MixtureModel model;
    model.components = {{0.3, {0.2, -1.0}, {0.04, 0.0, 0.09}},
                        {0.4, {1.0, 0.0}, {0.04, 0.01, 0.09}},
                        {0.3, {1.7, 1.0}, {0.04, 0.0, 0.09}}};
    std::vector<std::unique_ptr<merge::MergeRule>> rules;
    rules.push_back(merge::make_rule(merge::RuleKind::Posterior, model, merge::SignificanceTable{}));
    rules.push_back(merge::make_rule(merge::RuleKind::Membership, model, merge::SignificanceTable{}));
    rules.push_back(merge::make_rule(merge::RuleKind::Membership, model, merge::SignificanceTable{},
                                     [](std::size_t len) { return clustering::Cov2{0.5 / len, 0.0, 1.0 / len}; }));
    for (int trial = 0; trial < 300; ++trial) {
        const auto& rule = *rules[static_cast<std::size_t>(trial) % rules.size()];
        const std::size_t T = 20 + rng() % 300;
        std::set<std::size_t> frames;
        const std::size_t n = rng() % 25;
        for (std::size_t i = 0; i < n; ++i) {
            frames.insert(1 + rng() % (T - 1));
        }
        signal::CandidateSet c;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t f : frames) {
            c.frames.push_back(f);
            // Coarse scores so ties occur.
            c.scores.push_back(std::round(u(rng) * 4.0) / 4.0);
        }
        const std::uint64_t salt = rng();
        merge::SegmentEstimator est = [salt](std::size_t s, std::size_t e) -> std::optional<Estimate> {
            std::mt19937_64 r(salt ^ (s * 1000003u + e));
            std::uniform_real_distribution<double> a(0.0, 2.0), k(-1.5, 1.5);
            if (r() % 17 == 0) {
                return std::nullopt;
            }
            return Estimate{a(r), k(r)};
        };
        bool partition_ok = true;
        auto observer = [&](const std::vector<std::size_t>& b) {
            partition_ok = partition_ok && b.front() == 0 && b.back() == T && std::is_sorted(b.begin(), b.end()) &&
                           std::adjacent_find(b.begin(), b.end()) == b.end();
        };
        merge::MergeStats stats;
        const auto out = merge::segment_trajectory(0, T, c, est, model, rule, &stats, observer);
        CHECK(partition_ok);
        CHECK(stats.iterations <= 2 * c.frames.size());
        // Final segments tile [0, T).
        std::size_t pos = 0;
        for (const auto& s : out.segments) {
            CHECK(s.start == pos);
            CHECK(s.end > s.start);
            pos = s.end;
        }
        CHECK(pos == T);
        for (std::size_t f : out.changepoints()) {
            CHECK(frames.count(f) == 1);
        }
        const auto again = merge::segment_trajectory(0, T, c, est, model, rule);
        CHECK(again.changepoints() == out.changepoints());
    }
}
