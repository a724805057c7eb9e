#include "fbmseg/clustering.hpp"

#include "fbmseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace fbmseg::clustering {

namespace {

constexpr double kMinWeight = 1e-10;

Cov2 floor_cov(const Cov2& c, double floor) {
    const double half_tr = 0.5 * (c.xx + c.yy);
    const double half_diff = 0.5 * (c.xx - c.yy);
    const double r = std::sqrt(half_diff * half_diff + c.xy * c.xy);
    const double lo = half_tr - r;
    const double hi = half_tr + r;
    if (lo >= floor) {
        return c;
    }
    const double l1 = std::max(hi, floor);
    const double l2 = std::max(lo, floor);
    // Unit eigenvector of the larger eigenvalue.
    double vx = 1.0, vy = 0.0;
    if (r > 0.0) {
        if (half_diff >= 0.0) {
            vx = half_diff + r;
            vy = c.xy;
        } else {
            vx = c.xy;
            vy = r - half_diff;
        }
        const double norm = std::hypot(vx, vy);
        vx /= norm;
        vy /= norm;
    }
    Cov2 out;
    out.xx = l1 * vx * vx + l2 * vy * vy;
    out.xy = (l1 - l2) * vx * vy;
    out.yy = l1 * vy * vy + l2 * vx * vx;
    return out;
}

double log_gauss(const Component& c, const Vec2& p) {
    const double det = c.cov.det();
    const double dx = p[0] - c.mean[0];
    const double dy = p[1] - c.mean[1];
    const double maha = (c.cov.yy * dx * dx - 2.0 * c.cov.xy * dx * dy + c.cov.xx * dy * dy) / det;
    return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * maha;
}

// E-step: fills responsibilities (row-major n x k), returns total log-likelihood.
double e_step(const std::vector<Component>& comps, std::span<const Vec2> pts, std::vector<double>& resp) {
    const std::size_t k = comps.size();
    resp.resize(pts.size() * k);
    std::vector<double> logw(k);
    for (std::size_t c = 0; c < k; ++c) {
        logw[c] = std::log(comps[c].weight);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double* r = resp.data() + i * k;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            r[c] = logw[c] + log_gauss(comps[c], pts[i]);
            mx = std::max(mx, r[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            r[c] = std::exp(r[c] - mx);
            sum += r[c];
        }
        for (std::size_t c = 0; c < k; ++c) {
            r[c] /= sum;
        }
        total += mx + std::log(sum);
    }
    return total;
}

void m_step(std::vector<Component>& comps, std::span<const Vec2> pts, const std::vector<double>& resp,
            double cov_floor) {
    const std::size_t k = comps.size();
    const double n = static_cast<double>(pts.size());
    for (std::size_t c = 0; c < k; ++c) {
        double nk = 0.0, mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double r = resp[i * k + c];
            nk += r;
            mx += r * pts[i][0];
            my += r * pts[i][1];
        }
        if (nk < kMinWeight * n) {
            // Collapsed component: keep its shape, give it a vanishing weight.
            comps[c].weight = kMinWeight;
            continue;
        }
        mx /= nk;
        my /= nk;
        Cov2 cov{0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double r = resp[i * k + c];
            const double dx = pts[i][0] - mx;
            const double dy = pts[i][1] - my;
            cov.xx += r * dx * dx;
            cov.xy += r * dx * dy;
            cov.yy += r * dy * dy;
        }
        cov.xx /= nk;
        cov.xy /= nk;
        cov.yy /= nk;
        comps[c].weight = nk / n;
        comps[c].mean = {mx, my};
        comps[c].cov = floor_cov(cov, cov_floor);
    }
    double sum = 0.0;
    for (const auto& c : comps) {
        sum += c.weight;
    }
    for (auto& c : comps) {
        c.weight /= sum;
    }
}

double sq_dist(const Vec2& a, const Vec2& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return dx * dx + dy * dy;
}

// k-means++ seeding, then one hard-assignment M-step.
std::vector<Component> init_components(std::span<const Vec2> pts, std::size_t k, double cov_floor,
                                       std::mt19937_64& rng) {
    std::vector<Vec2> centers;
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    centers.push_back(pts[pick(rng)]);
    std::vector<double> d2(pts.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) {
                best = std::min(best, sq_dist(pts[i], c));
            }
            d2[i] = best;
            total += best;
        }
        if (!(total > 0.0)) {
            centers.push_back(pts[pick(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        std::size_t chosen = pts.size() - 1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            target -= d2[i];
            if (target <= 0.0) {
                chosen = i;
                break;
            }
        }
        centers.push_back(pts[chosen]);
    }

    std::vector<double> resp(pts.size() * k, 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double d = sq_dist(pts[i], centers[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        resp[i * k + best] = 1.0;
    }

    // Global moments back up components that received no points.
    Component global;
    {
        std::vector<Component> one(1);
        std::vector<double> ones(pts.size(), 1.0);
        m_step(one, pts, ones, cov_floor);
        global = one.front();
    }
    std::vector<Component> comps(k, global);
    for (std::size_t c = 0; c < k; ++c) {
        comps[c].mean = centers[c];
    }
    m_step(comps, pts, resp, cov_floor);
    return comps;
}

} // namespace

double bic_score(double log_likelihood, std::size_t k, std::size_t n) {
    const double params = static_cast<double>(6 * k - 1);
    return -2.0 * log_likelihood + params * std::log(static_cast<double>(n));
}

MixtureModel fit_fixed_k(std::span<const Vec2> points, std::size_t k, const GmmConfig& config,
                         std::vector<double>* ll_trace) {
    if (k == 0) {
        throw ParameterError("number of mixture components must be >= 1");
    }
    if (points.size() < k) {
        throw InsufficientDataError("fewer points than mixture components");
    }
    std::vector<Vec2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end());

    MixtureModel best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    std::vector<double> best_trace;
    const std::size_t restarts = std::max<std::size_t>(1, k == 1 ? 1 : config.restarts);
    std::vector<double> resp;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::mt19937_64 rng(config.seed * 1000003ULL + 7919ULL * k + r);
        auto comps = init_components(pts, k, config.cov_floor, rng);
        std::vector<double> trace;
        double ll = e_step(comps, pts, resp);
        trace.push_back(ll);
        std::size_t it = 0;
        while (it < config.max_iter) {
            m_step(comps, pts, resp, config.cov_floor);
            const double next = e_step(comps, pts, resp);
            ++it;
            trace.push_back(next);
            const double gain = next - ll;
            ll = next;
            if (gain < config.tol) {
                break;
            }
        }
        if (!std::isfinite(ll)) {
            continue;
        }
        if (ll > best.log_likelihood) {
            best.components = comps;
            best.log_likelihood = ll;
            best.iterations = it;
            best_trace = std::move(trace);
        }
    }
    if (best.components.empty()) {
        throw NumericError("EM produced a non-finite log-likelihood for every restart");
    }
    best.n_points = pts.size();
    best.bic = bic_score(best.log_likelihood, k, pts.size());
    if (ll_trace != nullptr) {
        *ll_trace = std::move(best_trace);
    }
    return best;
}

MixtureModel fit_gmm(std::span<const MixturePoint> points, const GmmConfig& config) {
    if (config.k_request == 0 || config.k_request < -1) {
        throw ParameterError("k must be -1 (BIC selection) or a positive integer");
    }
    std::vector<Vec2> pts;
    for (const auto& p : points) {
        const bool keep = config.inclusive ? p.length >= config.min_len : p.length > config.min_len;
        if (!keep) {
            continue;
        }
        if (!std::isfinite(p.alpha_hat) || !std::isfinite(p.log_k_hat)) {
            throw DataError("non-finite mixture point from trajectory " + std::to_string(p.traj_id));
        }
        pts.push_back({p.alpha_hat, p.log_k_hat});
    }
    const std::size_t k_min_needed = config.k_request > 0 ? static_cast<std::size_t>(config.k_request) : 2;
    const std::size_t needed = std::max<std::size_t>(k_min_needed, 2) * 5;
    if (pts.size() < needed) {
        throw InsufficientDataError("only " + std::to_string(pts.size()) + " sub-trajectories longer than " +
                                    std::to_string(config.min_len) + " frames (need " + std::to_string(needed) +
                                    "); lower the minimum segment length for small samples");
    }
    if (config.k_request > 0) {
        return fit_fixed_k(pts, static_cast<std::size_t>(config.k_request), config);
    }
    const std::size_t max_k = std::max<std::size_t>(1, std::min(config.max_k, pts.size() / 5));
    MixtureModel best;
    std::vector<double> bics;
    for (std::size_t k = 1; k <= max_k; ++k) {
        auto model = fit_fixed_k(pts, k, config);
        bics.push_back(model.bic);
        if (best.components.empty() || model.bic < best.bic) {
            best = std::move(model);
        }
    }
    best.bic_by_k = std::move(bics);
    return best;
}

double component_likelihood(const MixtureModel& model, const Vec2& point, std::size_t component) {
    return std::exp(log_gauss(model.components.at(component), point));
}

double mixture_density(const MixtureModel& model, const Vec2& point) {
    double total = 0.0;
    for (std::size_t c = 0; c < model.k(); ++c) {
        total += model.components[c].weight * component_likelihood(model, point, c);
    }
    return total;
}

std::vector<double> posterior(const MixtureModel& model, const Vec2& point) {
    const std::size_t k = model.k();
    std::vector<double> logp(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        logp[c] = std::log(model.components[c].weight) + log_gauss(model.components[c], point);
        mx = std::max(mx, logp[c]);
    }
    double sum = 0.0;
    for (auto& v : logp) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : logp) {
        v /= sum;
    }
    return logp;
}

std::size_t argmax_component(const MixtureModel& model, const Vec2& point) {
    const auto p = posterior(model, point);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

nlohmann::json MixtureModel::to_json() const {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components) {
        comps.push_back({{"weight", c.weight},
                         {"mean", {c.mean[0], c.mean[1]}},
                         {"cov", {{c.cov.xx, c.cov.xy}, {c.cov.xy, c.cov.yy}}}});
    }
    return {{"k", k()},
            {"components", comps},
            {"log_likelihood", log_likelihood},
            {"bic", bic},
            {"bic_by_k", bic_by_k},
            {"iterations", iterations},
            {"n_points", n_points},
            {"axes", {"alpha_hat", "log_k_hat"}}};
}

MixtureModel MixtureModel::from_json(const nlohmann::json& j) {
    MixtureModel m;
    for (const auto& c : j.at("components")) {
        Component comp;
        comp.weight = c.at("weight");
        comp.mean = {c.at("mean")[0].get<double>(), c.at("mean")[1].get<double>()};
        comp.cov.xx = c.at("cov")[0][0];
        comp.cov.xy = c.at("cov")[0][1];
        comp.cov.yy = c.at("cov")[1][1];
        m.components.push_back(comp);
    }
    m.log_likelihood = j.value("log_likelihood", 0.0);
    m.bic = j.value("bic", 0.0);
    m.bic_by_k = j.value("bic_by_k", std::vector<double>{});
    m.iterations = j.value("iterations", std::size_t{0});
    m.n_points = j.value("n_points", std::size_t{0});
    return m;
}

} // namespace fbmseg::clustering
