#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace fbmseg::clustering {

struct MixturePoint {
    double alpha_hat = 0.0;
    double log_k_hat = 0.0;
    std::size_t length = 0;
    std::int64_t traj_id = 0;
};

using Vec2 = std::array<double, 2>;

/// Symmetric 2x2 matrix stored as (xx, xy, yy).
struct Cov2 {
    double xx = 1.0;
    double xy = 0.0;
    double yy = 1.0;

    double det() const { return xx * yy - xy * xy; }
};

struct Component {
    double weight = 1.0;
    Vec2 mean{0.0, 0.0};
    Cov2 cov;
};

struct MixtureModel {
    std::vector<Component> components;
    double log_likelihood = 0.0;
    double bic = 0.0;
    std::size_t iterations = 0;
    std::size_t n_points = 0;
    /// BIC per tried k (index k-1) when k was selected automatically.
    std::vector<double> bic_by_k;

    std::size_t k() const { return components.size(); }
    nlohmann::json to_json() const;
    static MixtureModel from_json(const nlohmann::json& j);
};

struct GmmConfig {
    /// -1 selects k in [1, max_k] by BIC.
    int k_request = -1;
    /// Points with length > min_len are used (>= when inclusive).
    std::size_t min_len = 16;
    bool inclusive = false;
    std::size_t max_k = 10;
    std::size_t restarts = 5;
    std::size_t max_iter = 500;
    /// Convergence threshold on the gain of the total log-likelihood.
    double tol = 1e-6;
    /// Eigenvalue floor applied to every covariance.
    double cov_floor = 1e-6;
    std::uint64_t seed = 0;
};

/// Length filter followed by EM fitting (BIC selection when k_request=-1).
/// Throws InsufficientDataError when fewer than max(k,2)*5 points remain.
MixtureModel fit_gmm(std::span<const MixturePoint> points, const GmmConfig& config);

/// EM for a fixed k on raw points. Points are sorted internally so the
/// result does not depend on input order. `ll_trace` receives the total
/// log-likelihood after every iteration of the winning restart.
MixtureModel fit_fixed_k(std::span<const Vec2> points, std::size_t k, const GmmConfig& config,
                         std::vector<double>* ll_trace = nullptr);

double bic_score(double log_likelihood, std::size_t k, std::size_t n);

/// Gaussian density of one component at a point.
double component_likelihood(const MixtureModel& model, const Vec2& point, std::size_t component);

/// Mixture density at a point.
double mixture_density(const MixtureModel& model, const Vec2& point);

/// Responsibilities by Bayes rule; sums to 1.
std::vector<double> posterior(const MixtureModel& model, const Vec2& point);

std::size_t argmax_component(const MixtureModel& model, const Vec2& point);

} // namespace fbmseg::clustering
