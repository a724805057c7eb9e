#include "fbmseg/signal.hpp"

#include "fbmseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fbmseg::signal {

std::vector<std::size_t> SignalConfig::default_window_sizes() {
    std::vector<std::size_t> ws;
    for (std::size_t w = 20; w <= 40; w += 2) {
        ws.push_back(w);
    }
    return ws;
}

std::size_t SignalConfig::effective_extension() const {
    if (extension != 0) {
        return extension;
    }
    return window_sizes.empty() ? 0 : *std::max_element(window_sizes.begin(), window_sizes.end()) / 2;
}

void SignalConfig::validate() const {
    if (window_sizes.empty()) {
        throw ParameterError("window size set is empty");
    }
    for (std::size_t w : window_sizes) {
        if (w < 4 || w % 2 != 0) {
            throw ParameterError("window sizes must be even and >= 4, got " + std::to_string(w));
        }
    }
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw ParameterError("lambda must lie in (0,1)");
    }
    const std::size_t max_w = *std::max_element(window_sizes.begin(), window_sizes.end());
    if (extension != 0 && extension < max_w / 2) {
        throw ParameterError("extension must be at least max(window_sizes)/2");
    }
}

namespace {

// Values reflected past the front of `seq`, nearest first.
std::vector<double> reflect_front(const std::vector<double>& seq, std::size_t count) {
    std::vector<double> cur = seq;
    std::vector<double> added;  // added[j-1] is the value at position -j
    while (added.size() < count) {
        const double pivot = cur.front();
        const std::size_t take = std::min(count - added.size(), cur.size() - 1);
        std::vector<double> fresh(take);
        for (std::size_t j = 1; j <= take; ++j) {
            fresh[j - 1] = 2.0 * pivot - cur[j];
        }
        added.insert(added.end(), fresh.begin(), fresh.end());
        cur.insert(cur.begin(), fresh.rbegin(), fresh.rend());
    }
    return added;
}

std::vector<double> extend_axis(const std::vector<double>& v, std::size_t extension) {
    const auto left = reflect_front(v, extension);
    std::vector<double> reversed(v.rbegin(), v.rend());
    const auto right = reflect_front(reversed, extension);
    std::vector<double> out;
    out.reserve(v.size() + 2 * extension);
    out.insert(out.end(), left.rbegin(), left.rend());
    out.insert(out.end(), v.begin(), v.end());
    out.insert(out.end(), right.begin(), right.end());
    return out;
}

} // namespace

Extended extend_trajectory(std::span<const Point2> coords, std::size_t extension) {
    if (coords.size() < 2) {
        throw TooShortError("trajectory needs at least 2 coordinates to extend");
    }
    if (extension < 1) {
        throw ParameterError("extension length must be >= 1");
    }
    std::vector<double> xs(coords.size());
    std::vector<double> ys(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        xs[i] = coords[i].x;
        ys[i] = coords[i].y;
    }
    return Extended{extend_axis(xs, extension), extend_axis(ys, extension), extension};
}

HalfStats half_stats(const Extended& ext, std::size_t begin, std::size_t len) {
    if (len == 0 || begin + len > ext.x.size()) {
        throw std::out_of_range("window half outside extended sequence");
    }
    HalfStats h;
    const double x0 = ext.x[begin];
    const double y0 = ext.y[begin];
    double mx = 0.0, my = 0.0;
    for (std::size_t k = begin; k < begin + len; ++k) {
        h.a += std::abs(ext.x[k] - x0);
        h.b += std::abs(ext.y[k] - y0);
        mx += ext.x[k];
        my += ext.y[k];
    }
    const double n = static_cast<double>(len);
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0;
    for (std::size_t k = begin; k < begin + len; ++k) {
        vx += (ext.x[k] - mx) * (ext.x[k] - mx);
        vy += (ext.y[k] - my) * (ext.y[k] - my);
    }
    h.sigma_x = std::sqrt(vx / n);
    h.sigma_y = std::sqrt(vy / n);
    return h;
}

WindowStats half_window_stats(const Extended& ext, std::size_t split, std::size_t w) {
    const std::size_t half = w / 2;
    if (split < half || split + half > ext.x.size()) {
        throw std::out_of_range("window outside extended sequence");
    }
    return {half_stats(ext, split - half, half), half_stats(ext, split, half)};
}

namespace {

double relative_difference(double l, double r) {
    const double m = std::max(l, r);
    return m > 0.0 ? (l - r) / m : 0.0;
}

} // namespace

double ratio_term(const WindowStats& s) {
    return std::abs(relative_difference(s.left.a, s.right.a) + relative_difference(s.left.b, s.right.b));
}

double sigma_term(const WindowStats& s) {
    return std::abs(s.left.sigma_x - s.right.sigma_x) + std::abs(s.left.sigma_y - s.right.sigma_y);
}

double window_score(const Extended& ext, std::size_t split, std::size_t w) {
    const auto s = half_window_stats(ext, split, w);
    return ratio_term(s) + sigma_term(s);
}

Signal aggregate_signal(std::span<const Point2> coords, const SignalConfig& config, bool keep_components) {
    config.validate();
    const std::size_t extension = config.effective_extension();
    const Extended ext = extend_trajectory(coords, extension);
    const std::size_t frames = coords.size() + 1;

    Signal sig;
    sig.raw.assign(frames, 0.0);
    for (std::size_t w : config.window_sizes) {
        std::vector<double> v(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            v[f] = window_score(ext, extension + f, w);
            sig.raw[f] += v[f];
        }
        if (keep_components) {
            sig.components.emplace(w, std::move(v));
        }
    }

    const auto [lo, hi] = std::minmax_element(sig.raw.begin(), sig.raw.end());
    const double range = *hi - *lo;
    sig.s.assign(frames, 0.0);
    if (range > 0.0) {
        for (std::size_t f = 0; f < frames; ++f) {
            sig.s[f] = std::clamp((sig.raw[f] - *lo) / range, 0.0, 1.0);
        }
    }
    return sig;
}

CandidateSet candidate_changepoints(std::span<const double> s, double lambda) {
    CandidateSet out;
    if (s.size() < 3) {
        return out;
    }
    const std::size_t last = s.size() - 1;  // frame T
    std::size_t i = 1;
    while (i < last) {
        // Extend a run of equal values.
        std::size_t j = i;
        while (j + 1 < s.size() && s[j + 1] == s[i]) {
            ++j;
        }
        const bool rises = s[i - 1] < s[i];
        const bool falls = j < last && s[j + 1] < s[j];
        if (rises && falls && j < last && s[i] >= lambda) {
            const std::size_t mid = i + (j - i) / 2;
            out.frames.push_back(mid);
            out.scores.push_back(s[mid]);
        }
        i = j + 1;
    }
    return out;
}

} // namespace fbmseg::signal
