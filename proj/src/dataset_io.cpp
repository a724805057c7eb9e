#include "fbmseg/dataset_io.hpp"

#include "fbmseg/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace fbmseg::io {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

long long parse_int(std::string_view s, std::size_t line) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line) + ": bad integer '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

} // namespace

void write_coords_csv(std::ostream& out, const std::vector<Trajectory>& trajs) {
    out << "traj_idx,frame,x,y\n";
    for (const auto& t : trajs) {
        for (std::size_t f = 0; f < t.coords.size(); ++f) {
            out << t.id << ',' << f << ',' << format_double(t.coords[f].x) << ',' << format_double(t.coords[f].y)
                << '\n';
        }
    }
}

std::vector<Trajectory> read_coords_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty coordinate file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "traj_idx,frame,x,y") {
        throw DataError("coordinate file header must be 'traj_idx,frame,x,y'");
    }
    std::vector<Trajectory> trajs;
    std::map<std::int64_t, std::size_t> index;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != 4) {
            throw DataError("line " + std::to_string(lineno) + ": expected 4 fields");
        }
        const auto id = static_cast<std::int64_t>(parse_int(fields[0], lineno));
        const auto frame = parse_int(fields[1], lineno);
        auto [it, fresh] = index.emplace(id, trajs.size());
        if (fresh) {
            trajs.push_back(Trajectory{id, {}, std::nullopt});
        }
        auto& t = trajs[it->second];
        if (frame != static_cast<long long>(t.coords.size())) {
            throw DataError("line " + std::to_string(lineno) + ": frames of trajectory " + std::to_string(id) +
                            " must be contiguous from 0");
        }
        t.coords.push_back({parse_double(fields[2], lineno), parse_double(fields[3], lineno)});
    }
    return trajs;
}

nlohmann::json truth_to_json(const std::vector<Trajectory>& trajs) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : trajs) {
        nlohmann::json segs = nlohmann::json::array();
        if (t.truth) {
            for (const auto& s : *t.truth) {
                segs.push_back({{"cp", s.start}, {"alpha", s.state.alpha}, {"k", s.state.k}});
            }
        }
        list.push_back({{"traj_idx", t.id}, {"T", t.coords.size()}, {"segments", segs}});
    }
    return {{"trajectories", list}};
}

std::vector<metrics::TruthRecord> truth_from_json(const nlohmann::json& j) {
    std::vector<metrics::TruthRecord> out;
    try {
        for (const auto& t : j.at("trajectories")) {
            metrics::TruthRecord r;
            r.traj_id = t.at("traj_idx");
            r.length = t.at("T");
            std::size_t prev = 0;
            bool first = true;
            for (const auto& s : t.at("segments")) {
                TruthSegment seg;
                seg.start = s.at("cp");
                seg.state.alpha = s.at("alpha");
                seg.state.k = s.at("k");
                if (first ? seg.start != 0 : (seg.start <= prev || seg.start >= r.length)) {
                    throw DataError("ground truth of trajectory " + std::to_string(r.traj_id) +
                                    ": segments must start at 0 and increase inside (0, T)");
                }
                prev = seg.start;
                first = false;
                r.segments.push_back(seg);
            }
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed ground-truth JSON: ") + e.what());
    }
    return out;
}

void attach_truth(std::vector<Trajectory>& trajs, const std::vector<metrics::TruthRecord>& truth) {
    std::map<std::int64_t, const metrics::TruthRecord*> by_id;
    for (const auto& r : truth) {
        by_id[r.traj_id] = &r;
    }
    for (auto& t : trajs) {
        auto it = by_id.find(t.id);
        if (it == by_id.end()) {
            continue;
        }
        if (it->second->length != t.coords.size()) {
            throw DataError("ground-truth length mismatch for trajectory " + std::to_string(t.id));
        }
        t.truth = it->second->segments;
    }
}

nlohmann::json predictions_to_json(const std::vector<merge::SegmentedTrajectory>& preds) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : preds) {
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& s : p.segments) {
            segs.push_back({{"start", s.start},
                            {"end", s.end},
                            {"alpha", s.estimate.alpha},
                            {"k", std::exp(s.estimate.log_k)},
                            {"log_k", s.estimate.log_k},
                            {"state", s.cluster ? nlohmann::json(*s.cluster) : nlohmann::json(nullptr)}});
        }
        list.push_back({{"traj_idx", p.traj_id}, {"T", p.length}, {"changepoints", p.changepoints()}, {"segments", segs}});
    }
    return {{"trajectories", list}};
}

std::vector<merge::SegmentedTrajectory> predictions_from_json(const nlohmann::json& j) {
    std::vector<merge::SegmentedTrajectory> out;
    try {
        for (const auto& t : j.at("trajectories")) {
            merge::SegmentedTrajectory p;
            p.traj_id = t.at("traj_idx");
            p.length = t.at("T");
            std::size_t expect = 0;
            for (const auto& s : t.at("segments")) {
                Segment seg;
                seg.traj_id = p.traj_id;
                seg.start = s.at("start");
                seg.end = s.at("end");
                seg.estimate.alpha = s.at("alpha");
                seg.estimate.log_k = s.contains("log_k") ? s.at("log_k").get<double>() : std::log(s.at("k").get<double>());
                if (s.contains("state") && !s.at("state").is_null()) {
                    seg.cluster = s.at("state").get<int>();
                }
                if (seg.start != expect || seg.end <= seg.start) {
                    throw DataError("predicted segments of trajectory " + std::to_string(p.traj_id) +
                                    " do not partition [0, T)");
                }
                expect = seg.end;
                p.segments.push_back(seg);
            }
            if (expect != p.length) {
                throw DataError("predicted segments of trajectory " + std::to_string(p.traj_id) + " do not reach T");
            }
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed prediction JSON: ") + e.what());
    }
    return out;
}

void write_flat_predictions(std::ostream& out, const std::vector<merge::SegmentedTrajectory>& preds) {
    for (const auto& p : preds) {
        out << p.traj_id;
        for (const auto& s : p.segments) {
            out << ',' << format_double(std::exp(s.estimate.log_k)) << ',' << format_double(s.estimate.alpha) << ','
                << (s.cluster ? *s.cluster : -1) << ',' << s.end;
        }
        out << '\n';
    }
}

void write_signal_csv(std::ostream& out, const signal::Signal& sig) {
    out << "frame,S";
    for (const auto& [w, v] : sig.components) {
        out << ",V_w" << w;
    }
    out << '\n';
    for (std::size_t f = 0; f < sig.s.size(); ++f) {
        out << f << ',' << format_double(sig.s[f]);
        for (const auto& [w, v] : sig.components) {
            out << ',' << format_double(v[f]);
        }
        out << '\n';
    }
}

void write_clusters_csv(std::ostream& out, const std::vector<clustering::MixturePoint>& points,
                        const clustering::MixtureModel& model) {
    out << "alpha_hat,log_k_hat,T_sub,component\n";
    for (const auto& p : points) {
        out << format_double(p.alpha_hat) << ',' << format_double(p.log_k_hat) << ',' << p.length << ','
            << clustering::argmax_component(model, {p.alpha_hat, p.log_k_hat}) << '\n';
    }
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open '" + path + "' for writing");
    }
    out << text;
    if (!out) {
        throw DataError("failed writing '" + path + "'");
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace fbmseg::io
