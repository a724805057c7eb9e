#pragma once

#include "fbmseg/clustering.hpp"
#include "fbmseg/merge.hpp"
#include "fbmseg/metrics.hpp"
#include "fbmseg/signal.hpp"
#include "fbmseg/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fbmseg::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Coordinates: CSV with header `traj_idx,frame,x,y`, one row per frame,
// frames 0..T-1 in order, trajectories in ascending traj_idx.
void write_coords_csv(std::ostream& out, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_coords_csv(std::istream& in);

// Ground truth: {"trajectories":[{"traj_idx":i,"T":n,
//                 "segments":[{"cp":0,"alpha":a,"k":k},...]}]}
nlohmann::json truth_to_json(const std::vector<Trajectory>& trajs);
std::vector<metrics::TruthRecord> truth_from_json(const nlohmann::json& j);
/// Attaches truth segments to trajectories with matching ids.
void attach_truth(std::vector<Trajectory>& trajs, const std::vector<metrics::TruthRecord>& truth);

// Predictions: {"trajectories":[{"traj_idx":i,"T":n,"changepoints":[...],
//   "segments":[{"start":s,"end":e,"alpha":a,"k":K,"state":c}]}]}
nlohmann::json predictions_to_json(const std::vector<merge::SegmentedTrajectory>& preds);
std::vector<merge::SegmentedTrajectory> predictions_from_json(const nlohmann::json& j);

/// Flat rows `traj_idx,K1,alpha1,state1,cp1,K2,...` where the last cp is T.
void write_flat_predictions(std::ostream& out, const std::vector<merge::SegmentedTrajectory>& preds);

/// `frame,S,V_w20,...` for one trajectory.
void write_signal_csv(std::ostream& out, const signal::Signal& sig);

/// `alpha_hat,log_k_hat,T_sub,component`.
void write_clusters_csv(std::ostream& out, const std::vector<clustering::MixturePoint>& points,
                        const clustering::MixtureModel& model);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace fbmseg::io
