#pragma once

#include <string>
#include <vector>

#include "facetrack/encoder.hpp"
#include "facetrack/face_model.hpp"
#include "facetrack/synthdata.hpp"
#include "facetrack/trainer.hpp"

namespace ft {

struct StabilityResult {
    std::vector<double> per_frame;  // one score per interior frame
    double mean = 0.0;
};

// Temporal smoothness over triples of consecutive frames: the mean per-vertex
// ratio of traveled path to straight-line displacement. 1 is perfectly
// smooth. A vertex whose two steps are both below eps contributes exactly 1;
// a vertex with moving steps but near-zero straight-line displacement
// contributes numerator/eps capped at 100.
StabilityResult stability(const std::vector<std::vector<Vec3>>& vertex_seq,
                          double eps = 1e-8);

// Mean Euclidean distance between projected marker vertices and the
// annotated 2D markers, over all frames.
double marker_reprojection_error(const TrackResult& track,
                                 const std::vector<uint32_t>& marker_indices,
                                 const std::vector<std::vector<Vec2>>& marker_gt);

// Mean 2D distance of all projected vertices between a degraded-resolution
// track and the full-resolution reference, both expressed in the reference
// pixel frame.
double relative_reprojection_error(const TrackResult& probe, const TrackResult& reference);

// posed vertices of every tracked frame, the input to stability()
std::vector<std::vector<Vec3>> posed_vertex_sequence(const TrackResult& track);

struct ArmSpec {
    std::string name;
    bool run_adapt = true;
    TrainConfig config;
    bool online = false;
};

// no_DA / flrc_only / full_DA with shared seed and defaults
std::vector<ArmSpec> default_arms(uint64_t seed);

struct ReportRow {
    std::string arm;
    double stability = 0.0;
    double reprojection = 0.0;
};

// Runs each arm from the same pretrained encoder, tracks the sequence, and
// reports stability and marker reprojection per arm. Optionally writes
// report.csv and one overlay strip image per arm.
std::vector<ReportRow> comparison_report(const DecoderModel& decoder,
                                         const EncoderModel& pretrained,
                                         const WildSequence& wild,
                                         const std::vector<ArmSpec>& arms,
                                         const std::string& csv_path = "",
                                         const std::string& overlay_dir = "");

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace ft
