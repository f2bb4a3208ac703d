#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facetrack/face_model.hpp"
#include "facetrack/geometry.hpp"
#include "facetrack/raster.hpp"

namespace ft {

// Smooth random-walk parameters for the synthetic performance trajectories.
struct TrajectoryParams {
    double z_sigma = 0.10;
    double z_revert = 0.12;
    double euler_amp = 0.18;     // rad
    double scale_jitter = 0.04;  // relative log-scale amplitude
    double trans_amp = 5.0;      // px
};

// Appearance gap between the neutral "lab" domain and a "wild" recording.
struct DomainSpec {
    Mat3 color_matrix = Mat3::identity();
    double brightness = 1.0;
    uint64_t clutter_seed = 0;  // 0 = plain background
    double noise_sigma = 0.0;
    double detect_sigma = 1.0;  // landmark detection noise, px
    TrajectoryParams traj;
};

// The default gap used by the synthetic benchmark: a well-conditioned global
// color transform, dimming, cluttered background and mild sensor noise.
DomainSpec benchmark_domain_gap();

struct LabDataset {
    int views = 0;
    int resolution = 0;
    std::vector<Image> images;              // frame-major: index = t*views + v
    std::vector<LatentCode> z_gt;           // per frame, shared across views
    std::vector<HeadPose> pose_gt;          // t*views + v
    std::vector<std::vector<Vec2>> k2d_gt;  // t*views + v, exact projections

    int frame_count() const { return views > 0 ? static_cast<int>(z_gt.size()) : 0; }
};

struct WildSequence {
    int resolution = 0;
    std::vector<Image> frames;
    std::vector<std::vector<Vec2>> detections;  // noisy landmark projections
    std::vector<std::vector<Vec2>> marker_gt;   // exact marker projections (evaluation only)
    // hidden ground truth from the sidecar; absent sidecar leaves these empty
    bool has_gt = false;
    std::vector<LatentCode> gt_z;
    std::vector<HeadPose> gt_pose;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

LabDataset generate_lab(const DecoderModel& model, int frames, int views,
                        int resolution, uint64_t seed);

WildSequence generate_wild(const DecoderModel& model, const DomainSpec& spec,
                           int frames, int resolution, uint64_t seed);

// Directory layout (both dataset kinds):
//   wild:  frames/XXXXXX.ppm, landmarks.csv, markers.csv, sidecar_gt.bin (optional), meta.txt
//   lab:   meta.txt plus viewV/{frames/XXXXXX.ppm, landmarks.csv, sidecar_gt.bin}
// Images are 8-bit PPM; CSVs carry a header row and full-precision reals.
void save_wild(const WildSequence& seq, const std::string& dir, bool write_sidecar = true);
WildSequence load_wild(const std::string& dir);

void save_lab(const LabDataset& ds, const std::string& dir);
LabDataset load_lab(const std::string& dir);

// Flat key=value file describing a DomainSpec; unknown keys are rejected.
DomainSpec load_domain_spec(const std::string& path);

}  // namespace ft
