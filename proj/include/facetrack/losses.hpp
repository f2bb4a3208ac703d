#pragma once

#include <vector>

#include "facetrack/face_model.hpp"
#include "facetrack/geometry.hpp"
#include "facetrack/raster.hpp"

namespace ft {

struct LossWeights {
    // pretraining
    double lambda_z = 1.0;
    double lambda_H = 0.05;
    double lambda_view = 1.0;
    // adaptation
    double lambda_cftc = 100.0;
    double lambda_motc = 100.0;
    double lambda_flrc = 1.0;
};

// Per-texel 3x3 color transform; no bias term.
struct ColorCorrection {
    Mat3 matrix = Mat3::identity();
};

// --- pretraining losses -----------------------------------------------------

// squared latent error ||z - z_gt||^2
double loss_z(const LatentCode& pred, const LatentCode& gt);
void loss_z_backward(const LatentCode& pred, const LatentCode& gt, double weight,
                     std::vector<double>& dz);

// mean squared landmark reprojection error against 2D targets
double loss_H(const HeadPose& pose, const FaceGeometry& geom,
              const std::vector<Vec2>& k2d, const std::vector<uint32_t>& indices);
void loss_H_backward(const HeadPose& pose, const FaceGeometry& geom,
                     const std::vector<Vec2>& k2d, const std::vector<uint32_t>& indices,
                     double weight, PoseGrad& d_pose, GeomGrad& d_geom);

// squared distance between the codes of two simultaneous views
double loss_view(const LatentCode& za, const LatentCode& zb);
void loss_view_backward(const LatentCode& za, const LatentCode& zb, double weight,
                        std::vector<double>& dza, std::vector<double>& dzb);

// --- adaptation losses ------------------------------------------------------

// Consecutive-frame texture consistency. Confidences multiply as
// W = conf_t * conf_prev per texel, entries below tau are zeroed, and the
// loss is the W-weighted mean squared color difference over the nonzero
// texels (weights enter linearly against the squared differences).
double loss_cftc(const TextureMap& obs_t, const ConfidenceMap& conf_t,
                 const TextureMap& obs_prev, const ConfidenceMap& conf_prev,
                 double tau = 0.0);
void loss_cftc_backward(const TextureMap& obs_t, const ConfidenceMap& conf_t,
                        const TextureMap& obs_prev, const ConfidenceMap& conf_prev,
                        double tau, double weight, std::vector<double>& d_obs_t,
                        std::vector<double>& d_obs_prev);

TextureMap apply_color_correction(const ColorCorrection& cc, const TextureMap& tex);

// Model-to-observation texture consistency under the color correction.
// Returns 0 and sets *all_zero when no texel is confident.
double loss_motc(const TextureMap& obs, const ConfidenceMap& conf,
                 const TextureMap& model_tex, const ColorCorrection& cc,
                 bool* all_zero = nullptr);
void loss_motc_backward(const TextureMap& obs, const ConfidenceMap& conf,
                        const TextureMap& model_tex, const ColorCorrection& cc,
                        double weight, std::vector<double>& d_obs,
                        std::vector<double>& d_model_tex, Mat3& d_cc);

// Landmark reprojection against detected (not ground-truth) landmarks;
// identical form to loss_H.
double loss_flrc(const std::vector<Vec2>& k2d_detected, const HeadPose& pose,
                 const FaceGeometry& geom, const std::vector<uint32_t>& indices);

// --- combined adaptation loss -----------------------------------------------

// Everything derived from one frame on the current encoder outputs.
struct FrameState {
    const Image* image = nullptr;
    std::vector<Vec2> detections;  // empty when absent
    LatentCode z;
    HeadPose pose;
    FaceGeometry geom;
    TextureMap tex_raw;  // decoded texture before clamping
    TextureMap tex;      // clamped
    Unwrapped uw;
};

FrameState make_frame_state(const DecoderModel& model, const LatentCode& z,
                            const HeadPose& pose, const Image& image,
                            std::vector<Vec2> detections, double tau,
                            const FrozenVisibility* frozen = nullptr);

struct DaBreakdown {
    double cftc = 0.0, motc = 0.0, flrc = 0.0, total = 0.0;
    bool motc_all_zero = false;
};

DaBreakdown loss_da(const DecoderModel& model, const FrameState& prev,
                    const FrameState& cur, const ColorCorrection& cc,
                    const LossWeights& weights, double tau);

struct DaGrads {
    std::vector<double> dz_prev, dz_cur;
    PoseGrad dpose_prev, dpose_cur;
    Mat3 d_cc = Mat3::zero();
};

// Forward values plus reverse-mode gradients w.r.t. both frames' (z, pose)
// and the color matrix. Visibility, z-buffer outcomes, confidences and the
// texel table are constants of the pass.
DaBreakdown loss_da_backward(const DecoderModel& model, const FrameState& prev,
                             const FrameState& cur, const ColorCorrection& cc,
                             const LossWeights& weights, double tau, DaGrads& grads);

}  // namespace ft
