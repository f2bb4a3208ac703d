#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "facetrack/encoder.hpp"
#include "facetrack/face_model.hpp"
#include "facetrack/losses.hpp"
#include "facetrack/synthdata.hpp"

namespace ft {

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int epochs = 300;
    int batch_size = 1;
    uint64_t seed = 1;
    LossWeights weights;
    double tau = 0.2;
    bool deterministic = true;  // fixed summation/sampling order (always honored)
    double grad_clip = 10.0;    // global norm; <= 0 disables
    double landmark_dropout = 0.1;
    int checkpoint_every = 0;  // epochs, 0 = off
    std::string checkpoint_dir;
};

TrainConfig default_pretrain_config();
TrainConfig default_adapt_config();

// Thrown when an objective stops being finite; the CLI maps it to a nonzero
// exit code.
struct NonFiniteLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PretrainStepLog {
    int step = 0;
    double loss_z = 0.0, loss_H = 0.0, loss_view = 0.0, total = 0.0;
};
struct PretrainResult {
    std::vector<PretrainStepLog> history;
};

// Supervised pretraining in the lab domain: SGD with momentum on
// lambda_z*L_z + lambda_H*L_H + lambda_view*L_view, sampling one time
// instant and two random views per step.
PretrainResult pretrain(EncoderModel& encoder, const DecoderModel& decoder,
                        const LabDataset& lab, const TrainConfig& config,
                        const std::string& history_csv = "");

struct ColorFit {
    ColorCorrection cc;
    bool degenerate = false;  // identity fallback was taken
};

// Weighted least squares M = (sum w*o*m^T)(sum w*m*m^T)^-1 over confident
// texels: the exact minimizer of loss_motc for fixed textures. Falls back to
// the identity when the normal matrix is near singular.
ColorFit fit_color_correction(const TextureMap& obs, const ConfidenceMap& conf,
                              const TextureMap& model_tex);

struct AdaptStepLog {
    int step = 0;
    double cftc = 0.0, motc = 0.0, flrc = 0.0, total = 0.0;
};
struct AdaptResult {
    std::vector<AdaptStepLog> history;
    ColorCorrection cc;
};

// Self-supervised adaptation over consecutive frame pairs: refit the color
// correction on frame t, take one SGD step on the regression stage per pair.
// Offline mode sweeps all pairs for config.epochs; online does one ordered
// pass.
AdaptResult adapt(EncoderModel& encoder, const DecoderModel& decoder,
                  const WildSequence& wild, const TrainConfig& config,
                  bool online = false, const std::string& history_csv = "");

struct TrackResult {
    std::vector<LatentCode> z;
    std::vector<HeadPose> poses;
    std::vector<FaceGeometry> geoms;
    std::vector<TextureMap> corrected_tex;  // cc applied to the decoded texture
};

// Test-time feed-forward pass; the landmark input slice is zeroed, no losses
// or detections are involved.
TrackResult track(const EncoderModel& encoder, const DecoderModel& decoder,
                  const ColorCorrection& cc, const std::vector<Image>& frames);

// Tracked face composited over the input frame.
Image render_overlay(const DecoderModel& decoder, const FaceGeometry& geom,
                     const TextureMap& corrected_tex, const HeadPose& pose,
                     const Image& frame);

void save_color_correction(const ColorCorrection& cc, const std::string& path);
ColorCorrection load_color_correction(const std::string& path);

}  // namespace ft
