#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facetrack/face_model.hpp"
#include "facetrack/geometry.hpp"
#include "facetrack/raster.hpp"

namespace ft {

struct DenseLayer {
    int in = 0, out = 0;
    std::vector<double> w;  // out*in, row-major
    std::vector<double> b;  // out
};

// Image-to-(z, H) regressor. A frozen affine stage maps the 32x32 downsample
// of the input image to generic features; the trainable regression stage is a
// small tanh MLP over [features ++ normalized landmarks] whose linear output
// splits into z and the raw pose (scale = exp(raw_scale)). Only the
// regression stage is ever trained.
struct EncoderModel {
    int input_res = 128;
    int frozen_res = 32;
    int feat_dim = 256;
    int latent_dim = 16;
    int num_landmarks = 8;
    std::vector<double> frozen_w;   // feat_dim x (frozen_res^2*3)
    std::vector<double> frozen_b;   // feat_dim
    std::vector<DenseLayer> layers; // regression stage, last layer linear

    int regression_input_dim() const { return feat_dim + 2 * num_landmarks; }
    int output_dim() const { return latent_dim + 6; }
};

EncoderModel make_encoder(uint64_t seed, int input_res, int latent_dim, int num_landmarks,
                          int feat_dim = 256, const std::vector<int>& hidden = {128, 64});

// Frozen stage: bilinear 32x32 downsample flattened RGB, then the fixed
// affine map. Accepts any image resolution.
std::vector<double> frozen_features(const EncoderModel& model, const Image& image);

// Recorded activations of one forward pass, consumed by encode_backward.
struct EncoderState {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
    std::vector<double> raw_out;
    double scale = 1.0;
    bool valid = false;
};

struct EncodeResult {
    LatentCode z;
    HeadPose pose;
};

// k2d are detected landmark pixels, normalized internally to [-1,1]; an
// empty vector feeds a zero landmark slice (the test-time setting).
EncodeResult encode_from_features(const EncoderModel& model,
                                  const std::vector<double>& features,
                                  const std::vector<Vec2>& k2d,
                                  EncoderState* state = nullptr);
EncodeResult encode(const EncoderModel& model, const Image& image,
                    const std::vector<Vec2>& k2d, EncoderState* state = nullptr);

// Gradients (and momentum buffers) shaped like the regression stage.
struct EncoderGrads {
    std::vector<DenseLayer> layers;

    void zero();
    double squared_norm() const;
    void scale(double s);
    void add_scaled(const EncoderGrads& other, double s);
};

EncoderGrads make_grads(const EncoderModel& model);

// Exact reverse pass for the regression stage; the frozen stage receives no
// gradient. dz/dpose are cotangents on (z, H); the exp-scale chain is applied
// internally. Throws if the state is not a recorded forward pass.
void encode_backward(const EncoderModel& model, const EncoderState& state,
                     const std::vector<double>& dz, const PoseGrad& dpose,
                     EncoderGrads& grads);

// Versioned binary checkpoint with an FNV-1a trailer; corrupt or truncated
// files are rejected.
void save_encoder(const EncoderModel& model, const std::string& path);
EncoderModel load_encoder(const std::string& path);

}  // namespace ft
