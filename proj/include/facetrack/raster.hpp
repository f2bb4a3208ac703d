#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "facetrack/face_model.hpp"
#include "facetrack/geometry.hpp"

namespace ft {

// RGB image, doubles in [0,1]. Pixel centers sit at integer coordinates,
// origin at the top-left pixel, x right, y down.
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;  // height*width*3 row-major

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

    static Image filled(int w, int h, const Vec3& color);

    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    Vec3 pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
    // clamps to [0,1] on write
    void set_pixel(int x, int y, const Vec3& c);
};

// Per-texel reliability in [0,1]; entries below the unwrap threshold are
// exactly zero. nonzero_count caches the number of strictly positive texels.
struct ConfidenceMap {
    int size = 0;
    std::vector<double> w;
    int nonzero_count = 0;

    ConfidenceMap() = default;
    explicit ConfidenceMap(int sz) : size(sz), w(static_cast<size_t>(sz) * sz, 0.0) {}

    double at(int i, int j) const { return w[static_cast<size_t>(i) * size + j]; }
    void set(int i, int j, double v) { w[static_cast<size_t>(i) * size + j] = v; }
    void recount();
};

// --- sampling ---------------------------------------------------------------

// Bilinear sample with clamp-to-edge borders; integer coordinates hit pixel
// values exactly.
Vec3 sample_bilinear(const Image& img, double x, double y);

struct BilinearGrad {
    Vec3 dx, dy;  // d(color)/dx, d(color)/dy per channel
};
Vec3 sample_bilinear(const Image& img, double x, double y, BilinearGrad* grad);

Image resize_bilinear(const Image& img, int w, int h);

// --- rasterization ----------------------------------------------------------

// z-buffer over posed triangles; smaller posed z is nearer the camera.
struct DepthBuffer {
    int width = 0, height = 0;
    std::vector<double> depth;
    std::vector<int32_t> tri;  // winning triangle per pixel, -1 = none
};

DepthBuffer rasterize_depth(const std::vector<Vec3>& posed, const MeshTopology& topology,
                            int width, int height);

// Renders posed geometry over a background. Per-pixel color is
// brightness * bilinear texture sample at the pixel's barycentric UV.
Image render(const FaceGeometry& geom, const TextureMap& tex, const HeadPose& pose,
             const MeshTopology& topology, const Image& background, double brightness = 1.0);

// 3D model-space position of texel (i,j); empty when the texel lies outside
// the UV chart.
std::optional<Vec3> texel_world_position(const FaceGeometry& geom,
                                         const MeshTopology& topology, int i, int j);

// --- unwrapping -------------------------------------------------------------

// Snapshot of the per-texel visibility decisions of one unwrap, reusable to
// evaluate perturbed poses/geometry under the stop-gradient contract
// (visibility, z-buffer outcome and confidence held constant).
struct FrozenVisibility {
    struct Entry {
        uint8_t sampled = 0;  // color was taken from the image
        double conf = 0.0;    // thresholded confidence
    };
    std::vector<Entry> entries;  // T*T
};

// Differential record of one sampled texel.
struct TexelSample {
    int32_t index = 0;  // linear texel index
    Vec2 proj;          // projected image position
    BilinearGrad grad;  // image gradient at proj
};

struct Unwrapped {
    TextureMap observed;
    ConfidenceMap conf;
    std::vector<TexelSample> samples;  // texels with conf > 0
    FrozenVisibility vis;
};

// Projects every charted texel into the image with the pose and samples the
// observed color. Confidence is the cosine between the posed triangle normal
// and the viewing axis for front-facing, z-buffer-winning, in-frame texels;
// values below tau become exactly 0. When `frozen` is given, its visibility
// and confidence are reused unchanged.
Unwrapped unwrap(const Image& image, const FaceGeometry& geom, const HeadPose& pose,
                 const MeshTopology& topology, double tau,
                 const FrozenVisibility* frozen = nullptr);

// Reverse pass through the projected coordinates of the sampled texels.
// d_observed is a T*T*3 cotangent on the observed texture.
void unwrap_backward(const Unwrapped& uw, const FaceGeometry& geom, const HeadPose& pose,
                     const MeshTopology& topology, const std::vector<double>& d_observed,
                     GeomGrad& d_geom, PoseGrad& d_pose);

// --- image I/O --------------------------------------------------------------

// 8-bit binary PPM (P6), maxval 255, rows top to bottom.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Lossless float image: magic "FTIMGF1\n", u32 width, u32 height,
// then width*height*3 little-endian f64, row-major RGB.
void write_float_image(const std::string& path, const Image& img);
Image read_float_image(const std::string& path);

}  // namespace ft
