#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facetrack/geometry.hpp"

namespace ft {

using LatentCode = std::vector<double>;

// Square RGB texel grid, values in [0,1] after decoding.
struct TextureMap {
    int size = 0;
    std::vector<double> data;  // size*size*3, row-major, RGB

    TextureMap() = default;
    TextureMap(int sz, double fill = 0.0)
        : size(sz), data(static_cast<size_t>(sz) * sz * 3, fill) {}

    double& at(int i, int j, int c) { return data[(static_cast<size_t>(i) * size + j) * 3 + c]; }
    double at(int i, int j, int c) const { return data[(static_cast<size_t>(i) * size + j) * 3 + c]; }
    Vec3 texel(int i, int j) const { return {at(i, j, 0), at(i, j, 1), at(i, j, 2)}; }
    void set_texel(int i, int j, const Vec3& v) {
        at(i, j, 0) = v.x; at(i, j, 1) = v.y; at(i, j, 2) = v.z;
    }
    size_t texel_count() const { return static_cast<size_t>(size) * size; }
};

// Linear latent face model: z drives per-vertex offsets and per-texel color
// offsets around a mean. Basis columns are stored per latent dimension and
// carry unit Frobenius norm by construction.
struct DecoderModel {
    int dim = 0;                                 // latent dimension
    FaceGeometry geom_mean;
    std::vector<std::vector<Vec3>> geom_basis;   // [dim][vertex]
    TextureMap tex_mean;
    std::vector<std::vector<double>> tex_basis;  // [dim][T*T*3]
    MeshTopology topology;
    std::vector<uint32_t> landmark_indices;      // K tracked landmarks
    std::vector<uint32_t> marker_indices;        // M held-out evaluation markers

    int vertex_count() const { return static_cast<int>(geom_mean.vertices.size()); }
    int texture_size() const { return tex_mean.size; }
};

struct Decoded {
    FaceGeometry geom;
    TextureMap tex_raw;  // before clamping, kept for the clamp subgradient
    TextureMap tex;      // clamped to [0,1]
};

FaceGeometry decode_geometry(const DecoderModel& model, const LatentCode& z);
Decoded decode(const DecoderModel& model, const LatentCode& z);

std::vector<Vec3> landmark_positions(const FaceGeometry& geom,
                                     const std::vector<uint32_t>& indices);

// Reverse pass of decode: contracts geometry/texture cotangents with the
// basis. d_tex is in the clamped-output domain; texels whose raw value left
// [0,1] pass zero gradient. Either cotangent may be empty.
void decode_backward(const DecoderModel& model, const GeomGrad& d_geom,
                     const std::vector<double>& d_tex, const TextureMap& tex_raw,
                     std::vector<double>& dz);

// Deterministic synthetic identity: a grid_n x grid_n heightfield face proxy
// with nose/brow relief, smooth random deformation and texture bases, K=8
// landmark vertices and M=5 held-out marker vertices.
DecoderModel synth_identity(uint64_t seed, int d, int texture_size, int grid_n);

void save_decoder(const DecoderModel& model, const std::string& path);
DecoderModel load_decoder(const std::string& path);

}  // namespace ft
