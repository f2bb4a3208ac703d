#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ft {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const;
    Vec2 xy() const { return {x, y}; }
};

struct Mat3 {
    // row-major
    double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

    static Mat3 identity();
    static Mat3 zero() { return Mat3{}; }

    Vec3 row(int r) const { return {m[r][0], m[r][1], m[r][2]}; }
    Vec3 col(int c) const { return {m[0][c], m[1][c], m[2][c]}; }

    Vec3 operator*(const Vec3& v) const;
    Mat3 operator*(const Mat3& o) const;
    Mat3 operator*(double s) const;
    Mat3 operator+(const Mat3& o) const;
    Mat3 operator-(const Mat3& o) const;
    Mat3 transpose() const;
    double det() const;
    // adjugate-based inverse; throws on |det| below 1e-300
    Mat3 inverse() const;
    double frobenius() const;
};

// Rigid head placement under weak perspective: uniform scale in pixels per
// model unit, Euler rotation applied in fixed X-then-Y-then-Z order, and a
// 2D image-plane translation in pixels. Image convention: origin at the
// top-left pixel center, x right, y down.
struct HeadPose {
    double scale = 1.0;
    Vec3 euler{0.0, 0.0, 0.0};
    Vec2 trans{0.0, 0.0};
};

// Rigid-motion-free vertex positions in model units.
struct FaceGeometry {
    std::vector<Vec3> vertices;
};

// Per-texel barycentric handle into the mesh; tri < 0 marks texels outside
// the UV chart.
struct TexelRef {
    int32_t tri = -1;
    double w0 = 0.0, w1 = 0.0, w2 = 0.0;
};

struct MeshTopology {
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<Vec2> uv;  // per vertex, in [0,1]^2
    int texture_size = 0;
    std::vector<TexelRef> texel_table;  // texture_size^2 entries, row-major
};

// Fills topology.texel_table for the given texture size: each texel center
// is located in UV space and assigned the containing triangle with its
// barycentric weights.
void build_texel_table(MeshTopology& topology, int texture_size);

// Rotation matrix for Euler angles applied X-then-Y-then-Z: R = Rz*Ry*Rx.
Mat3 euler_to_rotation(const Vec3& euler);

// dR/d(euler.x), dR/d(euler.y), dR/d(euler.z)
std::array<Mat3, 3> euler_rotation_derivs(const Vec3& euler);

Vec3 apply_pose_point(const HeadPose& pose, const Mat3& rot, const Vec3& p);

std::vector<Vec3> apply_pose(const FaceGeometry& geom, const HeadPose& pose);

inline Vec2 weak_project(const Vec3& p) { return {p.x, p.y}; }

std::vector<Vec2> weak_project(const std::vector<Vec3>& points);

// Jacobian of weak_project(apply_pose_point(...)) at one model-space point.
struct ProjectionJacobian {
    Vec2 d_scale;          // d(u,v)/d scale
    Vec2 d_euler[3];       // d(u,v)/d euler_k
    // d(u,v)/d trans is the identity
    Vec3 d_point_row_u;    // du/d(point xyz) = scale * R row 0
    Vec3 d_point_row_v;    // dv/d(point xyz) = scale * R row 1
};

ProjectionJacobian projection_jacobian(const HeadPose& pose, const Mat3& rot,
                                       const std::array<Mat3, 3>& drot,
                                       const Vec3& model_point);

// Gradient accumulators used by the reverse-mode passes.
struct PoseGrad {
    double d_scale = 0.0;
    Vec3 d_euler{0.0, 0.0, 0.0};
    Vec2 d_trans{0.0, 0.0};

    PoseGrad& operator+=(const PoseGrad& o) {
        d_scale += o.d_scale;
        d_euler += o.d_euler;
        d_trans += o.d_trans;
        return *this;
    }
};

using GeomGrad = std::vector<Vec3>;  // one entry per vertex

// Scatters an image-plane gradient g at a projected model point into the
// pose gradient and (optionally) the model-point gradient.
void accumulate_projection_grad(const HeadPose& pose, const Mat3& rot,
                                const std::array<Mat3, 3>& drot,
                                const Vec3& model_point, const Vec2& g,
                                PoseGrad& pose_grad, Vec3* point_grad);

}  // namespace ft
