#include "facetrack/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace ft {

double Vec2::norm() const { return std::sqrt(x * x + y * y); }
double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Mat3 Mat3::identity() {
    Mat3 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
            r.m[i][j] = s;
        }
    return r;
}

Mat3 Mat3::operator*(double s) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j] * s;
    return r;
}

Mat3 Mat3::operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j] + o.m[i][j];
    return r;
}

Mat3 Mat3::operator-(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j] - o.m[i][j];
    return r;
}

Mat3 Mat3::transpose() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
}

double Mat3::det() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 Mat3::inverse() const {
    const double d = det();
    if (std::abs(d) < 1e-300) throw std::runtime_error("Mat3::inverse: singular matrix");
    const double id = 1.0 / d;
    Mat3 r;
    r.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * id;
    r.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * id;
    r.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * id;
    r.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * id;
    r.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * id;
    r.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * id;
    r.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * id;
    r.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * id;
    r.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * id;
    return r;
}

double Mat3::frobenius() const {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += m[i][j] * m[i][j];
    return std::sqrt(s);
}

Mat3 euler_to_rotation(const Vec3& euler) {
    const double cx = std::cos(euler.x), sx = std::sin(euler.x);
    const double cy = std::cos(euler.y), sy = std::sin(euler.y);
    const double cz = std::cos(euler.z), sz = std::sin(euler.z);

    Mat3 rx = Mat3::identity();
    rx.m[1][1] = cx; rx.m[1][2] = -sx;
    rx.m[2][1] = sx; rx.m[2][2] = cx;

    Mat3 ry = Mat3::identity();
    ry.m[0][0] = cy; ry.m[0][2] = sy;
    ry.m[2][0] = -sy; ry.m[2][2] = cy;

    Mat3 rz = Mat3::identity();
    rz.m[0][0] = cz; rz.m[0][1] = -sz;
    rz.m[1][0] = sz; rz.m[1][1] = cz;

    // X applied first: v' = Rz * Ry * Rx * v
    return rz * (ry * rx);
}

std::array<Mat3, 3> euler_rotation_derivs(const Vec3& euler) {
    const double cx = std::cos(euler.x), sx = std::sin(euler.x);
    const double cy = std::cos(euler.y), sy = std::sin(euler.y);
    const double cz = std::cos(euler.z), sz = std::sin(euler.z);

    Mat3 rx = Mat3::identity();
    rx.m[1][1] = cx; rx.m[1][2] = -sx;
    rx.m[2][1] = sx; rx.m[2][2] = cx;

    Mat3 ry = Mat3::identity();
    ry.m[0][0] = cy; ry.m[0][2] = sy;
    ry.m[2][0] = -sy; ry.m[2][2] = cy;

    Mat3 rz = Mat3::identity();
    rz.m[0][0] = cz; rz.m[0][1] = -sz;
    rz.m[1][0] = sz; rz.m[1][1] = cz;

    Mat3 drx = Mat3::zero();
    drx.m[1][1] = -sx; drx.m[1][2] = -cx;
    drx.m[2][1] = cx;  drx.m[2][2] = -sx;

    Mat3 dry = Mat3::zero();
    dry.m[0][0] = -sy; dry.m[0][2] = cy;
    dry.m[2][0] = -cy; dry.m[2][2] = -sy;

    Mat3 drz = Mat3::zero();
    drz.m[0][0] = -sz; drz.m[0][1] = -cz;
    drz.m[1][0] = cz;  drz.m[1][1] = -sz;

    return {rz * (ry * drx), rz * (dry * rx), drz * (ry * rx)};
}

Vec3 apply_pose_point(const HeadPose& pose, const Mat3& rot, const Vec3& p) {
    Vec3 r = rot * p;
    return {pose.scale * r.x + pose.trans.x, pose.scale * r.y + pose.trans.y,
            pose.scale * r.z};
}

std::vector<Vec3> apply_pose(const FaceGeometry& geom, const HeadPose& pose) {
    const Mat3 rot = euler_to_rotation(pose.euler);
    std::vector<Vec3> out(geom.vertices.size());
    for (size_t i = 0; i < geom.vertices.size(); ++i)
        out[i] = apply_pose_point(pose, rot, geom.vertices[i]);
    return out;
}

std::vector<Vec2> weak_project(const std::vector<Vec3>& points) {
    std::vector<Vec2> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) out[i] = points[i].xy();
    return out;
}

ProjectionJacobian projection_jacobian(const HeadPose& pose, const Mat3& rot,
                                       const std::array<Mat3, 3>& drot,
                                       const Vec3& model_point) {
    ProjectionJacobian j;
    const Vec3 rp = rot * model_point;
    j.d_scale = {rp.x, rp.y};
    for (int k = 0; k < 3; ++k) {
        const Vec3 dp = drot[k] * model_point;
        j.d_euler[k] = {pose.scale * dp.x, pose.scale * dp.y};
    }
    j.d_point_row_u = rot.row(0) * pose.scale;
    j.d_point_row_v = rot.row(1) * pose.scale;
    return j;
}

void accumulate_projection_grad(const HeadPose& pose, const Mat3& rot,
                                const std::array<Mat3, 3>& drot,
                                const Vec3& model_point, const Vec2& g,
                                PoseGrad& pose_grad, Vec3* point_grad) {
    const Vec3 rp = rot * model_point;
    pose_grad.d_scale += g.x * rp.x + g.y * rp.y;
    for (int k = 0; k < 3; ++k) {
        const Vec3 dp = drot[k] * model_point;
        double* e = k == 0 ? &pose_grad.d_euler.x
                  : k == 1 ? &pose_grad.d_euler.y
                           : &pose_grad.d_euler.z;
        *e += pose.scale * (g.x * dp.x + g.y * dp.y);
    }
    pose_grad.d_trans += g;
    if (point_grad) {
        *point_grad += rot.row(0) * (pose.scale * g.x) + rot.row(1) * (pose.scale * g.y);
    }
}

static bool barycentric_in_triangle(const Vec2& p, const Vec2& a, const Vec2& b,
                                    const Vec2& c, double* w0, double* w1, double* w2) {
    const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (std::abs(det) < 1e-18) return false;
    const double inv = 1.0 / det;
    const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) * inv;
    const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) * inv;
    const double l0 = 1.0 - l1 - l2;
    const double eps = -1e-12;
    if (l0 < eps || l1 < eps || l2 < eps) return false;
    *w0 = l0; *w1 = l1; *w2 = l2;
    return true;
}

void build_texel_table(MeshTopology& topology, int texture_size) {
    topology.texture_size = texture_size;
    topology.texel_table.assign(static_cast<size_t>(texture_size) * texture_size, TexelRef{});
    for (int i = 0; i < texture_size; ++i) {
        for (int j = 0; j < texture_size; ++j) {
            const Vec2 p{(j + 0.5) / texture_size, (i + 0.5) / texture_size};
            TexelRef& ref = topology.texel_table[static_cast<size_t>(i) * texture_size + j];
            for (size_t t = 0; t < topology.triangles.size(); ++t) {
                const auto& tri = topology.triangles[t];
                double w0, w1, w2;
                if (barycentric_in_triangle(p, topology.uv[tri[0]], topology.uv[tri[1]],
                                            topology.uv[tri[2]], &w0, &w1, &w2)) {
                    ref.tri = static_cast<int32_t>(t);
                    ref.w0 = w0; ref.w1 = w1; ref.w2 = w2;
                    break;
                }
            }
        }
    }
}

}  // namespace ft
