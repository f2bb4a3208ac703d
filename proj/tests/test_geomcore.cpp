#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "facetrack/geometry.hpp"
#include "facetrack/rng.hpp"
#include "test_util.hpp"

using namespace ft;

namespace {
constexpr double kPi = 3.14159265358979323846;

HeadPose random_pose(Rng& rng) {
    HeadPose p;
    p.scale = std::exp(rng.uniform(-0.5, 2.0));
    p.euler = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
    p.trans = {rng.uniform(-30, 30), rng.uniform(-30, 30)};
    return p;
}
}  // namespace

TEST_CASE("euler_to_rotation: zero rotation is the identity") {
    const Mat3 r = euler_to_rotation({0, 0, 0});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(r.m[i][j] == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("euler_to_rotation: z quarter turn maps x axis to y axis") {
    const Mat3 r = euler_to_rotation({0, 0, kPi / 2});
    const Vec3 v = r * Vec3{1, 0, 0};
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("euler_to_rotation: orthonormal with determinant +1") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 e{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const Mat3 r = euler_to_rotation(e);
        const Mat3 rtr = r.transpose() * r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(std::abs(rtr.m[i][j] - (i == j ? 1.0 : 0.0)) < 1e-12);
        CHECK(r.det() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("apply_pose: identity pose leaves vertices unchanged") {
    FaceGeometry g;
    g.vertices = {{1, 2, 3}, {-0.5, 0.25, 0}};
    const auto out = apply_pose(g, HeadPose{});
    CHECK(out[0].x == 1.0);
    CHECK(out[0].y == 2.0);
    CHECK(out[0].z == 3.0);
}

TEST_CASE("apply_pose: scale and translation arithmetic") {
    FaceGeometry g;
    g.vertices = {{1, 2, 3}};
    HeadPose p;
    p.scale = 2.0;
    p.trans = {1.0, 0.0};
    const auto out = apply_pose(g, p);
    CHECK(out[0].x == doctest::Approx(3.0));
    CHECK(out[0].y == doctest::Approx(4.0));
    CHECK(out[0].z == doctest::Approx(6.0));
}

TEST_CASE("apply_pose: pairwise distances scale exactly by the pose scale") {
    Rng rng(7);
    FaceGeometry g;
    for (int i = 0; i < 12; ++i)
        g.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int trial = 0; trial < 10; ++trial) {
        const HeadPose p = random_pose(rng);
        const auto out = apply_pose(g, p);
        for (size_t a = 0; a < g.vertices.size(); ++a)
            for (size_t b = a + 1; b < g.vertices.size(); ++b) {
                const double d0 = (g.vertices[a] - g.vertices[b]).norm();
                const double d1 = (out[a] - out[b]).norm();
                CHECK(d1 == doctest::Approx(p.scale * d0).epsilon(1e-10));
            }
    }
}

TEST_CASE("weak_project: drops z") {
    CHECK(weak_project(Vec3{1, 2, 3}).x == 1.0);
    CHECK(weak_project(Vec3{1, 2, 3}).y == 2.0);
    CHECK(weak_project(Vec3{0, 0, -5}).x == 0.0);
    CHECK(weak_project(Vec3{0, 0, -5}).y == 0.0);
    // z translation is invisible
    CHECK(weak_project(Vec3{4, 5, 100}).x == weak_project(Vec3{4, 5, -3}).x);
}

TEST_CASE("projection after identity pose equals geometry x/y exactly") {
    Rng rng(3);
    FaceGeometry g;
    for (int i = 0; i < 8; ++i)
        g.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const auto proj = weak_project(apply_pose(g, HeadPose{}));
    for (size_t i = 0; i < g.vertices.size(); ++i) {
        CHECK(proj[i].x == g.vertices[i].x);
        CHECK(proj[i].y == g.vertices[i].y);
    }
}

TEST_CASE("translation-only composition shifts projections by trans") {
    Rng rng(5);
    FaceGeometry g;
    for (int i = 0; i < 8; ++i)
        g.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    HeadPose base = random_pose(rng);
    HeadPose shifted = base;
    shifted.trans += Vec2{3.5, -1.25};
    const auto p0 = weak_project(apply_pose(g, base));
    const auto p1 = weak_project(apply_pose(g, shifted));
    for (size_t i = 0; i < g.vertices.size(); ++i) {
        CHECK(p1[i].x == doctest::Approx(p0[i].x + 3.5).epsilon(1e-12));
        CHECK(p1[i].y == doctest::Approx(p0[i].y - 1.25).epsilon(1e-12));
    }
}

TEST_CASE("projection jacobians match central finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        HeadPose pose = random_pose(rng);
        Vec3 point{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

        auto proj_u = [&]() {
            return weak_project(apply_pose_point(pose, euler_to_rotation(pose.euler), point)).x;
        };
        auto proj_v = [&]() {
            return weak_project(apply_pose_point(pose, euler_to_rotation(pose.euler), point)).y;
        };

        const Mat3 rot = euler_to_rotation(pose.euler);
        const auto drot = euler_rotation_derivs(pose.euler);
        const ProjectionJacobian jac = projection_jacobian(pose, rot, drot, point);

        CHECK(ftt::rel_err(jac.d_scale.x, ftt::central_diff(proj_u, pose.scale)) < 1e-6);
        CHECK(ftt::rel_err(jac.d_scale.y, ftt::central_diff(proj_v, pose.scale)) < 1e-6);
        double* angles[3] = {&pose.euler.x, &pose.euler.y, &pose.euler.z};
        for (int k = 0; k < 3; ++k) {
            CHECK(ftt::rel_err(jac.d_euler[k].x, ftt::central_diff(proj_u, *angles[k])) < 1e-6);
            CHECK(ftt::rel_err(jac.d_euler[k].y, ftt::central_diff(proj_v, *angles[k])) < 1e-6);
        }
        CHECK(ftt::rel_err(1.0, ftt::central_diff(proj_u, pose.trans.x)) < 1e-6);
        CHECK(ftt::rel_err(1.0, ftt::central_diff(proj_v, pose.trans.y)) < 1e-6);
        double* coords[3] = {&point.x, &point.y, &point.z};
        const double du[3] = {jac.d_point_row_u.x, jac.d_point_row_u.y, jac.d_point_row_u.z};
        const double dv[3] = {jac.d_point_row_v.x, jac.d_point_row_v.y, jac.d_point_row_v.z};
        for (int k = 0; k < 3; ++k) {
            CHECK(ftt::rel_err(du[k], ftt::central_diff(proj_u, *coords[k])) < 1e-6);
            CHECK(ftt::rel_err(dv[k], ftt::central_diff(proj_v, *coords[k])) < 1e-6);
        }
    }
}

TEST_CASE("accumulate_projection_grad agrees with the jacobian") {
    Rng rng(13);
    const HeadPose pose = random_pose(rng);
    const Vec3 point{0.3, -0.2, 0.5};
    const Mat3 rot = euler_to_rotation(pose.euler);
    const auto drot = euler_rotation_derivs(pose.euler);
    const Vec2 g{0.7, -1.3};

    PoseGrad pg;
    Vec3 dpoint;
    accumulate_projection_grad(pose, rot, drot, point, g, pg, &dpoint);

    const ProjectionJacobian jac = projection_jacobian(pose, rot, drot, point);
    CHECK(pg.d_scale == doctest::Approx(g.dot(jac.d_scale)));
    CHECK(pg.d_euler.x == doctest::Approx(g.dot(jac.d_euler[0])));
    CHECK(pg.d_euler.y == doctest::Approx(g.dot(jac.d_euler[1])));
    CHECK(pg.d_euler.z == doctest::Approx(g.dot(jac.d_euler[2])));
    CHECK(pg.d_trans.x == doctest::Approx(g.x));
    CHECK(pg.d_trans.y == doctest::Approx(g.y));
    CHECK(dpoint.x == doctest::Approx(g.x * jac.d_point_row_u.x + g.y * jac.d_point_row_v.x));
    CHECK(dpoint.y == doctest::Approx(g.x * jac.d_point_row_u.y + g.y * jac.d_point_row_v.y));
    CHECK(dpoint.z == doctest::Approx(g.x * jac.d_point_row_u.z + g.y * jac.d_point_row_v.z));
}

TEST_CASE("texel table: barycentric weights valid and chart coverage exact") {
    // one square split into two triangles covering only the left half of UV
    MeshTopology topo;
    topo.uv = {{0, 0}, {0.5, 0}, {0, 1}, {0.5, 1}};
    topo.triangles = {{0, 1, 2}, {1, 3, 2}};
    build_texel_table(topo, 16);
    int charted = 0;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            const TexelRef& ref = topo.texel_table[i * 16 + j];
            const double u = (j + 0.5) / 16.0;
            if (u < 0.5) {
                REQUIRE(ref.tri >= 0);
                CHECK(ref.w0 >= 0.0);
                CHECK(ref.w1 >= 0.0);
                CHECK(ref.w2 >= 0.0);
                CHECK(ref.w0 + ref.w1 + ref.w2 == doctest::Approx(1.0).epsilon(1e-9));
                ++charted;
            } else {
                CHECK(ref.tri == -1);
            }
        }
    CHECK(charted == 16 * 8);
}
