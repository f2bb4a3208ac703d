#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "facetrack/face_model.hpp"
#include "facetrack/rng.hpp"
#include "test_util.hpp"

using namespace ft;

namespace {

LatentCode random_code(Rng& rng, int d, double amp = 1.0) {
    LatentCode z(d);
    for (double& v : z) v = rng.uniform(-amp, amp);
    return z;
}

double geom_frobenius(const FaceGeometry& a, const FaceGeometry& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.vertices.size(); ++i) {
        const Vec3 d = a.vertices[i] - b.vertices[i];
        s += d.dot(d);
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("decode: zero code returns the mean") {
    const DecoderModel model = synth_identity(1, 8, 32, 9);
    const Decoded dec = decode(model, LatentCode(8, 0.0));
    for (size_t i = 0; i < model.geom_mean.vertices.size(); ++i)
        CHECK((dec.geom.vertices[i] - model.geom_mean.vertices[i]).norm() == 0.0);
    for (size_t i = 0; i < model.tex_mean.data.size(); ++i)
        CHECK(dec.tex.data[i] ==
              doctest::Approx(std::clamp(model.tex_mean.data[i], 0.0, 1.0)));
}

TEST_CASE("decode: geometry is linear in z") {
    const DecoderModel model = synth_identity(2, 6, 16, 7);
    Rng rng(5);
    const LatentCode z1 = random_code(rng, 6, 0.5);
    const LatentCode z2 = random_code(rng, 6, 0.5);
    LatentCode z12(6);
    for (int i = 0; i < 6; ++i) z12[i] = z1[i] + z2[i];
    const FaceGeometry g12 = decode_geometry(model, z12);
    const FaceGeometry g1 = decode_geometry(model, z1);
    const FaceGeometry g2 = decode_geometry(model, z2);
    const FaceGeometry g0 = decode_geometry(model, LatentCode(6, 0.0));
    for (size_t i = 0; i < g12.vertices.size(); ++i) {
        const Vec3 lhs = g12.vertices[i] - g1.vertices[i] - g2.vertices[i] + g0.vertices[i];
        CHECK(lhs.norm() < 1e-12);
    }
}

TEST_CASE("decode: finite-difference jacobian of geometry equals the basis") {
    const DecoderModel model = synth_identity(3, 5, 16, 7);
    Rng rng(9);
    LatentCode z = random_code(rng, 5, 0.4);
    for (int j = 0; j < model.dim; ++j) {
        for (int vi : {0, 10, 24}) {
            for (int axis = 0; axis < 3; ++axis) {
                auto eval = [&]() {
                    const FaceGeometry g = decode_geometry(model, z);
                    const Vec3& v = g.vertices[vi];
                    return axis == 0 ? v.x : axis == 1 ? v.y : v.z;
                };
                const double fd = ftt::central_diff(eval, z[j]);
                const Vec3& bv = model.geom_basis[j][vi];
                const double analytic = axis == 0 ? bv.x : axis == 1 ? bv.y : bv.z;
                CHECK(std::abs(fd - analytic) < 1e-9);
            }
        }
    }
}

TEST_CASE("landmark_positions: gather and bounds") {
    FaceGeometry g;
    g.vertices = {{1, 1, 1}, {2, 0, -1}, {0, 3, 5}};
    const auto pts = landmark_positions(g, {0});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].x == 1.0);
    const auto all = landmark_positions(g, {2, 1, 0});
    CHECK(all.size() == 3);
    CHECK(all[0].z == 5.0);
    CHECK_THROWS_AS((void)landmark_positions(g, {3}), std::out_of_range);
}

TEST_CASE("decode_backward: gather jacobian of landmarks w.r.t. source vertex") {
    // gradient of a landmark coordinate is 1 w.r.t. its vertex, 0 elsewhere
    const DecoderModel model = synth_identity(4, 4, 16, 7);
    const uint32_t lm = model.landmark_indices[2];
    GeomGrad dgeom(model.geom_mean.vertices.size(), Vec3{});
    dgeom[lm] = {1.0, 0.0, 0.0};
    std::vector<double> dz;
    decode_backward(model, dgeom, {}, TextureMap{}, dz);
    // against the FD of the same scalar through decode
    Rng rng(2);
    LatentCode z = random_code(rng, 4, 0.3);
    for (int j = 0; j < model.dim; ++j) {
        auto eval = [&]() { return decode_geometry(model, z).vertices[lm].x; };
        CHECK(std::abs(dz[j] - ftt::central_diff(eval, z[j])) < 1e-9);
    }
}

TEST_CASE("synth_identity: deterministic per seed") {
    const DecoderModel a = synth_identity(77, 6, 16, 7);
    const DecoderModel b = synth_identity(77, 6, 16, 7);
    REQUIRE(a.geom_mean.vertices.size() == b.geom_mean.vertices.size());
    for (size_t i = 0; i < a.geom_mean.vertices.size(); ++i)
        CHECK((a.geom_mean.vertices[i] - b.geom_mean.vertices[i]).norm() == 0.0);
    CHECK(a.tex_mean.data == b.tex_mean.data);
    for (int j = 0; j < a.dim; ++j) {
        CHECK(a.tex_basis[j] == b.tex_basis[j]);
        for (size_t i = 0; i < a.geom_basis[j].size(); ++i)
            CHECK((a.geom_basis[j][i] - b.geom_basis[j][i]).norm() == 0.0);
    }
    CHECK(a.landmark_indices == b.landmark_indices);
    CHECK(a.marker_indices == b.marker_indices);
}

TEST_CASE("synth_identity: unit basis column norms") {
    const DecoderModel model = synth_identity(123, 10, 32, 11);
    for (int j = 0; j < model.dim; ++j) {
        double g2 = 0.0;
        for (const Vec3& v : model.geom_basis[j]) g2 += v.dot(v);
        CHECK(std::sqrt(g2) == doctest::Approx(1.0).epsilon(1e-9));
        double t2 = 0.0;
        for (double v : model.tex_basis[j]) t2 += v * v;
        CHECK(std::sqrt(t2) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("synth_identity: landmark and marker indices are disjoint and valid") {
    const DecoderModel model = synth_identity(5, 16, 32, 15);
    CHECK(model.landmark_indices.size() == 8);
    CHECK(model.marker_indices.size() == 5);
    for (uint32_t lm : model.landmark_indices) {
        CHECK(lm < model.geom_mean.vertices.size());
        for (uint32_t mk : model.marker_indices) CHECK(lm != mk);
    }
}

TEST_CASE("synth_identity: no degenerate visible triangles over the latent box") {
    const DecoderModel model = synth_identity(1, 16, 64, 15);
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const LatentCode z = random_code(rng, 16, 1.0);
        const FaceGeometry g = decode_geometry(model, z);
        for (const auto& tri : model.topology.triangles) {
            const Vec3 n = (g.vertices[tri[1]] - g.vertices[tri[0]])
                               .cross(g.vertices[tri[2]] - g.vertices[tri[0]]);
            CHECK(n.norm() > 1e-6);  // area = |n|/2
        }
    }
}

TEST_CASE("decode: lipschitz bound from basis column norms") {
    const DecoderModel model = synth_identity(8, 8, 32, 9);
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const LatentCode z1 = random_code(rng, 8);
        const LatentCode z2 = random_code(rng, 8);
        const FaceGeometry g1 = decode_geometry(model, z1);
        const FaceGeometry g2 = decode_geometry(model, z2);
        double bound = 0.0;  // sum_j ||col_j|| * |dz_j|, columns are unit norm
        for (int j = 0; j < 8; ++j) bound += std::abs(z1[j] - z2[j]);
        CHECK(geom_frobenius(g1, g2) <= bound + 1e-12);
        // texture path including the 1-Lipschitz clamp
        const Decoded d1 = decode(model, z1);
        const Decoded d2 = decode(model, z2);
        double t2 = 0.0;
        for (size_t i = 0; i < d1.tex.data.size(); ++i) {
            const double d = d1.tex.data[i] - d2.tex.data[i];
            t2 += d * d;
        }
        CHECK(std::sqrt(t2) <= bound + 1e-12);
    }
}

TEST_CASE("landmark gather commutes with apply_pose") {
    const DecoderModel model = synth_identity(21, 6, 16, 9);
    Rng rng(8);
    const LatentCode z = random_code(rng, 6, 0.8);
    const FaceGeometry g = decode_geometry(model, z);
    HeadPose pose;
    pose.scale = 37.0;
    pose.euler = {0.2, -0.3, 0.1};
    pose.trans = {63.0, 60.0};

    FaceGeometry posed;
    posed.vertices = apply_pose(g, pose);
    const auto gather_then_pose = apply_pose(
        FaceGeometry{landmark_positions(g, model.marker_indices)}, pose);
    const auto pose_then_gather = landmark_positions(posed, model.marker_indices);
    for (size_t k = 0; k < gather_then_pose.size(); ++k)
        CHECK((gather_then_pose[k] - pose_then_gather[k]).norm() < 1e-12);
}

TEST_CASE("decoder serialization: round trip preserves the model bit-exactly") {
    namespace fs = std::filesystem;
    const DecoderModel model = synth_identity(99, 6, 16, 7);
    const fs::path dir = fs::path("ft_test_tmp_facemodel");
    fs::create_directories(dir);
    const std::string p1 = (dir / "dec1.bin").string();
    const std::string p2 = (dir / "dec2.bin").string();
    save_decoder(model, p1);
    const DecoderModel loaded = load_decoder(p1);
    save_decoder(loaded, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(loaded.dim == model.dim);
    CHECK(loaded.topology.texel_table.size() == model.topology.texel_table.size());
    const Decoded a = decode(model, LatentCode(6, 0.25));
    const Decoded b = decode(loaded, LatentCode(6, 0.25));
    CHECK(a.tex.data == b.tex.data);
    fs::remove_all(dir);
}

TEST_CASE("decoder serialization: truncated and corrupt files are rejected") {
    namespace fs = std::filesystem;
    const DecoderModel model = synth_identity(4, 4, 16, 5);
    const fs::path dir = fs::path("ft_test_tmp_facemodel2");
    fs::create_directories(dir);
    const std::string p = (dir / "dec.bin").string();
    save_decoder(model, p);
    // truncate
    const auto full_size = fs::file_size(p);
    fs::resize_file(p, full_size / 2);
    CHECK_THROWS_AS((void)load_decoder(p), std::runtime_error);
    // wrong magic
    {
        std::ofstream os(p, std::ios::binary);
        os << "NOTMODEL garbage";
    }
    CHECK_THROWS_AS((void)load_decoder(p), std::runtime_error);
    fs::remove_all(dir);
}
