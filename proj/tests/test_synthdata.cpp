#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "facetrack/rng.hpp"
#include "facetrack/synthdata.hpp"
#include "test_util.hpp"

using namespace ft;
namespace fs = std::filesystem;

namespace {
const DecoderModel& test_model() {
    static const DecoderModel model = synth_identity(40, 8, 32, 11);
    return model;
}
}  // namespace

TEST_CASE("generate_lab: seed repeat gives identical datasets") {
    const LabDataset a = generate_lab(test_model(), 6, 3, 64, 5);
    const LabDataset b = generate_lab(test_model(), 6, 3, 64, 5);
    REQUIRE(a.images.size() == b.images.size());
    for (size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].data == b.images[i].data);
    for (size_t i = 0; i < a.z_gt.size(); ++i) CHECK(a.z_gt[i] == b.z_gt[i]);
}

TEST_CASE("generate_lab: landmarks are exact projections and z is shared across views") {
    const DecoderModel& model = test_model();
    const LabDataset ds = generate_lab(model, 5, 3, 64, 6);
    CHECK(ds.frame_count() == 5);
    for (int t = 0; t < ds.frame_count(); ++t) {
        const FaceGeometry geom = decode_geometry(model, ds.z_gt[t]);
        for (int v = 0; v < ds.views; ++v) {
            const size_t i = static_cast<size_t>(t) * ds.views + v;
            const Mat3 rot = euler_to_rotation(ds.pose_gt[i].euler);
            const auto pts = landmark_positions(geom, model.landmark_indices);
            REQUIRE(ds.k2d_gt[i].size() == pts.size());
            for (size_t k = 0; k < pts.size(); ++k) {
                const Vec2 p = weak_project(apply_pose_point(ds.pose_gt[i], rot, pts[k]));
                CHECK((p - ds.k2d_gt[i][k]).norm() == 0.0);
            }
        }
    }
}

TEST_CASE("generate_lab: distinct per-view pose offsets") {
    const LabDataset ds = generate_lab(test_model(), 2, 3, 64, 7);
    CHECK(ds.pose_gt[0].euler.y != ds.pose_gt[1].euler.y);
    CHECK(ds.pose_gt[1].euler.y != ds.pose_gt[2].euler.y);
}

TEST_CASE("generate_wild: identity spec equals a plain render over the plain background") {
    const DecoderModel& model = test_model();
    DomainSpec spec;  // identity color, brightness 1, no clutter, no noise
    spec.detect_sigma = 0.0;
    const WildSequence seq = generate_wild(model, spec, 4, 64, 9);
    REQUIRE(seq.has_gt);
    const Image bg = Image::filled(64, 64, {0.35, 0.35, 0.35});
    for (int t = 0; t < seq.frame_count(); ++t) {
        const Decoded dec = decode(model, seq.gt_z[t]);
        const Image expect = render(dec.geom, dec.tex, seq.gt_pose[t], model.topology, bg, 1.0);
        CHECK(seq.frames[t].data == expect.data);
    }
}

TEST_CASE("generate_wild: zero detection noise gives exact projections") {
    const DecoderModel& model = test_model();
    DomainSpec spec;
    spec.detect_sigma = 0.0;
    const WildSequence seq = generate_wild(model, spec, 3, 64, 10);
    for (int t = 0; t < seq.frame_count(); ++t) {
        const FaceGeometry geom = decode_geometry(model, seq.gt_z[t]);
        const Mat3 rot = euler_to_rotation(seq.gt_pose[t].euler);
        const auto pts = landmark_positions(geom, model.landmark_indices);
        for (size_t k = 0; k < pts.size(); ++k) {
            const Vec2 p = weak_project(apply_pose_point(seq.gt_pose[t], rot, pts[k]));
            CHECK((p - seq.detections[t][k]).norm() == 0.0);
        }
    }
}

TEST_CASE("generate_wild: face-pixel means shift according to the color matrix") {
    const DecoderModel& model = test_model();
    DomainSpec plain;
    plain.detect_sigma = 0.0;
    DomainSpec gap = plain;
    gap.color_matrix = Mat3::zero();
    gap.color_matrix.m[0][0] = 0.7;
    gap.color_matrix.m[0][1] = 0.2;
    gap.color_matrix.m[1][1] = 0.85;
    gap.color_matrix.m[2][2] = 1.1;
    gap.color_matrix.m[2][0] = 0.05;

    const WildSequence a = generate_wild(model, plain, 2, 64, 11);
    const WildSequence b = generate_wild(model, gap, 2, 64, 11);
    // same trajectory seed, so frames differ only by the color transform
    for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const Vec3 expect = gap.color_matrix * a.frames[t].pixel(x, y);
                const Vec3 got = b.frames[t].pixel(x, y);
                CHECK(std::abs(got.x - std::clamp(expect.x, 0.0, 1.0)) < 1e-12);
                CHECK(std::abs(got.y - std::clamp(expect.y, 0.0, 1.0)) < 1e-12);
                CHECK(std::abs(got.z - std::clamp(expect.z, 0.0, 1.0)) < 1e-12);
            }
}

TEST_CASE("wild dataset io: save/load round trip") {
    const fs::path dir("ft_test_tmp_synth_wild");
    fs::remove_all(dir);
    const WildSequence seq = generate_wild(test_model(), benchmark_domain_gap(), 4, 64, 12);
    save_wild(seq, dir.string());
    const WildSequence loaded = load_wild(dir.string());
    REQUIRE(loaded.frame_count() == 4);
    CHECK(loaded.has_gt);
    for (int t = 0; t < 4; ++t) {
        // images pass through 8-bit quantization exactly once
        for (size_t i = 0; i < seq.frames[t].data.size(); ++i)
            CHECK(std::abs(loaded.frames[t].data[i] - seq.frames[t].data[i]) <=
                  0.5 / 255.0 + 1e-12);
        for (size_t k = 0; k < seq.detections[t].size(); ++k)
            CHECK((loaded.detections[t][k] - seq.detections[t][k]).norm() < 1e-9);
        for (size_t k = 0; k < seq.marker_gt[t].size(); ++k)
            CHECK((loaded.marker_gt[t][k] - seq.marker_gt[t][k]).norm() < 1e-9);
        CHECK(loaded.gt_z[t] == seq.gt_z[t]);
        CHECK(loaded.gt_pose[t].scale == seq.gt_pose[t].scale);
    }
    // second save is byte-identical (determinism of the writers)
    const fs::path dir2("ft_test_tmp_synth_wild2");
    fs::remove_all(dir2);
    save_wild(loaded, dir2.string());
    const WildSequence reloaded = load_wild(dir2.string());
    for (int t = 0; t < 4; ++t) CHECK(reloaded.frames[t].data == loaded.frames[t].data);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("wild dataset io: missing landmarks.csv errors naming the file") {
    const fs::path dir("ft_test_tmp_synth_missing");
    fs::remove_all(dir);
    const WildSequence seq = generate_wild(test_model(), DomainSpec{}, 2, 64, 13);
    save_wild(seq, dir.string());
    fs::remove(dir / "landmarks.csv");
    try {
        (void)load_wild(dir.string());
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("landmarks.csv") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("wild dataset io: sidecar absent loads with empty ground truth") {
    const fs::path dir("ft_test_tmp_synth_nosidecar");
    fs::remove_all(dir);
    const WildSequence seq = generate_wild(test_model(), DomainSpec{}, 2, 64, 14);
    save_wild(seq, dir.string(), /*write_sidecar=*/false);
    const WildSequence loaded = load_wild(dir.string());
    CHECK(!loaded.has_gt);
    CHECK(loaded.gt_z.empty());
    CHECK(loaded.frame_count() == 2);
    fs::remove_all(dir);
}

TEST_CASE("lab dataset io: save/load round trip") {
    const fs::path dir("ft_test_tmp_synth_lab");
    fs::remove_all(dir);
    const LabDataset ds = generate_lab(test_model(), 3, 2, 64, 15);
    save_lab(ds, dir.string());
    const LabDataset loaded = load_lab(dir.string());
    CHECK(loaded.frame_count() == 3);
    CHECK(loaded.views == 2);
    CHECK(loaded.resolution == 64);
    for (size_t i = 0; i < ds.images.size(); ++i) {
        CHECK(loaded.pose_gt[i].scale == ds.pose_gt[i].scale);
        CHECK(loaded.pose_gt[i].euler.y == ds.pose_gt[i].euler.y);
        for (size_t k = 0; k < ds.k2d_gt[i].size(); ++k)
            CHECK((loaded.k2d_gt[i][k] - ds.k2d_gt[i][k]).norm() < 1e-9);
    }
    for (int t = 0; t < 3; ++t) CHECK(loaded.z_gt[t] == ds.z_gt[t]);
    fs::remove_all(dir);
}

TEST_CASE("marker vertices never appear in training inputs") {
    const DecoderModel& model = test_model();
    const fs::path dir("ft_test_tmp_synth_markers");
    fs::remove_all(dir);
    const WildSequence seq = generate_wild(model, DomainSpec{}, 2, 64, 16);
    save_wild(seq, dir.string());
    // landmarks.csv rows count K per frame, markers.csv M per frame
    auto count_rows = [](const fs::path& p) {
        std::ifstream is(p);
        std::string line;
        int n = -1;  // skip header
        while (std::getline(is, line))
            if (!line.empty()) ++n;
        return n;
    };
    CHECK(count_rows(dir / "landmarks.csv") == 2 * 8);
    CHECK(count_rows(dir / "markers.csv") == 2 * 5);
    // detected landmarks differ from every marker projection
    for (int t = 0; t < 2; ++t)
        for (const Vec2& det : seq.detections[t])
            for (const Vec2& mk : seq.marker_gt[t]) CHECK((det - mk).norm() > 1e-9);
    fs::remove_all(dir);
}

TEST_CASE("benchmark domain gap: color matrix is well conditioned") {
    const DomainSpec spec = benchmark_domain_gap();
    // singular values via eigenvalues of M^T M
    const Mat3 mtm = spec.color_matrix.transpose() * spec.color_matrix;
    // power iteration for largest, inverse for smallest
    Vec3 v{1, 0.7, 0.3};
    for (int i = 0; i < 200; ++i) {
        v = mtm * v;
        v = v * (1.0 / v.norm());
    }
    const double smax = std::sqrt((mtm * v).norm());
    const Mat3 inv = mtm.inverse();
    Vec3 u{0.2, 1, -0.4};
    for (int i = 0; i < 200; ++i) {
        u = inv * u;
        u = u * (1.0 / u.norm());
    }
    const double smin = 1.0 / std::sqrt((inv * u).norm());
    CHECK(smax / smin < 20.0);
}

TEST_CASE("domain spec file: parse and reject unknown keys") {
    const fs::path dir("ft_test_tmp_synth_spec");
    fs::create_directories(dir);
    const std::string path = (dir / "spec.txt").string();
    {
        std::ofstream os(path);
        os << "# comment\n";
        os << "color_matrix=0.9 0.05 0 0.05 0.9 0.05 0 0.05 0.9\n";
        os << "brightness=0.8\nnoise_sigma=0.02\nclutter_seed=42\ndetect_sigma=1.5\n";
    }
    const DomainSpec spec = load_domain_spec(path);
    CHECK(spec.brightness == doctest::Approx(0.8));
    CHECK(spec.color_matrix.m[0][0] == doctest::Approx(0.9));
    CHECK(spec.color_matrix.m[1][0] == doctest::Approx(0.05));
    CHECK(spec.clutter_seed == 42);
    {
        std::ofstream os(path);
        os << "not_a_key=1\n";
    }
    CHECK_THROWS_AS((void)load_domain_spec(path), std::runtime_error);
    fs::remove_all(dir);
}
