#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "facetrack/encoder.hpp"
#include "facetrack/rng.hpp"
#include "test_util.hpp"

using namespace ft;

namespace {

Image random_image(int res, uint64_t seed) {
    Rng rng(seed);
    Image img(res, res);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            img.set_pixel(x, y, {rng.uniform(), rng.uniform(), rng.uniform()});
    return img;
}

std::vector<Vec2> random_landmarks(int k, int res, uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec2> out(k);
    for (Vec2& p : out) p = {rng.uniform(0, res - 1), rng.uniform(0, res - 1)};
    return out;
}

// sqrt(||W||_1 * ||W||_inf) upper-bounds the spectral norm
double spectral_bound(const DenseLayer& l) {
    std::vector<double> col_sum(l.in, 0.0);
    double max_row = 0.0;
    for (int o = 0; o < l.out; ++o) {
        double row = 0.0;
        for (int i = 0; i < l.in; ++i) {
            const double a = std::abs(l.w[static_cast<size_t>(o) * l.in + i]);
            row += a;
            col_sum[i] += a;
        }
        max_row = std::max(max_row, row);
    }
    double max_col = 0.0;
    for (double c : col_sum) max_col = std::max(max_col, c);
    return std::sqrt(max_row * max_col);
}

}  // namespace

TEST_CASE("encode: deterministic, correct output dimensions, positive scale") {
    const EncoderModel model = make_encoder(3, 64, 12, 8, 64, {32, 16});
    const Image img = random_image(64, 1);
    const auto k2d = random_landmarks(8, 64, 2);
    const EncodeResult a = encode(model, img, k2d);
    const EncodeResult b = encode(model, img, k2d);
    CHECK(a.z.size() == 12);
    CHECK(a.z == b.z);
    CHECK(a.pose.scale == b.pose.scale);
    CHECK(a.pose.scale > 0.0);
    for (double v : a.z) CHECK(std::isfinite(v));
    CHECK(std::isfinite(a.pose.trans.x));
}

TEST_CASE("encode: rejects wrong resolution and landmark count") {
    const EncoderModel model = make_encoder(3, 64, 12, 8, 64, {32, 16});
    CHECK_THROWS_AS((void)encode(model, random_image(32, 1), {}), std::invalid_argument);
    CHECK_THROWS_AS((void)encode(model, random_image(64, 1), random_landmarks(5, 64, 2)),
                    std::invalid_argument);
}

TEST_CASE("encode: empty landmark vector feeds a zero slice") {
    const EncoderModel model = make_encoder(5, 32, 6, 8, 32, {16});
    const Image img = random_image(32, 3);
    EncoderState st;
    (void)encode(model, img, {}, &st);
    for (int k = 0; k < 16; ++k) CHECK(st.input[model.feat_dim + k] == 0.0);
}

TEST_CASE("encode: output change bounded by input perturbation times layer norm bounds") {
    // at input_res == frozen_res the 32x32 image feeds the frozen affine map
    // directly, so the product of norm bounds applies end to end
    const EncoderModel model = make_encoder(7, 32, 8, 8, 48, {24, 16});
    Rng rng(4);
    const Image img = random_image(32, 5);

    DenseLayer frozen;
    frozen.in = 32 * 32 * 3;
    frozen.out = model.feat_dim;
    frozen.w = model.frozen_w;
    frozen.b = model.frozen_b;
    double bound = spectral_bound(frozen);
    for (const DenseLayer& l : model.layers) bound *= spectral_bound(l);

    EncoderState st0;
    (void)encode(model, img, {}, &st0);
    for (int trial = 0; trial < 10; ++trial) {
        Image perturbed = img;
        double eps2 = 0.0;
        for (double& v : perturbed.data) {
            const double d = rng.uniform(-1e-3, 1e-3);
            v = std::clamp(v + d, 0.0, 1.0);
        }
        for (size_t i = 0; i < img.data.size(); ++i) {
            const double d = perturbed.data[i] - img.data[i];
            eps2 += d * d;
        }
        EncoderState st1;
        (void)encode(model, perturbed, {}, &st1);
        double out2 = 0.0;
        for (size_t i = 0; i < st0.raw_out.size(); ++i) {
            const double d = st1.raw_out[i] - st0.raw_out[i];
            out2 += d * d;
        }
        CHECK(std::sqrt(out2) <= bound * std::sqrt(eps2) + 1e-12);
    }
}

TEST_CASE("encode_backward: zero upstream gradient gives zero parameter gradients") {
    const EncoderModel model = make_encoder(9, 32, 6, 8, 32, {16});
    EncoderState st;
    (void)encode(model, random_image(32, 7), random_landmarks(8, 32, 8), &st);
    EncoderGrads grads = make_grads(model);
    encode_backward(model, st, std::vector<double>(6, 0.0), PoseGrad{}, grads);
    CHECK(grads.squared_norm() == 0.0);
}

TEST_CASE("encode_backward: requires a recorded forward pass") {
    const EncoderModel model = make_encoder(9, 32, 6, 8, 32, {16});
    EncoderGrads grads = make_grads(model);
    EncoderState st;  // never filled
    CHECK_THROWS_AS(encode_backward(model, st, std::vector<double>(6, 0.0), PoseGrad{}, grads),
                    std::runtime_error);
}

TEST_CASE("encode_backward: exp-scale chain, d(scale)/d(raw_scale) = scale") {
    const EncoderModel model = make_encoder(11, 32, 4, 8, 32, {12});
    EncoderState st;
    const EncodeResult res = encode(model, random_image(32, 9), {}, &st);
    // with upstream d_scale = 1, the delta on the raw output must be scale
    EncoderGrads grads = make_grads(model);
    PoseGrad dpose;
    dpose.d_scale = 1.0;
    encode_backward(model, st, std::vector<double>(4, 0.0), dpose, grads);
    // the bias gradient of the raw-scale output equals its delta
    const DenseLayer& last = grads.layers.back();
    CHECK(last.b[4] == doctest::Approx(res.pose.scale));
}

TEST_CASE("encode_backward: matches central finite differences over all parameters") {
    EncoderModel model = make_encoder(13, 32, 4, 8, 24, {10, 8});
    const Image img = random_image(32, 10);
    const auto k2d = random_landmarks(8, 32, 11);
    const std::vector<double> features = frozen_features(model, img);

    // random upstream cotangent on (z, H)
    Rng rng(12);
    std::vector<double> dz(4);
    for (double& v : dz) v = rng.uniform(-1, 1);
    PoseGrad dpose;
    dpose.d_scale = rng.uniform(-1, 1);
    dpose.d_euler = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    dpose.d_trans = {rng.uniform(-1, 1), rng.uniform(-1, 1)};

    auto scalar = [&]() {
        const EncodeResult r = encode_from_features(model, features, k2d);
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += dz[i] * r.z[i];
        s += dpose.d_scale * r.pose.scale;
        s += dpose.d_euler.x * r.pose.euler.x + dpose.d_euler.y * r.pose.euler.y +
             dpose.d_euler.z * r.pose.euler.z;
        s += dpose.d_trans.x * r.pose.trans.x + dpose.d_trans.y * r.pose.trans.y;
        return s;
    };

    EncoderState st;
    (void)encode_from_features(model, features, k2d, &st);
    EncoderGrads grads = make_grads(model);
    encode_backward(model, st, dz, dpose, grads);

    // components well above the double-precision FD noise floor must agree to
    // 1e-6 relative; the full vectors must agree in norm as well
    const double gnorm = std::sqrt(grads.squared_norm());
    std::vector<double> fd_all, an_all;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        DenseLayer& layer = model.layers[l];
        for (size_t i = 0; i < layer.w.size(); i += 7) {
            const double fd = ftt::central_diff(scalar, layer.w[i]);
            const double an = grads.layers[l].w[i];
            fd_all.push_back(fd);
            an_all.push_back(an);
            if (std::abs(an) < 1e-3 * gnorm) continue;
            CHECK(ftt::rel_err(an, fd, 1e-10) < 1e-6);
        }
        for (size_t i = 0; i < layer.b.size(); ++i) {
            const double fd = ftt::central_diff(scalar, layer.b[i]);
            const double an = grads.layers[l].b[i];
            fd_all.push_back(fd);
            an_all.push_back(an);
            if (std::abs(an) < 1e-3 * gnorm) continue;
            CHECK(ftt::rel_err(an, fd, 1e-10) < 1e-6);
        }
    }
    CHECK(ftt::vector_rel_err(an_all, fd_all) < 1e-6);
}

TEST_CASE("encoder serialization: save/load round trip reproduces encode exactly") {
    namespace fs = std::filesystem;
    const fs::path dir("ft_test_tmp_encoder");
    fs::create_directories(dir);
    const std::string path = (dir / "enc.bin").string();

    const EncoderModel model = make_encoder(15, 64, 10, 8, 48, {24, 12});
    save_encoder(model, path);
    const EncoderModel loaded = load_encoder(path);
    const Image img = random_image(64, 13);
    const auto k2d = random_landmarks(8, 64, 14);
    const EncodeResult a = encode(model, img, k2d);
    const EncodeResult b = encode(loaded, img, k2d);
    CHECK(a.z == b.z);
    CHECK(a.pose.scale == b.pose.scale);
    CHECK(a.pose.trans.x == b.pose.trans.x);
    fs::remove_all(dir);
}

TEST_CASE("encoder serialization: truncated file and checksum corruption rejected") {
    namespace fs = std::filesystem;
    const fs::path dir("ft_test_tmp_encoder2");
    fs::create_directories(dir);
    const std::string path = (dir / "enc.bin").string();
    const EncoderModel model = make_encoder(17, 32, 4, 8, 16, {8});
    save_encoder(model, path);

    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 16);
    CHECK_THROWS_AS((void)load_encoder(path), std::runtime_error);

    save_encoder(model, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size / 2));
        const char flip = 0x5a;
        f.write(&flip, 1);
    }
    CHECK_THROWS_AS((void)load_encoder(path), std::runtime_error);
    fs::remove_all(dir);
}
