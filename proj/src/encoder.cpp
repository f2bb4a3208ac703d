#include "facetrack/encoder.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "facetrack/rng.hpp"

namespace ft {

EncoderModel make_encoder(uint64_t seed, int input_res, int latent_dim, int num_landmarks,
                          int feat_dim, const std::vector<int>& hidden) {
    EncoderModel m;
    m.input_res = input_res;
    m.feat_dim = feat_dim;
    m.latent_dim = latent_dim;
    m.num_landmarks = num_landmarks;

    Rng rng(seed);
    const int fin = m.frozen_res * m.frozen_res * 3;
    m.frozen_w.resize(static_cast<size_t>(feat_dim) * fin);
    const double fstd = 1.0 / std::sqrt(static_cast<double>(fin));
    for (double& v : m.frozen_w) v = rng.normal(0.0, fstd);
    m.frozen_b.assign(feat_dim, 0.0);

    std::vector<int> dims;
    dims.push_back(m.regression_input_dim());
    for (int h : hidden) dims.push_back(h);
    dims.push_back(m.output_dim());
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.w.resize(static_cast<size_t>(layer.out) * layer.in);
        const double std = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& v : layer.w) v = rng.normal(0.0, std);
        layer.b.assign(layer.out, 0.0);
        m.layers.push_back(std::move(layer));
    }
    // pose prior: centered face at a generic scale
    DenseLayer& last = m.layers.back();
    last.b[latent_dim + 0] = std::log(0.35 * input_res);
    last.b[latent_dim + 4] = 0.5 * (input_res - 1);
    last.b[latent_dim + 5] = 0.5 * (input_res - 1);
    return m;
}

std::vector<double> frozen_features(const EncoderModel& model, const Image& image) {
    const Image small = (image.width == model.frozen_res && image.height == model.frozen_res)
                            ? image
                            : resize_bilinear(image, model.frozen_res, model.frozen_res);
    const int fin = model.frozen_res * model.frozen_res * 3;
    std::vector<double> out(model.feat_dim);
    for (int f = 0; f < model.feat_dim; ++f) {
        const double* wrow = model.frozen_w.data() + static_cast<size_t>(f) * fin;
        double s = model.frozen_b[f];
        for (int i = 0; i < fin; ++i) s += wrow[i] * small.data[i];
        out[f] = s;
    }
    return out;
}

EncodeResult encode_from_features(const EncoderModel& model,
                                  const std::vector<double>& features,
                                  const std::vector<Vec2>& k2d, EncoderState* state) {
    if (static_cast<int>(features.size()) != model.feat_dim)
        throw std::invalid_argument("encode: feature dimension mismatch");
    if (!k2d.empty() && static_cast<int>(k2d.size()) != model.num_landmarks)
        throw std::invalid_argument("encode: landmark count mismatch");

    std::vector<double> x(model.regression_input_dim(), 0.0);
    std::copy(features.begin(), features.end(), x.begin());
    if (!k2d.empty()) {
        const double half = 0.5 * (model.input_res - 1);
        for (int k = 0; k < model.num_landmarks; ++k) {
            x[model.feat_dim + 2 * k] = k2d[k].x / half - 1.0;
            x[model.feat_dim + 2 * k + 1] = k2d[k].y / half - 1.0;
        }
    }

    EncoderState local;
    EncoderState& st = state ? *state : local;
    st.input = x;
    st.pre.assign(model.layers.size(), {});
    st.act.assign(model.layers.size(), {});

    const std::vector<double>* cur = &st.input;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        auto& pre = st.pre[l];
        pre.assign(layer.out, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double* wrow = layer.w.data() + static_cast<size_t>(o) * layer.in;
            double s = layer.b[o];
            for (int i = 0; i < layer.in; ++i) s += wrow[i] * (*cur)[i];
            pre[o] = s;
        }
        auto& act = st.act[l];
        if (l + 1 < model.layers.size()) {
            act.resize(layer.out);
            for (int o = 0; o < layer.out; ++o) act[o] = std::tanh(pre[o]);
        } else {
            act = pre;  // linear output
        }
        cur = &act;
    }

    st.raw_out = st.act.back();
    EncodeResult res;
    res.z.assign(st.raw_out.begin(), st.raw_out.begin() + model.latent_dim);
    const int d = model.latent_dim;
    st.scale = std::exp(st.raw_out[d]);
    res.pose.scale = st.scale;
    res.pose.euler = {st.raw_out[d + 1], st.raw_out[d + 2], st.raw_out[d + 3]};
    res.pose.trans = {st.raw_out[d + 4], st.raw_out[d + 5]};
    st.valid = true;
    return res;
}

EncodeResult encode(const EncoderModel& model, const Image& image,
                    const std::vector<Vec2>& k2d, EncoderState* state) {
    if (image.width != model.input_res || image.height != model.input_res)
        throw std::invalid_argument("encode: image resolution mismatch");
    return encode_from_features(model, frozen_features(model, image), k2d, state);
}

void EncoderGrads::zero() {
    for (auto& l : layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
}

double EncoderGrads::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double v : l.w) s += v * v;
        for (double v : l.b) s += v * v;
    }
    return s;
}

void EncoderGrads::scale(double s) {
    for (auto& l : layers) {
        for (double& v : l.w) v *= s;
        for (double& v : l.b) v *= s;
    }
}

void EncoderGrads::add_scaled(const EncoderGrads& other, double s) {
    for (size_t l = 0; l < layers.size(); ++l) {
        for (size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] += s * other.layers[l].w[i];
        for (size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += s * other.layers[l].b[i];
    }
}

EncoderGrads make_grads(const EncoderModel& model) {
    EncoderGrads g;
    g.layers = model.layers;
    g.zero();
    return g;
}

void encode_backward(const EncoderModel& model, const EncoderState& state,
                     const std::vector<double>& dz, const PoseGrad& dpose,
                     EncoderGrads& grads) {
    if (!state.valid) throw std::runtime_error("encode_backward: no recorded forward pass");
    if (static_cast<int>(dz.size()) != model.latent_dim)
        throw std::invalid_argument("encode_backward: dz dimension mismatch");

    const int d = model.latent_dim;
    std::vector<double> delta(model.output_dim());
    for (int i = 0; i < d; ++i) delta[i] = dz[i];
    delta[d] = dpose.d_scale * state.scale;  // chain rule through exp
    delta[d + 1] = dpose.d_euler.x;
    delta[d + 2] = dpose.d_euler.y;
    delta[d + 3] = dpose.d_euler.z;
    delta[d + 4] = dpose.d_trans.x;
    delta[d + 5] = dpose.d_trans.y;

    for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
        const DenseLayer& layer = model.layers[l];
        DenseLayer& g = grads.layers[l];
        const std::vector<double>& in = l == 0 ? state.input : state.act[l - 1];
        for (int o = 0; o < layer.out; ++o) {
            const double dv = delta[o];
            if (dv != 0.0) {
                double* grow = g.w.data() + static_cast<size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) grow[i] += dv * in[i];
            }
            g.b[o] += dv;
        }
        if (l == 0) break;
        std::vector<double> dx(layer.in, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double dv = delta[o];
            if (dv == 0.0) continue;
            const double* wrow = layer.w.data() + static_cast<size_t>(o) * layer.in;
            for (int i = 0; i < layer.in; ++i) dx[i] += dv * wrow[i];
        }
        // previous layer is tanh
        const std::vector<double>& a = state.act[l - 1];
        for (size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - a[i] * a[i];
        delta = std::move(dx);
    }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------
// Layout (little-endian):
//   magic "FTENCOD1" | u32 version=1
//   u32 input_res, frozen_res, feat_dim, latent_dim, num_landmarks, n_layers
//   frozen_w | frozen_b
//   per layer: u32 in, u32 out, w (out*in f64), b (out f64)
//   u64 FNV-1a checksum of every preceding byte

static constexpr char kEncoderMagic[8] = {'F', 'T', 'E', 'N', 'C', 'O', 'D', '1'};

void save_encoder(const EncoderModel& model, const std::string& path) {
    std::ostringstream body(std::ios::binary);
    binio::write_bytes(body, kEncoderMagic, 8);
    binio::write_u32(body, 1);
    binio::write_u32(body, static_cast<uint32_t>(model.input_res));
    binio::write_u32(body, static_cast<uint32_t>(model.frozen_res));
    binio::write_u32(body, static_cast<uint32_t>(model.feat_dim));
    binio::write_u32(body, static_cast<uint32_t>(model.latent_dim));
    binio::write_u32(body, static_cast<uint32_t>(model.num_landmarks));
    binio::write_u32(body, static_cast<uint32_t>(model.layers.size()));
    binio::write_f64_array(body, model.frozen_w.data(), model.frozen_w.size());
    binio::write_f64_array(body, model.frozen_b.data(), model.frozen_b.size());
    for (const DenseLayer& l : model.layers) {
        binio::write_u32(body, static_cast<uint32_t>(l.in));
        binio::write_u32(body, static_cast<uint32_t>(l.out));
        binio::write_f64_array(body, l.w.data(), l.w.size());
        binio::write_f64_array(body, l.b.data(), l.b.size());
    }
    const std::string payload = body.str();
    const uint64_t checksum = binio::fnv1a(payload.data(), payload.size());

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    binio::write_u64(os, checksum);
    if (!os) throw std::runtime_error("write failed: " + path);
}

EncoderModel load_encoder(const std::string& path) {
    const std::vector<char> buf = binio::read_file(path);
    if (buf.size() < 8 + 8) throw std::runtime_error("truncated encoder file: " + path);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    const uint64_t computed = binio::fnv1a(buf.data(), buf.size() - 8);
    if (stored != computed)
        throw std::runtime_error("encoder checksum mismatch: " + path);

    std::istringstream is(std::string(buf.data(), buf.size() - 8), std::ios::binary);
    char magic[8];
    binio::read_bytes(is, magic, 8, "encoder magic");
    if (std::memcmp(magic, kEncoderMagic, 8) != 0)
        throw std::runtime_error("bad encoder magic in " + path);
    if (binio::read_u32(is, "version") != 1)
        throw std::runtime_error("unsupported encoder version");
    EncoderModel m;
    m.input_res = static_cast<int>(binio::read_u32(is, "input_res"));
    m.frozen_res = static_cast<int>(binio::read_u32(is, "frozen_res"));
    m.feat_dim = static_cast<int>(binio::read_u32(is, "feat_dim"));
    m.latent_dim = static_cast<int>(binio::read_u32(is, "latent_dim"));
    m.num_landmarks = static_cast<int>(binio::read_u32(is, "num_landmarks"));
    const uint32_t n_layers = binio::read_u32(is, "n_layers");
    m.frozen_w.resize(static_cast<size_t>(m.feat_dim) * m.frozen_res * m.frozen_res * 3);
    binio::read_f64_array(is, m.frozen_w.data(), m.frozen_w.size(), "frozen_w");
    m.frozen_b.resize(m.feat_dim);
    binio::read_f64_array(is, m.frozen_b.data(), m.frozen_b.size(), "frozen_b");
    m.layers.resize(n_layers);
    for (DenseLayer& l : m.layers) {
        l.in = static_cast<int>(binio::read_u32(is, "layer in"));
        l.out = static_cast<int>(binio::read_u32(is, "layer out"));
        l.w.resize(static_cast<size_t>(l.out) * l.in);
        binio::read_f64_array(is, l.w.data(), l.w.size(), "layer w");
        l.b.resize(l.out);
        binio::read_f64_array(is, l.b.data(), l.b.size(), "layer b");
    }
    return m;
}

}  // namespace ft
