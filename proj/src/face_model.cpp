#include "facetrack/face_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "binio.hpp"
#include "facetrack/rng.hpp"

namespace ft {

FaceGeometry decode_geometry(const DecoderModel& model, const LatentCode& z) {
    if (static_cast<int>(z.size()) != model.dim)
        throw std::invalid_argument("decode: latent dimension mismatch");
    FaceGeometry g;
    g.vertices = model.geom_mean.vertices;
    for (int j = 0; j < model.dim; ++j) {
        const double zj = z[j];
        if (zj == 0.0) continue;
        const auto& col = model.geom_basis[j];
        for (size_t i = 0; i < g.vertices.size(); ++i) g.vertices[i] += col[i] * zj;
    }
    return g;
}

Decoded decode(const DecoderModel& model, const LatentCode& z) {
    Decoded out;
    out.geom = decode_geometry(model, z);
    out.tex_raw = model.tex_mean;
    for (int j = 0; j < model.dim; ++j) {
        const double zj = z[j];
        if (zj == 0.0) continue;
        const auto& col = model.tex_basis[j];
        for (size_t i = 0; i < out.tex_raw.data.size(); ++i) out.tex_raw.data[i] += col[i] * zj;
    }
    out.tex = out.tex_raw;
    for (double& v : out.tex.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

std::vector<Vec3> landmark_positions(const FaceGeometry& geom,
                                     const std::vector<uint32_t>& indices) {
    std::vector<Vec3> out(indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= geom.vertices.size())
            throw std::out_of_range("landmark_positions: index out of range");
        out[k] = geom.vertices[indices[k]];
    }
    return out;
}

void decode_backward(const DecoderModel& model, const GeomGrad& d_geom,
                     const std::vector<double>& d_tex, const TextureMap& tex_raw,
                     std::vector<double>& dz) {
    dz.assign(model.dim, 0.0);
    if (!d_geom.empty() && d_geom.size() != model.geom_mean.vertices.size())
        throw std::invalid_argument("decode_backward: geometry cotangent size mismatch");
    if (!d_tex.empty() && d_tex.size() != model.tex_mean.data.size())
        throw std::invalid_argument("decode_backward: texture cotangent size mismatch");
    for (int j = 0; j < model.dim; ++j) {
        double acc = 0.0;
        if (!d_geom.empty()) {
            const auto& col = model.geom_basis[j];
            for (size_t i = 0; i < d_geom.size(); ++i) acc += d_geom[i].dot(col[i]);
        }
        if (!d_tex.empty()) {
            const auto& col = model.tex_basis[j];
            for (size_t i = 0; i < d_tex.size(); ++i) {
                // clamp subgradient: zero where the raw value left [0,1]
                const double raw = tex_raw.data[i];
                if (raw > 0.0 && raw < 1.0) acc += d_tex[i] * col[i];
            }
        }
        dz[j] = acc;
    }
}

// ---------------------------------------------------------------------------
// synthetic identity
// ---------------------------------------------------------------------------

namespace {

// Smooth low-frequency random field over [-1,1]^2, a short sum of sinusoids.
struct SmoothField {
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::vector<Wave> waves;

    static SmoothField make(Rng& rng, int n_waves, double max_freq) {
        SmoothField f;
        f.waves.resize(n_waves);
        for (auto& w : f.waves) {
            w.kx = rng.uniform(-max_freq, max_freq);
            w.ky = rng.uniform(-max_freq, max_freq);
            w.phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            w.amp = rng.normal();
        }
        return f;
    }

    double operator()(double x, double y) const {
        double s = 0.0;
        for (const auto& w : waves) s += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
        return s;
    }
};

double face_height(double x, double y) {
    // negative z points toward the camera; nose/brows protrude
    double h = -0.55 * std::exp(-(x * x + y * y) / 0.9);
    h += -0.30 * std::exp(-(x * x + (y + 0.05) * (y + 0.05)) / 0.035);
    h += -0.12 * std::exp(-((x + 0.35) * (x + 0.35) + (y + 0.38) * (y + 0.38)) / 0.025);
    h += -0.12 * std::exp(-((x - 0.35) * (x - 0.35) + (y + 0.38) * (y + 0.38)) / 0.025);
    return h;
}

// Map a fractional grid position to a vertex index, probing forward past
// already-used vertices.
uint32_t place_index(double row_frac, double col_frac, int grid_n,
                     std::set<uint32_t>& used) {
    const int r = std::clamp(static_cast<int>(std::lround(row_frac * (grid_n - 1))), 0, grid_n - 1);
    const int c = std::clamp(static_cast<int>(std::lround(col_frac * (grid_n - 1))), 0, grid_n - 1);
    uint32_t idx = static_cast<uint32_t>(r) * grid_n + c;
    const uint32_t total = static_cast<uint32_t>(grid_n) * grid_n;
    while (used.count(idx)) idx = (idx + 1) % total;
    used.insert(idx);
    return idx;
}

void paint_spot(TextureMap& tex, double cu, double cv, double radius, const Vec3& tint) {
    const int T = tex.size;
    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < T; ++j) {
            const double u = (j + 0.5) / T, v = (i + 0.5) / T;
            const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
            const double w = std::exp(-d2 / (radius * radius));
            if (w < 1e-4) continue;
            tex.set_texel(i, j, tex.texel(i, j) + tint * w);
        }
    }
}

}  // namespace

DecoderModel synth_identity(uint64_t seed, int d, int texture_size, int grid_n) {
    if (grid_n < 5) throw std::invalid_argument("synth_identity: grid_n must be >= 5");
    if (d < 1) throw std::invalid_argument("synth_identity: d must be >= 1");

    Rng rng(seed);
    DecoderModel model;
    model.dim = d;

    // grid heightfield mesh over [-1,1]^2, y down to match image convention
    const int G = grid_n * grid_n;
    model.geom_mean.vertices.resize(G);
    model.topology.uv.resize(G);
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            const double x = -1.0 + 2.0 * j / (grid_n - 1);
            const double y = -1.0 + 2.0 * i / (grid_n - 1);
            model.geom_mean.vertices[i * grid_n + j] = {x, y, face_height(x, y)};
            model.topology.uv[i * grid_n + j] = {static_cast<double>(j) / (grid_n - 1),
                                                 static_cast<double>(i) / (grid_n - 1)};
        }
    }
    // wind triangles so neutral normals face the camera (n_z < 0)
    for (int i = 0; i + 1 < grid_n; ++i) {
        for (int j = 0; j + 1 < grid_n; ++j) {
            const uint32_t a = static_cast<uint32_t>(i * grid_n + j);
            const uint32_t b = a + 1;
            const uint32_t c = a + grid_n;
            const uint32_t e = c + 1;
            model.topology.triangles.push_back({a, c, b});
            model.topology.triangles.push_back({b, c, e});
        }
    }

    // geometry basis: smooth random per-axis displacement fields, unit norm
    Rng grng = rng.fork(1);
    model.geom_basis.resize(d);
    for (int col = 0; col < d; ++col) {
        SmoothField fx = SmoothField::make(grng, 3, 2.2);
        SmoothField fy = SmoothField::make(grng, 3, 2.2);
        SmoothField fz = SmoothField::make(grng, 3, 2.2);
        auto& basis = model.geom_basis[col];
        basis.resize(G);
        double norm2 = 0.0;
        for (int i = 0; i < G; ++i) {
            const Vec3& p = model.geom_mean.vertices[i];
            // taper toward the mesh rim so the face outline stays stable
            const double rim = std::max(std::abs(p.x), std::abs(p.y));
            const double taper = 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, rim)));
            basis[i] = Vec3{fx(p.x, p.y), fy(p.x, p.y), fz(p.x, p.y)} * taper;
            norm2 += basis[i].dot(basis[i]);
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
        for (auto& v : basis) v = v * inv;
    }

    // mean texture: skin tone, gentle shading, mottling, freckles, features
    Rng trng = rng.fork(2);
    model.tex_mean = TextureMap(texture_size);
    SmoothField mottle_r = SmoothField::make(trng, 4, 7.0);
    SmoothField mottle_g = SmoothField::make(trng, 4, 7.0);
    SmoothField mottle_b = SmoothField::make(trng, 4, 7.0);
    for (int i = 0; i < texture_size; ++i) {
        for (int j = 0; j < texture_size; ++j) {
            const double u = (j + 0.5) / texture_size, v = (i + 0.5) / texture_size;
            const double cx = u - 0.5, cy = v - 0.5;
            const double shade = 1.0 - 0.25 * (cx * cx + cy * cy) * 4.0 * 0.5;
            Vec3 c{0.76 * shade, 0.60 * shade, 0.50 * shade};
            c.x += 0.05 * mottle_r(cx * 2, cy * 2);
            c.y += 0.05 * mottle_g(cx * 2, cy * 2);
            c.z += 0.05 * mottle_b(cx * 2, cy * 2);
            model.tex_mean.set_texel(i, j, c);
        }
    }
    // brows, eyes, lips
    paint_spot(model.tex_mean, 0.33, 0.30, 0.07, {-0.28, -0.24, -0.20});
    paint_spot(model.tex_mean, 0.67, 0.30, 0.07, {-0.28, -0.24, -0.20});
    paint_spot(model.tex_mean, 0.33, 0.40, 0.05, {-0.35, -0.25, -0.10});
    paint_spot(model.tex_mean, 0.67, 0.40, 0.05, {-0.35, -0.25, -0.10});
    paint_spot(model.tex_mean, 0.50, 0.74, 0.08, {0.08, -0.22, -0.18});
    // freckles
    for (int s = 0; s < 10; ++s) {
        const double cu = trng.uniform(0.15, 0.85);
        const double cv = trng.uniform(0.15, 0.85);
        const double r = trng.uniform(0.03, 0.06);
        paint_spot(model.tex_mean, cu, cv, r, Vec3{-0.20, -0.14, -0.06} * trng.uniform(0.6, 1.0));
    }
    for (double& value : model.tex_mean.data) value = std::clamp(value, 0.06, 0.94);

    // texture basis: smooth random color fields, unit norm
    model.tex_basis.resize(d);
    for (int col = 0; col < d; ++col) {
        SmoothField fr = SmoothField::make(trng, 3, 5.0);
        SmoothField fg = SmoothField::make(trng, 3, 5.0);
        SmoothField fb = SmoothField::make(trng, 3, 5.0);
        auto& basis = model.tex_basis[col];
        basis.assign(static_cast<size_t>(texture_size) * texture_size * 3, 0.0);
        double norm2 = 0.0;
        for (int i = 0; i < texture_size; ++i) {
            for (int j = 0; j < texture_size; ++j) {
                const double u = (j + 0.5) / texture_size - 0.5, v = (i + 0.5) / texture_size - 0.5;
                const size_t base = (static_cast<size_t>(i) * texture_size + j) * 3;
                basis[base + 0] = fr(u * 2, v * 2);
                basis[base + 1] = fg(u * 2, v * 2);
                basis[base + 2] = fb(u * 2, v * 2);
                norm2 += basis[base] * basis[base] + basis[base + 1] * basis[base + 1] +
                         basis[base + 2] * basis[base + 2];
            }
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
        for (double& value : basis) value *= inv;
    }

    // landmark vertices: eye corners, nose tip, mouth region; markers are
    // separate "salient spots" used only by evaluation
    std::set<uint32_t> used;
    const double lm[8][2] = {{0.32, 0.22}, {0.32, 0.42}, {0.32, 0.58}, {0.32, 0.78},
                             {0.50, 0.50}, {0.70, 0.34}, {0.70, 0.50}, {0.70, 0.66}};
    for (const auto& p : lm)
        model.landmark_indices.push_back(place_index(p[0], p[1], grid_n, used));
    const double mk[5][2] = {{0.16, 0.50}, {0.48, 0.18}, {0.48, 0.82}, {0.62, 0.42}, {0.86, 0.50}};
    for (const auto& p : mk)
        model.marker_indices.push_back(place_index(p[0], p[1], grid_n, used));

    build_texel_table(model.topology, texture_size);
    return model;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------
// Layout (little-endian):
//   magic "FTDECOD1" | u32 version=1 | u32 d,G,T,ntri,K,M
//   geom_mean G*3 f64 | geom_basis d*G*3 f64 | tex_mean T*T*3 f64
//   tex_basis d*T*T*3 f64 | triangles ntri*3 u32 | uv G*2 f64
//   landmark_indices K u32 | marker_indices M u32
// The texel table is rebuilt on load.

static constexpr char kDecoderMagic[8] = {'F', 'T', 'D', 'E', 'C', 'O', 'D', '1'};

void save_decoder(const DecoderModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    binio::write_bytes(os, kDecoderMagic, 8);
    binio::write_u32(os, 1);
    const uint32_t G = static_cast<uint32_t>(model.geom_mean.vertices.size());
    const uint32_t T = static_cast<uint32_t>(model.tex_mean.size);
    const uint32_t ntri = static_cast<uint32_t>(model.topology.triangles.size());
    binio::write_u32(os, static_cast<uint32_t>(model.dim));
    binio::write_u32(os, G);
    binio::write_u32(os, T);
    binio::write_u32(os, ntri);
    binio::write_u32(os, static_cast<uint32_t>(model.landmark_indices.size()));
    binio::write_u32(os, static_cast<uint32_t>(model.marker_indices.size()));
    for (const Vec3& v : model.geom_mean.vertices) {
        binio::write_f64(os, v.x); binio::write_f64(os, v.y); binio::write_f64(os, v.z);
    }
    for (const auto& col : model.geom_basis)
        for (const Vec3& v : col) {
            binio::write_f64(os, v.x); binio::write_f64(os, v.y); binio::write_f64(os, v.z);
        }
    binio::write_f64_array(os, model.tex_mean.data.data(), model.tex_mean.data.size());
    for (const auto& col : model.tex_basis)
        binio::write_f64_array(os, col.data(), col.size());
    for (const auto& t : model.topology.triangles)
        for (uint32_t v : t) binio::write_u32(os, v);
    for (const Vec2& v : model.topology.uv) {
        binio::write_f64(os, v.x); binio::write_f64(os, v.y);
    }
    for (uint32_t v : model.landmark_indices) binio::write_u32(os, v);
    for (uint32_t v : model.marker_indices) binio::write_u32(os, v);
    if (!os) throw std::runtime_error("write failed: " + path);
}

DecoderModel load_decoder(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open decoder file: " + path);
    char magic[8];
    binio::read_bytes(is, magic, 8, "decoder magic");
    if (std::memcmp(magic, kDecoderMagic, 8) != 0)
        throw std::runtime_error("bad decoder magic in " + path);
    const uint32_t version = binio::read_u32(is, "decoder version");
    if (version != 1) throw std::runtime_error("unsupported decoder version");
    DecoderModel model;
    model.dim = static_cast<int>(binio::read_u32(is, "d"));
    const uint32_t G = binio::read_u32(is, "G");
    const uint32_t T = binio::read_u32(is, "T");
    const uint32_t ntri = binio::read_u32(is, "ntri");
    const uint32_t K = binio::read_u32(is, "K");
    const uint32_t M = binio::read_u32(is, "M");
    model.geom_mean.vertices.resize(G);
    for (Vec3& v : model.geom_mean.vertices) {
        v.x = binio::read_f64(is, "geom_mean");
        v.y = binio::read_f64(is, "geom_mean");
        v.z = binio::read_f64(is, "geom_mean");
    }
    model.geom_basis.resize(model.dim);
    for (auto& col : model.geom_basis) {
        col.resize(G);
        for (Vec3& v : col) {
            v.x = binio::read_f64(is, "geom_basis");
            v.y = binio::read_f64(is, "geom_basis");
            v.z = binio::read_f64(is, "geom_basis");
        }
    }
    model.tex_mean = TextureMap(static_cast<int>(T));
    binio::read_f64_array(is, model.tex_mean.data.data(), model.tex_mean.data.size(), "tex_mean");
    model.tex_basis.resize(model.dim);
    for (auto& col : model.tex_basis) {
        col.resize(static_cast<size_t>(T) * T * 3);
        binio::read_f64_array(is, col.data(), col.size(), "tex_basis");
    }
    model.topology.triangles.resize(ntri);
    for (auto& t : model.topology.triangles)
        for (uint32_t& v : t) v = binio::read_u32(is, "triangles");
    model.topology.uv.resize(G);
    for (Vec2& v : model.topology.uv) {
        v.x = binio::read_f64(is, "uv");
        v.y = binio::read_f64(is, "uv");
    }
    model.landmark_indices.resize(K);
    for (uint32_t& v : model.landmark_indices) v = binio::read_u32(is, "landmark_indices");
    model.marker_indices.resize(M);
    for (uint32_t& v : model.marker_indices) v = binio::read_u32(is, "marker_indices");
    build_texel_table(model.topology, static_cast<int>(T));
    return model;
}

}  // namespace ft
