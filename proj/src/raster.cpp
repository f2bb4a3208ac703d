#include "facetrack/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "binio.hpp"

namespace ft {

Image Image::filled(int w, int h, const Vec3& color) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.set_pixel(x, y, color);
    return img;
}

void Image::set_pixel(int x, int y, const Vec3& c) {
    at(x, y, 0) = std::clamp(c.x, 0.0, 1.0);
    at(x, y, 1) = std::clamp(c.y, 0.0, 1.0);
    at(x, y, 2) = std::clamp(c.z, 0.0, 1.0);
}

void ConfidenceMap::recount() {
    nonzero_count = 0;
    for (double v : w)
        if (v > 0.0) ++nonzero_count;
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

Vec3 sample_bilinear(const Image& img, double x, double y, BilinearGrad* grad) {
    const double cx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    int x0 = static_cast<int>(std::floor(cx));
    int y0 = static_cast<int>(std::floor(cy));
    x0 = std::min(x0, img.width - 2 < 0 ? 0 : img.width - 2);
    y0 = std::min(y0, img.height - 2 < 0 ? 0 : img.height - 2);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;

    const Vec3 c00 = img.pixel(x0, y0), c10 = img.pixel(x1, y0);
    const Vec3 c01 = img.pixel(x0, y1), c11 = img.pixel(x1, y1);
    const Vec3 top = c00 * (1.0 - fx) + c10 * fx;
    const Vec3 bot = c01 * (1.0 - fx) + c11 * fx;
    if (grad) {
        const bool inside_x = x >= 0.0 && x <= img.width - 1;
        const bool inside_y = y >= 0.0 && y <= img.height - 1;
        // clamped borders have zero outward gradient
        grad->dx = inside_x ? (c10 - c00) * (1.0 - fy) + (c11 - c01) * fy : Vec3{};
        grad->dy = inside_y ? bot - top : Vec3{};
    }
    return top * (1.0 - fy) + bot * fy;
}

Vec3 sample_bilinear(const Image& img, double x, double y) {
    return sample_bilinear(img, x, y, nullptr);
}

Image resize_bilinear(const Image& img, int w, int h) {
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = (x + 0.5) * img.width / w - 0.5;
            const double sy = (y + 0.5) * img.height / h - 0.5;
            out.set_pixel(x, y, sample_bilinear(img, sx, sy));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// rasterization
// ---------------------------------------------------------------------------

namespace {

struct ScreenTri {
    Vec2 a, b, c;
    double det = 0.0;

    bool degenerate() const { return std::abs(det) < 1e-12; }

    // barycentric weights of p; true when inside
    bool bary(const Vec2& p, double* w0, double* w1, double* w2) const {
        const double inv = 1.0 / det;
        const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) * inv;
        const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) * inv;
        const double l0 = 1.0 - l1 - l2;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) return false;
        *w0 = l0; *w1 = l1; *w2 = l2;
        return true;
    }
};

ScreenTri screen_tri(const Vec3& a, const Vec3& b, const Vec3& c) {
    ScreenTri t;
    t.a = a.xy(); t.b = b.xy(); t.c = c.xy();
    t.det = (t.b.x - t.a.x) * (t.c.y - t.a.y) - (t.c.x - t.a.x) * (t.b.y - t.a.y);
    return t;
}

}  // namespace

DepthBuffer rasterize_depth(const std::vector<Vec3>& posed, const MeshTopology& topology,
                            int width, int height) {
    DepthBuffer buf;
    buf.width = width;
    buf.height = height;
    buf.depth.assign(static_cast<size_t>(width) * height,
                     std::numeric_limits<double>::infinity());
    buf.tri.assign(static_cast<size_t>(width) * height, -1);

    for (size_t t = 0; t < topology.triangles.size(); ++t) {
        const auto& tri = topology.triangles[t];
        const Vec3& pa = posed[tri[0]];
        const Vec3& pb = posed[tri[1]];
        const Vec3& pc = posed[tri[2]];
        const ScreenTri st = screen_tri(pa, pb, pc);
        if (st.degenerate()) continue;

        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({st.a.x, st.b.x, st.c.x}))));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({st.a.x, st.b.x, st.c.x}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({st.a.y, st.b.y, st.c.y}))));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({st.a.y, st.b.y, st.c.y}))));

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double w0, w1, w2;
                if (!st.bary({static_cast<double>(x), static_cast<double>(y)}, &w0, &w1, &w2))
                    continue;
                const double z = w0 * pa.z + w1 * pb.z + w2 * pc.z;
                const size_t idx = static_cast<size_t>(y) * width + x;
                if (z < buf.depth[idx]) {
                    buf.depth[idx] = z;
                    buf.tri[idx] = static_cast<int32_t>(t);
                }
            }
        }
    }
    return buf;
}

Image render(const FaceGeometry& geom, const TextureMap& tex, const HeadPose& pose,
             const MeshTopology& topology, const Image& background, double brightness) {
    Image out = background;
    const std::vector<Vec3> posed = apply_pose(geom, pose);
    const int W = out.width, H = out.height;
    const int T = tex.size;

    std::vector<double> depth(static_cast<size_t>(W) * H,
                              std::numeric_limits<double>::infinity());

    for (size_t t = 0; t < topology.triangles.size(); ++t) {
        const auto& tri = topology.triangles[t];
        const Vec3& pa = posed[tri[0]];
        const Vec3& pb = posed[tri[1]];
        const Vec3& pc = posed[tri[2]];
        const ScreenTri st = screen_tri(pa, pb, pc);
        if (st.degenerate()) continue;

        const Vec2 uva = topology.uv[tri[0]];
        const Vec2 uvb = topology.uv[tri[1]];
        const Vec2 uvc = topology.uv[tri[2]];

        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({st.a.x, st.b.x, st.c.x}))));
        const int x1 = std::min(W - 1, static_cast<int>(std::floor(std::max({st.a.x, st.b.x, st.c.x}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({st.a.y, st.b.y, st.c.y}))));
        const int y1 = std::min(H - 1, static_cast<int>(std::floor(std::max({st.a.y, st.b.y, st.c.y}))));

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double w0, w1, w2;
                if (!st.bary({static_cast<double>(x), static_cast<double>(y)}, &w0, &w1, &w2))
                    continue;
                const double z = w0 * pa.z + w1 * pb.z + w2 * pc.z;
                const size_t idx = static_cast<size_t>(y) * W + x;
                if (z >= depth[idx]) continue;
                depth[idx] = z;
                const double u = w0 * uva.x + w1 * uvb.x + w2 * uvc.x;
                const double v = w0 * uva.y + w1 * uvb.y + w2 * uvc.y;
                // texel centers at ((j+0.5)/T, (i+0.5)/T)
                const double txc = u * T - 0.5;
                const double tyc = v * T - 0.5;
                Vec3 color{0, 0, 0};
                {
                    // bilinear in texture space with clamp-to-edge
                    const double cx = std::clamp(txc, 0.0, static_cast<double>(T - 1));
                    const double cy = std::clamp(tyc, 0.0, static_cast<double>(T - 1));
                    int tx0 = std::min(static_cast<int>(std::floor(cx)), T - 2 < 0 ? 0 : T - 2);
                    int ty0 = std::min(static_cast<int>(std::floor(cy)), T - 2 < 0 ? 0 : T - 2);
                    const int tx1 = std::min(tx0 + 1, T - 1);
                    const int ty1 = std::min(ty0 + 1, T - 1);
                    const double fx = cx - tx0, fy = cy - ty0;
                    const Vec3 c00 = tex.texel(ty0, tx0), c10 = tex.texel(ty0, tx1);
                    const Vec3 c01 = tex.texel(ty1, tx0), c11 = tex.texel(ty1, tx1);
                    color = (c00 * (1 - fx) + c10 * fx) * (1 - fy) +
                            (c01 * (1 - fx) + c11 * fx) * fy;
                }
                out.set_pixel(x, y, color * brightness);
            }
        }
    }
    return out;
}

std::optional<Vec3> texel_world_position(const FaceGeometry& geom,
                                         const MeshTopology& topology, int i, int j) {
    const TexelRef& ref = topology.texel_table[static_cast<size_t>(i) * topology.texture_size + j];
    if (ref.tri < 0) return std::nullopt;
    const auto& tri = topology.triangles[ref.tri];
    return geom.vertices[tri[0]] * ref.w0 + geom.vertices[tri[1]] * ref.w1 +
           geom.vertices[tri[2]] * ref.w2;
}

// ---------------------------------------------------------------------------
// unwrap
// ---------------------------------------------------------------------------

Unwrapped unwrap(const Image& image, const FaceGeometry& geom, const HeadPose& pose,
                 const MeshTopology& topology, double tau,
                 const FrozenVisibility* frozen) {
    const int T = topology.texture_size;
    if (T <= 0 || topology.texel_table.empty())
        throw std::invalid_argument("unwrap: topology has no texel table");
    if (tau < 0.0 || tau >= 1.0) throw std::invalid_argument("unwrap: tau must be in [0,1)");

    Unwrapped out;
    out.observed = TextureMap(T);
    out.conf = ConfidenceMap(T);
    out.vis.entries.assign(static_cast<size_t>(T) * T, {});

    const std::vector<Vec3> posed = apply_pose(geom, pose);

    DepthBuffer zbuf;
    std::vector<double> tri_conf;  // per-triangle incident cosine, 0 for back faces
    double depth_eps = 0.0;
    if (!frozen) {
        zbuf = rasterize_depth(posed, topology, image.width, image.height);
        tri_conf.resize(topology.triangles.size());
        double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
        for (const Vec3& p : posed) {
            zmin = std::min(zmin, p.z);
            zmax = std::max(zmax, p.z);
        }
        depth_eps = 1e-3 * (zmax - zmin) + 1e-9;
        for (size_t t = 0; t < topology.triangles.size(); ++t) {
            const auto& tri = topology.triangles[t];
            const Vec3 n = (posed[tri[1]] - posed[tri[0]]).cross(posed[tri[2]] - posed[tri[0]]);
            const double nn = n.norm();
            // viewing axis is (0,0,-1); front faces have n_z < 0
            tri_conf[t] = (nn > 1e-30 && n.z < 0.0) ? -n.z / nn : 0.0;
        }
    } else if (frozen->entries.size() != out.vis.entries.size()) {
        throw std::invalid_argument("unwrap: frozen visibility size mismatch");
    }

    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < T; ++j) {
            const size_t li = static_cast<size_t>(i) * T + j;
            const TexelRef& ref = topology.texel_table[li];
            if (ref.tri < 0) continue;
            const auto& tri = topology.triangles[ref.tri];
            const Vec3 pt = posed[tri[0]] * ref.w0 + posed[tri[1]] * ref.w1 +
                            posed[tri[2]] * ref.w2;
            const Vec2 proj = pt.xy();

            bool sampled;
            double conf;
            if (frozen) {
                sampled = frozen->entries[li].sampled != 0;
                conf = frozen->entries[li].conf;
            } else {
                conf = tri_conf[ref.tri];
                bool visible = conf > 0.0;
                if (visible) {
                    const bool in_frame = proj.x >= 0.0 && proj.x <= image.width - 1 &&
                                          proj.y >= 0.0 && proj.y <= image.height - 1;
                    if (!in_frame) {
                        visible = false;
                    } else {
                        const int px = static_cast<int>(std::lround(proj.x));
                        const int py = static_cast<int>(std::lround(proj.y));
                        const size_t pidx = static_cast<size_t>(py) * image.width + px;
                        const int32_t winner = zbuf.tri[pidx];
                        if (winner >= 0 && winner != ref.tri) {
                            // compare against the winner's depth plane at the
                            // exact projected position; continuous across
                            // shared edges, so only true occluders reject
                            const auto& wt = topology.triangles[winner];
                            const ScreenTri st =
                                screen_tri(posed[wt[0]], posed[wt[1]], posed[wt[2]]);
                            double wz = zbuf.depth[pidx];
                            if (!st.degenerate()) {
                                const double inv = 1.0 / st.det;
                                const double l1 = ((proj.x - st.a.x) * (st.c.y - st.a.y) -
                                                   (st.c.x - st.a.x) * (proj.y - st.a.y)) * inv;
                                const double l2 = ((st.b.x - st.a.x) * (proj.y - st.a.y) -
                                                   (proj.x - st.a.x) * (st.b.y - st.a.y)) * inv;
                                wz = (1.0 - l1 - l2) * posed[wt[0]].z + l1 * posed[wt[1]].z +
                                     l2 * posed[wt[2]].z;
                            }
                            if (pt.z > wz + depth_eps) visible = false;
                        }
                    }
                }
                sampled = visible;
                conf = visible ? conf : 0.0;
                if (conf < tau) conf = 0.0;
            }

            out.vis.entries[li].sampled = sampled ? 1 : 0;
            out.vis.entries[li].conf = conf;
            out.conf.w[li] = conf;

            if (!sampled) continue;
            if (conf > 0.0) {
                TexelSample s;
                s.index = static_cast<int32_t>(li);
                s.proj = proj;
                const Vec3 color = sample_bilinear(image, proj.x, proj.y, &s.grad);
                out.observed.data[li * 3 + 0] = color.x;
                out.observed.data[li * 3 + 1] = color.y;
                out.observed.data[li * 3 + 2] = color.z;
                out.samples.push_back(s);
            } else {
                const Vec3 color = sample_bilinear(image, proj.x, proj.y);
                out.observed.data[li * 3 + 0] = color.x;
                out.observed.data[li * 3 + 1] = color.y;
                out.observed.data[li * 3 + 2] = color.z;
            }
        }
    }
    out.conf.recount();
    return out;
}

void unwrap_backward(const Unwrapped& uw, const FaceGeometry& geom, const HeadPose& pose,
                     const MeshTopology& topology, const std::vector<double>& d_observed,
                     GeomGrad& d_geom, PoseGrad& d_pose) {
    if (d_observed.size() != uw.observed.data.size())
        throw std::invalid_argument("unwrap_backward: cotangent size mismatch");
    if (d_geom.size() != geom.vertices.size())
        d_geom.assign(geom.vertices.size(), Vec3{});

    const Mat3 rot = euler_to_rotation(pose.euler);
    const std::array<Mat3, 3> drot = euler_rotation_derivs(pose.euler);

    for (const TexelSample& s : uw.samples) {
        const Vec3 gc{d_observed[static_cast<size_t>(s.index) * 3 + 0],
                      d_observed[static_cast<size_t>(s.index) * 3 + 1],
                      d_observed[static_cast<size_t>(s.index) * 3 + 2]};
        const Vec2 guv{gc.dot(s.grad.dx), gc.dot(s.grad.dy)};
        if (guv.x == 0.0 && guv.y == 0.0) continue;

        const TexelRef& ref = topology.texel_table[s.index];
        const auto& tri = topology.triangles[ref.tri];
        const Vec3 xm = geom.vertices[tri[0]] * ref.w0 + geom.vertices[tri[1]] * ref.w1 +
                        geom.vertices[tri[2]] * ref.w2;

        Vec3 d_point{};
        accumulate_projection_grad(pose, rot, drot, xm, guv, d_pose, &d_point);
        d_geom[tri[0]] += d_point * ref.w0;
        d_geom[tri[1]] += d_point * ref.w1;
        d_geom[tri[2]] += d_point * ref.w2;
    }
}

// ---------------------------------------------------------------------------
// image I/O
// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("not a P6 PPM: " + path);
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comments
        int c = is.get();
        while (c == '#' || std::isspace(c)) {
            if (c == '#')
                while (c != '\n' && c != EOF) c = is.get();
            c = is.get();
        }
        int v = 0;
        bool any = false;
        while (std::isdigit(c)) {
            v = v * 10 + (c - '0');
            any = true;
            c = is.get();
        }
        if (!any) throw std::runtime_error("malformed PPM header: " + path);
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw std::runtime_error("unsupported PPM maxval: " + path);
    // next_int consumed the single whitespace after maxval
    Image img(w, h);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("truncated PPM: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    return img;
}

void write_float_image(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write("FTIMGF1\n", 8);
    binio::write_u32(os, static_cast<uint32_t>(img.width));
    binio::write_u32(os, static_cast<uint32_t>(img.height));
    binio::write_f64_array(os, img.data.data(), img.data.size());
    if (!os) throw std::runtime_error("write failed: " + path);
}

Image read_float_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);
    char magic[8];
    binio::read_bytes(is, magic, 8, "float image magic");
    if (std::memcmp(magic, "FTIMGF1\n", 8) != 0)
        throw std::runtime_error("bad float image magic: " + path);
    const int w = static_cast<int>(binio::read_u32(is, "width"));
    const int h = static_cast<int>(binio::read_u32(is, "height"));
    Image img(w, h);
    binio::read_f64_array(is, img.data.data(), img.data.size(), "pixels");
    return img;
}

}  // namespace ft
