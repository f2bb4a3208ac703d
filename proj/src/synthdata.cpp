#include "facetrack/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "facetrack/rng.hpp"

namespace fs = std::filesystem;

namespace ft {

DomainSpec benchmark_domain_gap() {
    DomainSpec spec;
    // warm-to-cool white balance shift, condition number well under 20
    spec.color_matrix.m[0][0] = 0.78; spec.color_matrix.m[0][1] = 0.12; spec.color_matrix.m[0][2] = 0.04;
    spec.color_matrix.m[1][0] = 0.06; spec.color_matrix.m[1][1] = 0.82; spec.color_matrix.m[1][2] = 0.10;
    spec.color_matrix.m[2][0] = 0.03; spec.color_matrix.m[2][1] = 0.09; spec.color_matrix.m[2][2] = 0.96;
    spec.brightness = 0.88;
    spec.clutter_seed = 9001;
    spec.noise_sigma = 0.012;
    spec.detect_sigma = 1.0;
    return spec;
}

namespace {

struct Trajectory {
    std::vector<LatentCode> z;
    std::vector<HeadPose> pose;
};

// Ornstein-Uhlenbeck style walks: smooth in z, gentle in pose, clipped to
// the generator's bounded ranges.
Trajectory make_trajectory(int d, int frames, int resolution, const TrajectoryParams& p,
                           Rng rng) {
    Trajectory tr;
    tr.z.resize(frames);
    tr.pose.resize(frames);

    LatentCode z(d);
    for (double& v : z) v = rng.uniform(-0.5, 0.5);
    Vec3 euler{rng.uniform(-0.5, 0.5) * p.euler_amp, rng.uniform(-0.5, 0.5) * p.euler_amp,
               rng.uniform(-0.5, 0.5) * p.euler_amp};
    double log_scale = 0.0;
    Vec2 trans{0.0, 0.0};
    const double base_scale = 0.36 * resolution;
    const Vec2 center{0.5 * (resolution - 1), 0.5 * (resolution - 1)};

    for (int t = 0; t < frames; ++t) {
        tr.z[t] = z;
        HeadPose pose;
        pose.scale = base_scale * std::exp(log_scale);
        pose.euler = euler;
        pose.trans = center + trans;
        tr.pose[t] = pose;

        for (int j = 0; j < d; ++j)
            z[j] = std::clamp(z[j] - p.z_revert * z[j] + p.z_sigma * rng.normal(), -1.0, 1.0);
        auto walk = [&rng](double v, double revert, double sigma, double amp) {
            return std::clamp(v - revert * v + sigma * rng.normal(), -amp, amp);
        };
        euler.x = walk(euler.x, 0.10, 0.30 * p.euler_amp, p.euler_amp);
        euler.y = walk(euler.y, 0.10, 0.30 * p.euler_amp, p.euler_amp);
        euler.z = walk(euler.z, 0.10, 0.20 * p.euler_amp, 0.7 * p.euler_amp);
        log_scale = walk(log_scale, 0.10, 0.25 * p.scale_jitter, p.scale_jitter);
        trans.x = walk(trans.x, 0.10, 0.25 * p.trans_amp, p.trans_amp);
        trans.y = walk(trans.y, 0.10, 0.25 * p.trans_amp, p.trans_amp);
    }
    return tr;
}

std::vector<Vec2> project_indices(const FaceGeometry& geom, const HeadPose& pose,
                                  const std::vector<uint32_t>& indices) {
    const std::vector<Vec3> pts = landmark_positions(geom, indices);
    std::vector<Vec2> out(pts.size());
    const Mat3 rot = euler_to_rotation(pose.euler);
    for (size_t k = 0; k < pts.size(); ++k)
        out[k] = weak_project(apply_pose_point(pose, rot, pts[k]));
    return out;
}

Image clutter_background(int resolution, uint64_t seed) {
    if (seed == 0) return Image::filled(resolution, resolution, {0.35, 0.35, 0.35});
    Rng rng(seed);
    Image bg(resolution, resolution);
    // vertical gradient base
    const Vec3 top{rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)};
    const Vec3 bot{rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)};
    for (int y = 0; y < resolution; ++y) {
        const double a = static_cast<double>(y) / (resolution - 1);
        const Vec3 c = top * (1.0 - a) + bot * a;
        for (int x = 0; x < resolution; ++x) bg.set_pixel(x, y, c);
    }
    // rectangles and soft blobs
    const int n_rect = 14;
    for (int r = 0; r < n_rect; ++r) {
        const int w = static_cast<int>(rng.uniform(0.05, 0.35) * resolution);
        const int h = static_cast<int>(rng.uniform(0.05, 0.35) * resolution);
        const int x0 = static_cast<int>(rng.uniform(0, resolution - 1));
        const int y0 = static_cast<int>(rng.uniform(0, resolution - 1));
        const Vec3 c{rng.uniform(0.05, 0.8), rng.uniform(0.05, 0.8), rng.uniform(0.05, 0.8)};
        for (int y = y0; y < std::min(y0 + h, resolution); ++y)
            for (int x = x0; x < std::min(x0 + w, resolution); ++x) bg.set_pixel(x, y, c);
    }
    for (int s = 0; s < 8; ++s) {
        const double cx = rng.uniform(0, resolution);
        const double cy = rng.uniform(0, resolution);
        const double rad = rng.uniform(0.02, 0.12) * resolution;
        const Vec3 c{rng.uniform(0.05, 0.9), rng.uniform(0.05, 0.9), rng.uniform(0.05, 0.9)};
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double w = std::exp(-d2 / (rad * rad));
                if (w < 0.02) continue;
                bg.set_pixel(x, y, bg.pixel(x, y) * (1.0 - w) + c * w);
            }
    }
    return bg;
}

}  // namespace

LabDataset generate_lab(const DecoderModel& model, int frames, int views,
                        int resolution, uint64_t seed) {
    if (frames < 1 || views < 1) throw std::invalid_argument("generate_lab: empty dataset");
    LabDataset ds;
    ds.views = views;
    ds.resolution = resolution;

    Rng rng(seed);
    const Trajectory tr = make_trajectory(model.dim, frames, resolution, TrajectoryParams{},
                                          rng.fork(11));
    ds.z_gt = tr.z;

    std::vector<double> yaw_offsets(views, 0.0);
    if (views > 1)
        for (int v = 0; v < views; ++v)
            yaw_offsets[v] = -0.35 + 0.7 * static_cast<double>(v) / (views - 1);

    const Image bg = Image::filled(resolution, resolution, {0.35, 0.35, 0.35});
    ds.images.reserve(static_cast<size_t>(frames) * views);
    ds.pose_gt.reserve(ds.images.capacity());
    ds.k2d_gt.reserve(ds.images.capacity());

    for (int t = 0; t < frames; ++t) {
        const Decoded dec = decode(model, ds.z_gt[t]);
        for (int v = 0; v < views; ++v) {
            HeadPose pose = tr.pose[t];
            pose.euler.y += yaw_offsets[v];
            ds.pose_gt.push_back(pose);
            ds.k2d_gt.push_back(project_indices(dec.geom, pose, model.landmark_indices));
            ds.images.push_back(render(dec.geom, dec.tex, pose, model.topology, bg, 1.0));
        }
    }
    return ds;
}

WildSequence generate_wild(const DecoderModel& model, const DomainSpec& spec,
                           int frames, int resolution, uint64_t seed) {
    if (frames < 1) throw std::invalid_argument("generate_wild: empty sequence");
    WildSequence seq;
    seq.resolution = resolution;

    Rng rng(seed);
    const Trajectory tr = make_trajectory(model.dim, frames, resolution, spec.traj,
                                          rng.fork(23));
    seq.gt_z = tr.z;
    seq.gt_pose = tr.pose;
    seq.has_gt = true;

    const Image bg = clutter_background(resolution, spec.clutter_seed);
    Rng noise_rng = rng.fork(29);
    Rng detect_rng = rng.fork(31);

    for (int t = 0; t < frames; ++t) {
        const Decoded dec = decode(model, seq.gt_z[t]);
        const HeadPose& pose = seq.gt_pose[t];
        Image frame = render(dec.geom, dec.tex, pose, model.topology, bg, 1.0);
        // domain gap: global color transform, dimming, sensor noise
        const bool identity_gap =
            spec.brightness == 1.0 && spec.noise_sigma == 0.0 &&
            (spec.color_matrix - Mat3::identity()).frobenius() == 0.0;
        if (!identity_gap) {
            for (int y = 0; y < resolution; ++y)
                for (int x = 0; x < resolution; ++x) {
                    Vec3 c = spec.color_matrix * (frame.pixel(x, y) * spec.brightness);
                    if (spec.noise_sigma > 0.0)
                        c += Vec3{noise_rng.normal(0.0, spec.noise_sigma),
                                  noise_rng.normal(0.0, spec.noise_sigma),
                                  noise_rng.normal(0.0, spec.noise_sigma)};
                    frame.set_pixel(x, y, c);
                }
        }
        seq.frames.push_back(std::move(frame));

        std::vector<Vec2> det = project_indices(dec.geom, pose, model.landmark_indices);
        if (spec.detect_sigma > 0.0)
            for (Vec2& p : det)
                p += Vec2{detect_rng.normal(0.0, spec.detect_sigma),
                          detect_rng.normal(0.0, spec.detect_sigma)};
        seq.detections.push_back(std::move(det));
        seq.marker_gt.push_back(project_indices(dec.geom, pose, model.marker_indices));
    }
    return seq;
}

// ---------------------------------------------------------------------------
// dataset I/O
// ---------------------------------------------------------------------------

namespace {

std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.ppm", t);
    return buf;
}

void write_points_csv(const std::string& path, const char* index_name,
                      const std::vector<std::vector<Vec2>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "frame," << index_name << ",x,y\n";
    char buf[80];
    for (size_t t = 0; t < rows.size(); ++t)
        for (size_t k = 0; k < rows[t].size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g\n", t, k, rows[t][k].x,
                          rows[t][k].y);
            os << buf;
        }
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<std::vector<Vec2>> read_points_csv(const std::string& path, int frames) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing dataset file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty csv: " + path);
    std::vector<std::vector<Vec2>> rows(frames);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t t, k;
        double x, y;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf", &t, &k, &x, &y) != 4)
            throw std::runtime_error("malformed csv row in " + path + ": " + line);
        if (t >= rows.size()) throw std::runtime_error("frame index out of range in " + path);
        if (rows[t].size() != k) throw std::runtime_error("non-contiguous indices in " + path);
        rows[t].push_back({x, y});
    }
    return rows;
}

// sidecar: magic "FTSIDEG1" | u32 frames | u32 d | per frame: z (d f64),
// scale, euler xyz, trans xy (6 f64)
constexpr char kSidecarMagic[8] = {'F', 'T', 'S', 'I', 'D', 'E', 'G', '1'};

void write_sidecar(const std::string& path, const std::vector<LatentCode>& z,
                   const std::vector<HeadPose>& pose) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    binio::write_bytes(os, kSidecarMagic, 8);
    binio::write_u32(os, static_cast<uint32_t>(z.size()));
    binio::write_u32(os, z.empty() ? 0 : static_cast<uint32_t>(z[0].size()));
    for (size_t t = 0; t < z.size(); ++t) {
        binio::write_f64_array(os, z[t].data(), z[t].size());
        const HeadPose& p = pose[t];
        binio::write_f64(os, p.scale);
        binio::write_f64(os, p.euler.x);
        binio::write_f64(os, p.euler.y);
        binio::write_f64(os, p.euler.z);
        binio::write_f64(os, p.trans.x);
        binio::write_f64(os, p.trans.y);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

void read_sidecar(const std::string& path, std::vector<LatentCode>& z,
                  std::vector<HeadPose>& pose) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open sidecar: " + path);
    char magic[8];
    binio::read_bytes(is, magic, 8, "sidecar magic");
    if (std::memcmp(magic, kSidecarMagic, 8) != 0)
        throw std::runtime_error("bad sidecar magic: " + path);
    const uint32_t frames = binio::read_u32(is, "frames");
    const uint32_t d = binio::read_u32(is, "d");
    z.assign(frames, LatentCode(d));
    pose.assign(frames, HeadPose{});
    for (uint32_t t = 0; t < frames; ++t) {
        binio::read_f64_array(is, z[t].data(), d, "sidecar z");
        pose[t].scale = binio::read_f64(is, "sidecar pose");
        pose[t].euler.x = binio::read_f64(is, "sidecar pose");
        pose[t].euler.y = binio::read_f64(is, "sidecar pose");
        pose[t].euler.z = binio::read_f64(is, "sidecar pose");
        pose[t].trans.x = binio::read_f64(is, "sidecar pose");
        pose[t].trans.y = binio::read_f64(is, "sidecar pose");
    }
}

std::map<std::string, std::string> read_meta(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing dataset file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace

void save_wild(const WildSequence& seq, const std::string& dir, bool write_sidecar_file) {
    fs::create_directories(fs::path(dir) / "frames");
    {
        std::ofstream os(fs::path(dir) / "meta.txt");
        os << "type=wild\nframes=" << seq.frame_count() << "\nresolution=" << seq.resolution
           << "\n";
    }
    for (int t = 0; t < seq.frame_count(); ++t)
        write_ppm((fs::path(dir) / "frames" / frame_name(t)).string(), seq.frames[t]);
    write_points_csv((fs::path(dir) / "landmarks.csv").string(), "landmark", seq.detections);
    write_points_csv((fs::path(dir) / "markers.csv").string(), "marker", seq.marker_gt);
    if (write_sidecar_file && seq.has_gt)
        write_sidecar((fs::path(dir) / "sidecar_gt.bin").string(), seq.gt_z, seq.gt_pose);
}

WildSequence load_wild(const std::string& dir) {
    const auto meta = read_meta((fs::path(dir) / "meta.txt").string());
    WildSequence seq;
    const int frames = std::stoi(meta.at("frames"));
    seq.resolution = std::stoi(meta.at("resolution"));
    for (int t = 0; t < frames; ++t)
        seq.frames.push_back(read_ppm((fs::path(dir) / "frames" / frame_name(t)).string()));
    seq.detections = read_points_csv((fs::path(dir) / "landmarks.csv").string(), frames);
    seq.marker_gt = read_points_csv((fs::path(dir) / "markers.csv").string(), frames);
    const fs::path sidecar = fs::path(dir) / "sidecar_gt.bin";
    if (fs::exists(sidecar)) {
        read_sidecar(sidecar.string(), seq.gt_z, seq.gt_pose);
        seq.has_gt = true;
    }
    return seq;
}

void save_lab(const LabDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream os(fs::path(dir) / "meta.txt");
        os << "type=lab\nframes=" << ds.frame_count() << "\nviews=" << ds.views
           << "\nresolution=" << ds.resolution << "\n";
    }
    for (int v = 0; v < ds.views; ++v) {
        const fs::path vdir = fs::path(dir) / ("view" + std::to_string(v));
        fs::create_directories(vdir / "frames");
        std::vector<std::vector<Vec2>> k2d(ds.frame_count());
        std::vector<HeadPose> poses(ds.frame_count());
        for (int t = 0; t < ds.frame_count(); ++t) {
            const size_t i = static_cast<size_t>(t) * ds.views + v;
            write_ppm((vdir / "frames" / frame_name(t)).string(), ds.images[i]);
            k2d[t] = ds.k2d_gt[i];
            poses[t] = ds.pose_gt[i];
        }
        write_points_csv((vdir / "landmarks.csv").string(), "landmark", k2d);
        write_sidecar((vdir / "sidecar_gt.bin").string(), ds.z_gt, poses);
    }
}

LabDataset load_lab(const std::string& dir) {
    const auto meta = read_meta((fs::path(dir) / "meta.txt").string());
    LabDataset ds;
    const int frames = std::stoi(meta.at("frames"));
    ds.views = std::stoi(meta.at("views"));
    ds.resolution = std::stoi(meta.at("resolution"));
    ds.images.resize(static_cast<size_t>(frames) * ds.views);
    ds.pose_gt.resize(ds.images.size());
    ds.k2d_gt.resize(ds.images.size());
    for (int v = 0; v < ds.views; ++v) {
        const fs::path vdir = fs::path(dir) / ("view" + std::to_string(v));
        const auto k2d = read_points_csv((vdir / "landmarks.csv").string(), frames);
        std::vector<LatentCode> z;
        std::vector<HeadPose> poses;
        read_sidecar((vdir / "sidecar_gt.bin").string(), z, poses);
        if (v == 0) ds.z_gt = z;
        for (int t = 0; t < frames; ++t) {
            const size_t i = static_cast<size_t>(t) * ds.views + v;
            ds.images[i] = read_ppm((vdir / "frames" / frame_name(t)).string());
            ds.pose_gt[i] = poses[t];
            ds.k2d_gt[i] = k2d[t];
        }
    }
    return ds;
}

DomainSpec load_domain_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open domain spec: " + path);
    DomainSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed domain spec line " + std::to_string(lineno));
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "color_matrix") {
            std::istringstream vs(val);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    if (!(vs >> spec.color_matrix.m[i][j]))
                        throw std::runtime_error("color_matrix needs 9 reals");
        } else if (key == "brightness") {
            spec.brightness = std::stod(val);
        } else if (key == "clutter_seed") {
            spec.clutter_seed = std::stoull(val);
        } else if (key == "noise_sigma") {
            spec.noise_sigma = std::stod(val);
        } else if (key == "detect_sigma") {
            spec.detect_sigma = std::stod(val);
        } else if (key == "z_sigma") {
            spec.traj.z_sigma = std::stod(val);
        } else if (key == "z_revert") {
            spec.traj.z_revert = std::stod(val);
        } else if (key == "euler_amp") {
            spec.traj.euler_amp = std::stod(val);
        } else if (key == "scale_jitter") {
            spec.traj.scale_jitter = std::stod(val);
        } else if (key == "trans_amp") {
            spec.traj.trans_amp = std::stod(val);
        } else {
            throw std::runtime_error("unknown domain spec key: " + key);
        }
    }
    return spec;
}

}  // namespace ft
