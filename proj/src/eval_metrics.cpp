#include "facetrack/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ft {

StabilityResult stability(const std::vector<std::vector<Vec3>>& vertex_seq, double eps) {
    const int n = static_cast<int>(vertex_seq.size());
    if (n < 3) throw std::invalid_argument("stability: need at least 3 frames");
    StabilityResult out;
    for (int t = 1; t + 1 < n; ++t) {
        const auto& prev = vertex_seq[t - 1];
        const auto& cur = vertex_seq[t];
        const auto& next = vertex_seq[t + 1];
        double sum = 0.0;
        for (size_t i = 0; i < cur.size(); ++i) {
            const double step1 = (next[i] - cur[i]).norm();
            const double step0 = (cur[i] - prev[i]).norm();
            const double den = (next[i] - prev[i]).norm();
            double score;
            if (step1 < eps && step0 < eps) {
                score = 1.0;  // perfectly still counts as perfectly smooth
            } else if (den < eps) {
                score = std::min((step1 + step0) / eps, 100.0);
            } else {
                score = (step1 + step0) / den;
            }
            sum += score;
        }
        out.per_frame.push_back(sum / static_cast<double>(cur.size()));
    }
    double mean = 0.0;
    for (double v : out.per_frame) mean += v;
    out.mean = mean / static_cast<double>(out.per_frame.size());
    return out;
}

double marker_reprojection_error(const TrackResult& track,
                                 const std::vector<uint32_t>& marker_indices,
                                 const std::vector<std::vector<Vec2>>& marker_gt) {
    if (track.geoms.size() != marker_gt.size())
        throw std::invalid_argument("marker_reprojection_error: length mismatch");
    double sum = 0.0;
    size_t count = 0;
    for (size_t t = 0; t < track.geoms.size(); ++t) {
        const Mat3 rot = euler_to_rotation(track.poses[t].euler);
        if (marker_gt[t].size() != marker_indices.size())
            throw std::invalid_argument("marker_reprojection_error: marker count mismatch");
        for (size_t k = 0; k < marker_indices.size(); ++k) {
            const Vec3& v = track.geoms[t].vertices[marker_indices[k]];
            const Vec2 p = weak_project(apply_pose_point(track.poses[t], rot, v));
            sum += (p - marker_gt[t][k]).norm();
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

double relative_reprojection_error(const TrackResult& probe, const TrackResult& reference) {
    if (probe.geoms.size() != reference.geoms.size())
        throw std::invalid_argument("relative_reprojection_error: sequence length mismatch");
    double sum = 0.0;
    size_t count = 0;
    for (size_t t = 0; t < probe.geoms.size(); ++t) {
        const Mat3 rot_p = euler_to_rotation(probe.poses[t].euler);
        const Mat3 rot_r = euler_to_rotation(reference.poses[t].euler);
        const auto& vp = probe.geoms[t].vertices;
        const auto& vr = reference.geoms[t].vertices;
        if (vp.size() != vr.size())
            throw std::invalid_argument("relative_reprojection_error: vertex count mismatch");
        for (size_t i = 0; i < vp.size(); ++i) {
            const Vec2 a = weak_project(apply_pose_point(probe.poses[t], rot_p, vp[i]));
            const Vec2 b = weak_project(apply_pose_point(reference.poses[t], rot_r, vr[i]));
            sum += (a - b).norm();
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

std::vector<std::vector<Vec3>> posed_vertex_sequence(const TrackResult& track) {
    std::vector<std::vector<Vec3>> out(track.geoms.size());
    for (size_t t = 0; t < track.geoms.size(); ++t)
        out[t] = apply_pose(track.geoms[t], track.poses[t]);
    return out;
}

std::vector<ArmSpec> default_arms(uint64_t seed) {
    std::vector<ArmSpec> arms(3);
    arms[0].name = "no_DA";
    arms[0].run_adapt = false;
    arms[1].name = "flrc_only";
    arms[1].config = default_adapt_config();
    arms[1].config.seed = seed;
    arms[1].config.weights.lambda_cftc = 0.0;
    arms[1].config.weights.lambda_motc = 0.0;
    arms[2].name = "full_DA";
    arms[2].config = default_adapt_config();
    arms[2].config.seed = seed;
    return arms;
}

std::vector<ReportRow> comparison_report(const DecoderModel& decoder,
                                         const EncoderModel& pretrained,
                                         const WildSequence& wild,
                                         const std::vector<ArmSpec>& arms,
                                         const std::string& csv_path,
                                         const std::string& overlay_dir) {
    std::vector<ReportRow> rows;
    for (const ArmSpec& arm : arms) {
        EncoderModel enc = pretrained;
        ColorCorrection cc;
        if (arm.run_adapt) {
            const AdaptResult res = adapt(enc, decoder, wild, arm.config, arm.online);
            cc = res.cc;
        }
        const TrackResult tr = track(enc, decoder, cc, wild.frames);
        ReportRow row;
        row.arm = arm.name;
        row.stability = stability(posed_vertex_sequence(tr)).mean;
        row.reprojection = marker_reprojection_error(tr, decoder.marker_indices, wild.marker_gt);
        rows.push_back(row);

        if (!overlay_dir.empty()) {
            fs::create_directories(overlay_dir);
            // a short strip of evenly spaced overlay frames
            const int strip_n = std::min(5, wild.frame_count());
            const int res = wild.resolution;
            Image strip(res * strip_n, res);
            for (int s = 0; s < strip_n; ++s) {
                const int t = strip_n > 1 ? s * (wild.frame_count() - 1) / (strip_n - 1) : 0;
                const Image ov = render_overlay(decoder, tr.geoms[t], tr.corrected_tex[t],
                                                tr.poses[t], wild.frames[t]);
                for (int y = 0; y < res; ++y)
                    for (int x = 0; x < res; ++x)
                        strip.set_pixel(s * res + x, y, ov.pixel(x, y));
            }
            write_ppm((fs::path(overlay_dir) / (arm.name + "_overlay.ppm")).string(), strip);
        }
    }
    if (!csv_path.empty()) write_report_csv(rows, csv_path);
    return rows;
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "arm,stability,reprojection\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g", r.arm.c_str(), r.stability,
                      r.reprojection);
        os << buf << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace ft
