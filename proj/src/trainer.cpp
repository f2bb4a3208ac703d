#include "facetrack/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "facetrack/rng.hpp"

namespace ft {

TrainConfig default_pretrain_config() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.epochs = 300;
    return c;
}

TrainConfig default_adapt_config() {
    TrainConfig c;
    c.learning_rate = 1e-4;
    c.epochs = 6;
    return c;
}

namespace {

void sgd_step(EncoderModel& model, EncoderGrads& velocity, EncoderGrads& grads,
              double lr, double momentum, double clip) {
    if (clip > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > clip) grads.scale(clip / norm);
    }
    for (size_t l = 0; l < model.layers.size(); ++l) {
        auto& vel = velocity.layers[l];
        auto& g = grads.layers[l];
        auto& layer = model.layers[l];
        for (size_t i = 0; i < layer.w.size(); ++i) {
            vel.w[i] = momentum * vel.w[i] + g.w[i];
            layer.w[i] -= lr * vel.w[i];
        }
        for (size_t i = 0; i < layer.b.size(); ++i) {
            vel.b[i] = momentum * vel.b[i] + g.b[i];
            layer.b[i] -= lr * vel.b[i];
        }
    }
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    if (path.empty()) return;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << header << "\n";
    for (const auto& r : rows) os << r << "\n";
}

bool verbose() {
    const char* v = std::getenv("FACETRACK_VERBOSE");
    return v && v[0] && v[0] != '0';
}

}  // namespace

PretrainResult pretrain(EncoderModel& encoder, const DecoderModel& decoder,
                        const LabDataset& lab, const TrainConfig& config,
                        const std::string& history_csv) {
    if (lab.frame_count() < 1 || lab.views < 1)
        throw std::invalid_argument("pretrain: empty dataset");
    if (config.learning_rate <= 0.0) throw std::invalid_argument("pretrain: bad learning rate");

    PretrainResult result;
    Rng rng(config.seed);
    Rng drop_rng = rng.fork(7);

    // frozen features never change; compute them once per image
    std::vector<std::vector<double>> features(lab.images.size());
    for (size_t i = 0; i < lab.images.size(); ++i)
        features[i] = frozen_features(encoder, lab.images[i]);

    EncoderGrads grads = make_grads(encoder);
    EncoderGrads velocity = make_grads(encoder);
    const int frames = lab.frame_count();
    const int views = lab.views;
    const int steps_per_epoch = frames;
    std::vector<std::string> csv_rows;

    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int s = 0; s < steps_per_epoch; ++s) {
            grads.zero();
            double sum_lz = 0.0, sum_lh = 0.0, sum_lview = 0.0;
            for (int bi = 0; bi < config.batch_size; ++bi) {
                const int t = static_cast<int>(rng.uniform_index(frames));
                const int v = static_cast<int>(rng.uniform_index(views));
                int w = v;
                if (views > 1) w = (v + 1 + static_cast<int>(rng.uniform_index(views - 1))) % views;

                LatentCode z_pair[2];
                EncoderState states[2];
                FaceGeometry geoms[2];
                HeadPose poses[2];
                const int view_ids[2] = {v, w};
                const int n_views = views > 1 ? 2 : 1;

                for (int u = 0; u < n_views; ++u) {
                    const size_t idx = static_cast<size_t>(t) * views + view_ids[u];
                    const bool drop = drop_rng.uniform() < config.landmark_dropout;
                    const std::vector<Vec2>& k2d = lab.k2d_gt[idx];
                    const EncodeResult enc = encode_from_features(
                        encoder, features[idx], drop ? std::vector<Vec2>{} : k2d, &states[u]);
                    z_pair[u] = enc.z;
                    poses[u] = enc.pose;
                    geoms[u] = decode_geometry(decoder, enc.z);
                    sum_lz += loss_z(enc.z, lab.z_gt[t]);
                    sum_lh += loss_H(enc.pose, geoms[u], k2d, decoder.landmark_indices);
                }
                if (n_views == 2) sum_lview += loss_view(z_pair[0], z_pair[1]);

                for (int u = 0; u < n_views; ++u) {
                    const size_t idx = static_cast<size_t>(t) * views + view_ids[u];
                    std::vector<double> dz(encoder.latent_dim, 0.0);
                    loss_z_backward(z_pair[u], lab.z_gt[t], config.weights.lambda_z, dz);
                    if (n_views == 2)
                        for (int i = 0; i < encoder.latent_dim; ++i)
                            dz[i] += config.weights.lambda_view * 2.0 *
                                     (z_pair[u][i] - z_pair[1 - u][i]);
                    PoseGrad dpose;
                    GeomGrad dgeom(geoms[u].vertices.size());
                    loss_H_backward(poses[u], geoms[u], lab.k2d_gt[idx], decoder.landmark_indices,
                                    config.weights.lambda_H, dpose, dgeom);
                    std::vector<double> dz_geom;
                    decode_backward(decoder, dgeom, {}, TextureMap{}, dz_geom);
                    for (int i = 0; i < encoder.latent_dim; ++i) dz[i] += dz_geom[i];
                    encode_backward(encoder, states[u], dz, dpose, grads);
                }
            }
            const double total = config.weights.lambda_z * sum_lz +
                                 config.weights.lambda_H * sum_lh +
                                 config.weights.lambda_view * sum_lview;
            if (!std::isfinite(total))
                throw NonFiniteLossError("pretrain: non-finite loss at step " +
                                         std::to_string(step) + " (L_z=" + std::to_string(sum_lz) +
                                         ", L_H=" + std::to_string(sum_lh) + ")");
            sgd_step(encoder, velocity, grads, config.learning_rate, config.momentum,
                     config.grad_clip);
            result.history.push_back({step, sum_lz, sum_lh, sum_lview, total});
            if (!history_csv.empty()) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g", step, sum_lz,
                              sum_lh, sum_lview, total);
                csv_rows.emplace_back(buf);
            }
            ++step;
        }
        if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
            (epoch + 1) % config.checkpoint_every == 0) {
            std::filesystem::create_directories(config.checkpoint_dir);
            save_encoder(encoder, config.checkpoint_dir + "/pretrain_epoch" +
                                      std::to_string(epoch + 1) + ".enc");
        }
        if (verbose() && (epoch % 25 == 0 || epoch == config.epochs - 1))
            std::fprintf(stderr, "pretrain epoch %d/%d total=%.5f\n", epoch + 1, config.epochs,
                         result.history.back().total);
    }
    write_csv(history_csv, "step,loss_z,loss_H,loss_view,total", csv_rows);
    return result;
}

// ---------------------------------------------------------------------------

namespace {

// eigenvalues of a symmetric 3x3 via cyclic Jacobi
std::array<double, 3> sym3_eigenvalues(Mat3 a) {
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::abs(a.m[0][1]) + std::abs(a.m[0][2]) + std::abs(a.m[1][2]);
        if (off < 1e-18) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a.m[p][q]) < 1e-300) continue;
                const double theta = (a.m[q][q] - a.m[p][p]) / (2.0 * a.m[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Mat3 r = Mat3::identity();
                r.m[p][p] = c; r.m[q][q] = c;
                r.m[p][q] = s; r.m[q][p] = -s;
                a = r.transpose() * a * r;
            }
    }
    return {a.m[0][0], a.m[1][1], a.m[2][2]};
}

}  // namespace

ColorFit fit_color_correction(const TextureMap& obs, const ConfidenceMap& conf,
                              const TextureMap& model_tex) {
    if (obs.size != model_tex.size || conf.size != obs.size)
        throw std::invalid_argument("fit_color_correction: resolution mismatch");
    ColorFit fit;
    Mat3 a = Mat3::zero();  // sum w * o * m^T
    Mat3 b = Mat3::zero();  // sum w * m * m^T
    const size_t n = obs.texel_count();
    for (size_t li = 0; li < n; ++li) {
        const double w = conf.w[li];
        if (w <= 0.0) continue;
        const Vec3 o{obs.data[li * 3], obs.data[li * 3 + 1], obs.data[li * 3 + 2]};
        const Vec3 m{model_tex.data[li * 3], model_tex.data[li * 3 + 1], model_tex.data[li * 3 + 2]};
        const double mv[3] = {m.x, m.y, m.z};
        const double ov[3] = {o.x, o.y, o.z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                a.m[r][c] += w * ov[r] * mv[c];
                b.m[r][c] += w * mv[r] * mv[c];
            }
    }
    const auto ev = sym3_eigenvalues(b);
    const double emax = std::max({ev[0], ev[1], ev[2]});
    const double emin = std::min({ev[0], ev[1], ev[2]});
    if (!(emin > 0.0) || emax / emin > 1e12) {
        fit.degenerate = true;  // identity fallback
        return fit;
    }
    fit.cc.matrix = a * b.inverse();
    return fit;
}

AdaptResult adapt(EncoderModel& encoder, const DecoderModel& decoder,
                  const WildSequence& wild, const TrainConfig& config, bool online,
                  const std::string& history_csv) {
    if (wild.frame_count() < 2)
        throw std::invalid_argument("adapt: sequence must have at least 2 frames");

    AdaptResult result;
    Rng rng(config.seed);
    Rng drop_rng = rng.fork(13);

    std::vector<std::vector<double>> features(wild.frames.size());
    for (size_t i = 0; i < wild.frames.size(); ++i)
        features[i] = frozen_features(encoder, wild.frames[i]);

    EncoderGrads grads = make_grads(encoder);
    EncoderGrads velocity = make_grads(encoder);
    std::vector<std::string> csv_rows;

    const int pairs = wild.frame_count() - 1;
    const int epochs = online ? 1 : config.epochs;
    int step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int p = 0; p < pairs; ++p) {
            const int t_prev = p, t_cur = p + 1;

            EncoderState st_prev, st_cur;
            const bool drop_prev = drop_rng.uniform() < config.landmark_dropout;
            const bool drop_cur = drop_rng.uniform() < config.landmark_dropout;
            const EncodeResult enc_prev = encode_from_features(
                encoder, features[t_prev],
                drop_prev ? std::vector<Vec2>{} : wild.detections[t_prev], &st_prev);
            const EncodeResult enc_cur = encode_from_features(
                encoder, features[t_cur],
                drop_cur ? std::vector<Vec2>{} : wild.detections[t_cur], &st_cur);

            const FrameState prev = make_frame_state(decoder, enc_prev.z, enc_prev.pose,
                                                     wild.frames[t_prev],
                                                     wild.detections[t_prev], config.tau);
            const FrameState cur = make_frame_state(decoder, enc_cur.z, enc_cur.pose,
                                                    wild.frames[t_cur],
                                                    wild.detections[t_cur], config.tau);

            // closed-form color refit on frame t; constant within the step
            const ColorFit fit = fit_color_correction(cur.uw.observed, cur.uw.conf, cur.tex);
            result.cc = fit.cc;

            DaGrads dg;
            const DaBreakdown br =
                loss_da_backward(decoder, prev, cur, fit.cc, config.weights, config.tau, dg);
            if (!std::isfinite(br.total))
                throw NonFiniteLossError("adapt: non-finite loss at step " + std::to_string(step));

            grads.zero();
            encode_backward(encoder, st_prev, dg.dz_prev, dg.dpose_prev, grads);
            encode_backward(encoder, st_cur, dg.dz_cur, dg.dpose_cur, grads);
            sgd_step(encoder, velocity, grads, config.learning_rate, config.momentum,
                     config.grad_clip);

            result.history.push_back({step, br.cftc, br.motc, br.flrc, br.total});
            if (!history_csv.empty()) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g", step, br.cftc,
                              br.motc, br.flrc, br.total);
                csv_rows.emplace_back(buf);
            }
            ++step;
        }
        if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
            (epoch + 1) % config.checkpoint_every == 0) {
            std::filesystem::create_directories(config.checkpoint_dir);
            save_encoder(encoder, config.checkpoint_dir + "/adapt_epoch" +
                                      std::to_string(epoch + 1) + ".enc");
        }
        if (verbose())
            std::fprintf(stderr, "adapt epoch %d/%d total=%.6f\n", epoch + 1, epochs,
                         result.history.back().total);
    }
    write_csv(history_csv, "step,L_CFTC,L_MOTC,L_FLRC,total", csv_rows);
    return result;
}

TrackResult track(const EncoderModel& encoder, const DecoderModel& decoder,
                  const ColorCorrection& cc, const std::vector<Image>& frames) {
    TrackResult out;
    out.z.reserve(frames.size());
    for (const Image& frame : frames) {
        const EncodeResult enc = encode(encoder, frame, {});
        const Decoded dec = decode(decoder, enc.z);
        out.z.push_back(enc.z);
        out.poses.push_back(enc.pose);
        out.geoms.push_back(dec.geom);
        out.corrected_tex.push_back(apply_color_correction(cc, dec.tex));
    }
    return out;
}

Image render_overlay(const DecoderModel& decoder, const FaceGeometry& geom,
                     const TextureMap& corrected_tex, const HeadPose& pose,
                     const Image& frame) {
    return render(geom, corrected_tex, pose, decoder.topology, frame, 1.0);
}

void save_color_correction(const ColorCorrection& cc, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    char buf[96];
    for (int r = 0; r < 3; ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", cc.matrix.m[r][0],
                      cc.matrix.m[r][1], cc.matrix.m[r][2]);
        os << buf;
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

ColorCorrection load_color_correction(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open color matrix: " + path);
    ColorCorrection cc;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (!(is >> cc.matrix.m[r][c]))
                throw std::runtime_error("color matrix needs 9 reals: " + path);
    return cc;
}

}  // namespace ft
