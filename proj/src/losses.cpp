#include "facetrack/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ft {

double loss_z(const LatentCode& pred, const LatentCode& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("loss_z: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        s += d * d;
    }
    return s;
}

void loss_z_backward(const LatentCode& pred, const LatentCode& gt, double weight,
                     std::vector<double>& dz) {
    if (dz.size() != pred.size()) dz.assign(pred.size(), 0.0);
    for (size_t i = 0; i < pred.size(); ++i) dz[i] += weight * 2.0 * (pred[i] - gt[i]);
}

double loss_H(const HeadPose& pose, const FaceGeometry& geom,
              const std::vector<Vec2>& k2d, const std::vector<uint32_t>& indices) {
    if (k2d.size() != indices.size())
        throw std::invalid_argument("loss_H: landmark count mismatch");
    const Mat3 rot = euler_to_rotation(pose.euler);
    double s = 0.0;
    for (size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= geom.vertices.size())
            throw std::out_of_range("loss_H: landmark index out of range");
        const Vec2 p = weak_project(apply_pose_point(pose, rot, geom.vertices[indices[k]]));
        const Vec2 r = p - k2d[k];
        s += r.dot(r);
    }
    return s / static_cast<double>(indices.size());
}

void loss_H_backward(const HeadPose& pose, const FaceGeometry& geom,
                     const std::vector<Vec2>& k2d, const std::vector<uint32_t>& indices,
                     double weight, PoseGrad& d_pose, GeomGrad& d_geom) {
    if (d_geom.size() != geom.vertices.size()) d_geom.assign(geom.vertices.size(), Vec3{});
    const Mat3 rot = euler_to_rotation(pose.euler);
    const std::array<Mat3, 3> drot = euler_rotation_derivs(pose.euler);
    const double coef = weight * 2.0 / static_cast<double>(indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        const Vec3& v = geom.vertices[indices[k]];
        const Vec2 p = weak_project(apply_pose_point(pose, rot, v));
        const Vec2 g = (p - k2d[k]) * coef;
        Vec3 d_point{};
        accumulate_projection_grad(pose, rot, drot, v, g, d_pose, &d_point);
        d_geom[indices[k]] += d_point;
    }
}

double loss_view(const LatentCode& za, const LatentCode& zb) { return loss_z(za, zb); }

void loss_view_backward(const LatentCode& za, const LatentCode& zb, double weight,
                        std::vector<double>& dza, std::vector<double>& dzb) {
    if (dza.size() != za.size()) dza.assign(za.size(), 0.0);
    if (dzb.size() != zb.size()) dzb.assign(zb.size(), 0.0);
    for (size_t i = 0; i < za.size(); ++i) {
        const double g = weight * 2.0 * (za[i] - zb[i]);
        dza[i] += g;
        dzb[i] -= g;
    }
}

double loss_cftc(const TextureMap& obs_t, const ConfidenceMap& conf_t,
                 const TextureMap& obs_prev, const ConfidenceMap& conf_prev,
                 double tau) {
    if (obs_t.size != obs_prev.size || conf_t.size != obs_t.size || conf_prev.size != obs_t.size)
        throw std::invalid_argument("loss_cftc: resolution mismatch");
    const size_t n = obs_t.texel_count();
    double s = 0.0;
    int count = 0;
    for (size_t li = 0; li < n; ++li) {
        double w = conf_t.w[li] * conf_prev.w[li];
        if (w < tau) w = 0.0;
        if (w <= 0.0) continue;
        ++count;
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = obs_t.data[li * 3 + c] - obs_prev.data[li * 3 + c];
            d2 += d * d;
        }
        s += w * d2;
    }
    return count > 0 ? s / count : 0.0;
}

void loss_cftc_backward(const TextureMap& obs_t, const ConfidenceMap& conf_t,
                        const TextureMap& obs_prev, const ConfidenceMap& conf_prev,
                        double tau, double weight, std::vector<double>& d_obs_t,
                        std::vector<double>& d_obs_prev) {
    const size_t n = obs_t.texel_count();
    if (d_obs_t.size() != n * 3) d_obs_t.assign(n * 3, 0.0);
    if (d_obs_prev.size() != n * 3) d_obs_prev.assign(n * 3, 0.0);
    int count = 0;
    for (size_t li = 0; li < n; ++li) {
        double w = conf_t.w[li] * conf_prev.w[li];
        if (w < tau) w = 0.0;
        if (w > 0.0) ++count;
    }
    if (count == 0) return;
    const double coef = weight * 2.0 / count;
    for (size_t li = 0; li < n; ++li) {
        double w = conf_t.w[li] * conf_prev.w[li];
        if (w < tau) w = 0.0;
        if (w <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
            const double g = coef * w * (obs_t.data[li * 3 + c] - obs_prev.data[li * 3 + c]);
            d_obs_t[li * 3 + c] += g;
            d_obs_prev[li * 3 + c] -= g;
        }
    }
}

TextureMap apply_color_correction(const ColorCorrection& cc, const TextureMap& tex) {
    TextureMap out(tex.size);
    const size_t n = tex.texel_count();
    for (size_t li = 0; li < n; ++li) {
        const Vec3 c{tex.data[li * 3], tex.data[li * 3 + 1], tex.data[li * 3 + 2]};
        const Vec3 o = cc.matrix * c;
        out.data[li * 3] = o.x;
        out.data[li * 3 + 1] = o.y;
        out.data[li * 3 + 2] = o.z;
    }
    return out;
}

double loss_motc(const TextureMap& obs, const ConfidenceMap& conf,
                 const TextureMap& model_tex, const ColorCorrection& cc, bool* all_zero) {
    if (obs.size != model_tex.size || conf.size != obs.size)
        throw std::invalid_argument("loss_motc: resolution mismatch");
    if (all_zero) *all_zero = false;
    if (conf.nonzero_count == 0) {
        if (all_zero) *all_zero = true;
        return 0.0;
    }
    const size_t n = obs.texel_count();
    double s = 0.0;
    for (size_t li = 0; li < n; ++li) {
        const double w = conf.w[li];
        if (w <= 0.0) continue;
        const Vec3 m{model_tex.data[li * 3], model_tex.data[li * 3 + 1], model_tex.data[li * 3 + 2]};
        const Vec3 o{obs.data[li * 3], obs.data[li * 3 + 1], obs.data[li * 3 + 2]};
        const Vec3 r = o - cc.matrix * m;
        s += w * r.dot(r);
    }
    return s / conf.nonzero_count;
}

void loss_motc_backward(const TextureMap& obs, const ConfidenceMap& conf,
                        const TextureMap& model_tex, const ColorCorrection& cc,
                        double weight, std::vector<double>& d_obs,
                        std::vector<double>& d_model_tex, Mat3& d_cc) {
    const size_t n = obs.texel_count();
    if (d_obs.size() != n * 3) d_obs.assign(n * 3, 0.0);
    if (d_model_tex.size() != n * 3) d_model_tex.assign(n * 3, 0.0);
    if (conf.nonzero_count == 0) return;
    const double coef = weight * 2.0 / conf.nonzero_count;
    const Mat3 mt = cc.matrix.transpose();
    for (size_t li = 0; li < n; ++li) {
        const double w = conf.w[li];
        if (w <= 0.0) continue;
        const Vec3 m{model_tex.data[li * 3], model_tex.data[li * 3 + 1], model_tex.data[li * 3 + 2]};
        const Vec3 o{obs.data[li * 3], obs.data[li * 3 + 1], obs.data[li * 3 + 2]};
        const Vec3 r = (o - cc.matrix * m) * (coef * w);
        d_obs[li * 3] += r.x;
        d_obs[li * 3 + 1] += r.y;
        d_obs[li * 3 + 2] += r.z;
        const Vec3 dm = mt * r;
        d_model_tex[li * 3] -= dm.x;
        d_model_tex[li * 3 + 1] -= dm.y;
        d_model_tex[li * 3 + 2] -= dm.z;
        for (int a = 0; a < 3; ++a) {
            const double ra = a == 0 ? r.x : a == 1 ? r.y : r.z;
            d_cc.m[a][0] -= ra * m.x;
            d_cc.m[a][1] -= ra * m.y;
            d_cc.m[a][2] -= ra * m.z;
        }
    }
}

double loss_flrc(const std::vector<Vec2>& k2d_detected, const HeadPose& pose,
                 const FaceGeometry& geom, const std::vector<uint32_t>& indices) {
    return loss_H(pose, geom, k2d_detected, indices);
}

FrameState make_frame_state(const DecoderModel& model, const LatentCode& z,
                            const HeadPose& pose, const Image& image,
                            std::vector<Vec2> detections, double tau,
                            const FrozenVisibility* frozen) {
    FrameState st;
    st.image = &image;
    st.detections = std::move(detections);
    st.z = z;
    st.pose = pose;
    Decoded dec = decode(model, z);
    st.geom = std::move(dec.geom);
    st.tex_raw = std::move(dec.tex_raw);
    st.tex = std::move(dec.tex);
    st.uw = unwrap(image, st.geom, pose, model.topology, tau, frozen);
    return st;
}

DaBreakdown loss_da(const DecoderModel& model, const FrameState& prev,
                    const FrameState& cur, const ColorCorrection& cc,
                    const LossWeights& weights, double tau) {
    DaBreakdown out;
    out.cftc = loss_cftc(cur.uw.observed, cur.uw.conf, prev.uw.observed, prev.uw.conf, tau);
    out.motc = loss_motc(cur.uw.observed, cur.uw.conf, cur.tex, cc, &out.motc_all_zero);
    if (cur.detections.empty())
        throw std::invalid_argument("loss_da: frame t has no detected landmarks");
    out.flrc = loss_flrc(cur.detections, cur.pose, cur.geom, model.landmark_indices);
    out.total = weights.lambda_cftc * out.cftc + weights.lambda_motc * out.motc +
                weights.lambda_flrc * out.flrc;
    return out;
}

DaBreakdown loss_da_backward(const DecoderModel& model, const FrameState& prev,
                             const FrameState& cur, const ColorCorrection& cc,
                             const LossWeights& weights, double tau, DaGrads& grads) {
    const DaBreakdown out = loss_da(model, prev, cur, cc, weights, tau);

    const size_t n3 = cur.uw.observed.data.size();
    std::vector<double> d_obs_cur(n3, 0.0), d_obs_prev(n3, 0.0), d_tex_cur(n3, 0.0);

    if (weights.lambda_cftc != 0.0)
        loss_cftc_backward(cur.uw.observed, cur.uw.conf, prev.uw.observed, prev.uw.conf,
                           tau, weights.lambda_cftc, d_obs_cur, d_obs_prev);
    grads.d_cc = Mat3::zero();
    if (weights.lambda_motc != 0.0)
        loss_motc_backward(cur.uw.observed, cur.uw.conf, cur.tex, cc,
                           weights.lambda_motc, d_obs_cur, d_tex_cur, grads.d_cc);

    GeomGrad d_geom_cur(cur.geom.vertices.size());
    GeomGrad d_geom_prev(prev.geom.vertices.size());
    grads.dpose_cur = PoseGrad{};
    grads.dpose_prev = PoseGrad{};

    if (weights.lambda_flrc != 0.0)
        loss_H_backward(cur.pose, cur.geom, cur.detections, model.landmark_indices,
                        weights.lambda_flrc, grads.dpose_cur, d_geom_cur);

    unwrap_backward(cur.uw, cur.geom, cur.pose, model.topology, d_obs_cur,
                    d_geom_cur, grads.dpose_cur);
    unwrap_backward(prev.uw, prev.geom, prev.pose, model.topology, d_obs_prev,
                    d_geom_prev, grads.dpose_prev);

    decode_backward(model, d_geom_cur, d_tex_cur, cur.tex_raw, grads.dz_cur);
    decode_backward(model, d_geom_prev, {}, prev.tex_raw, grads.dz_prev);
    return out;
}

}  // namespace ft
