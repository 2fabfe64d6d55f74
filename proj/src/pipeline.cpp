// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace rigsplat {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ad::Tensor means_tensor(const GaussianSet& set, bool requires_grad) {
    const auto n = set.size();
    std::vector<double> flat(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) flat[3 * i + a] = set.gaussians[i].mean[a];
    return ad::Tensor::from({static_cast<std::int64_t>(n), 3}, std::move(flat), requires_grad);
}

Vec3 row3(std::span<const double> v, std::size_t i) { return {v[3 * i], v[3 * i + 1], v[3 * i + 2]}; }

Mat3 sym(const Mat3& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

FrameCorrection FrameCorrection::zero(int num_joints) {
    FrameCorrection c;
    c.joint_rotations.assign(num_joints, Vec3::Zero());
    return c;
}

std::vector<double> FrameCorrection::flatten() const {
    std::vector<double> v;
    v.reserve(3 * joint_rotations.size() + 12);
    auto push = [&](const Vec3& x) { v.insert(v.end(), x.data(), x.data() + 3); };
    for (const auto& j : joint_rotations) push(j);
    push(root_rotation);
    push(root_translation);
    push(camera_rotation);
    push(camera_translation);
    return v;
}

void FrameCorrection::unflatten(std::span<const double> v) {
    if (v.size() != 3 * joint_rotations.size() + 12)
        throw std::invalid_argument("frame correction has the wrong length");
    std::size_t o = 0;
    auto pull = [&](Vec3& x) {
        x = Vec3(v[o], v[o + 1], v[o + 2]);
        o += 3;
    };
    for (auto& j : joint_rotations) pull(j);
    pull(root_rotation);
    pull(root_translation);
    pull(camera_rotation);
    pull(camera_translation);
}

Pose corrected_pose(const Pose& pose, const FrameCorrection& c) {
    Pose out = pose;
    if (!c.joint_rotations.empty()) {
        if (c.joint_rotations.size() != pose.joint_rotations.size())
            throw GeometryError("frame correction joint count does not match pose");
        for (std::size_t j = 0; j < out.joint_rotations.size(); ++j) out.joint_rotations[j] += c.joint_rotations[j];
    }
    out.root_rotation += c.root_rotation;
    out.root_translation += c.root_translation;
    return out;
}

Camera corrected_camera(const Camera& camera, const FrameCorrection& c) {
    Camera out = camera;
    out.extrinsic_rotation = rodrigues(c.camera_rotation) * camera.extrinsic_rotation;
    out.extrinsic_translation = camera.extrinsic_translation + c.camera_translation;
    return out;
}

void AvatarModel::rebuild_skin(const SkinSettings& settings) {
    skin = build_skin_field(gaussians, tmpl, settings);
}

ForwardState forward(const AvatarModel& model, const Pose& pose, const Camera& camera, const ForwardOptions& options) {
    camera.validate();
    const auto& gs = model.gaussians.gaussians;
    const auto n = static_cast<std::int64_t>(gs.size());
    if (model.skin.generation != model.gaussians.generation || static_cast<std::int64_t>(model.skin.size()) != n)
        throw GeometryError("skin field does not match the Gaussian set (generation " +
                            std::to_string(model.skin.generation) + " vs " +
                            std::to_string(model.gaussians.generation) + ")");

    ForwardState st;
    st.pose = pose;
    st.camera = camera;
    st.options = options;
    st.joint_xf = joint_transforms(model.tmpl, pose);
    if (n == 0) {
        st.render = render({}, camera, options.raster);
        return st;
    }
    st.skin_xf = blend_transforms(model.skin, st.joint_xf);

    st.x_deform = means_tensor(model.gaussians, options.record_tape);
    st.x_color = options.shared_position_leaf ? st.x_deform : means_tensor(model.gaussians, options.record_tape);
    const auto pf = pose_feature(model.tmpl, pose);
    st.feature = ad::Tensor::from({1, static_cast<std::int64_t>(pf.values.size())}, pf.values, options.record_tape);
    st.head = model.deform.forward_head(st.x_deform, st.feature);

    if (options.color_cache) {
        st.colors = options.color_cache->colors_for(model.gaussians);
    } else if (model.use_color_field) {
        st.color_out = model.color.forward(st.x_color);
        const auto v = st.color_out.values();
        st.colors.resize(n);
        for (std::int64_t i = 0; i < n; ++i) st.colors[i] = row3(v, i);
    } else {
        st.colors.resize(n);
        for (std::int64_t i = 0; i < n; ++i) st.colors[i] = gs[i].color.value_or(Vec3::Constant(0.5));
    }

    st.nonrigid.resize(n);
    st.skinned.resize(n);
    st.observed.resize(n);
    st.cov_canonical.resize(n);
    st.cov_observed.resize(n);
    st.alpha0.resize(n);
    std::vector<std::optional<SplattedGaussian>> projected(n);
    const auto head = st.head.values();
    const auto hs = static_cast<std::size_t>(st.head.cols());
    std::atomic<std::int64_t> bad{-1};

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& g = gs[i];
        if (!g.mean.allFinite() || !g.log_scale.allFinite() || !g.rotation.allFinite() ||
            !std::isfinite(g.opacity_logit) || g.rotation.squaredNorm() == 0.0) {
            bad.store(i);
            continue;
        }
        st.cov_canonical[i] = gaussian_covariance(g);
        st.nonrigid[i] = model.deform.decode(head.subspan(i * hs, hs));
        st.skinned[i] = st.skin_xf[i].apply(g.mean);
        st.observed[i] = st.nonrigid[i].apply(st.skinned[i]);
        st.cov_observed[i] =
            transport_covariance(st.cov_canonical[i], st.nonrigid[i].linear * st.skin_xf[i].linear);
        st.alpha0[i] = sigmoid(g.opacity_logit);
        projected[i] = project_gaussian(st.observed[i], st.cov_observed[i], camera, options.raster);
    }
    if (bad.load() >= 0) throw GeometryError("degenerate gaussian at index " + std::to_string(bad.load()));

    for (std::int64_t i = 0; i < n; ++i) {
        if (!projected[i]) continue;
        auto s = *projected[i];
        s.color = st.colors[i];
        s.alpha0 = st.alpha0[i];
        s.source_index = static_cast<int>(i);
        st.splats.push_back(s);
        st.splat_to_gaussian.push_back(static_cast<int>(i));
    }
    st.render = render(st.splats, camera, options.raster);
    return st;
}

FrameGrads backward(const AvatarModel& model, ForwardState& st, const Image& d_rgb, const Image* d_alpha) {
    if (!st.options.record_tape) throw std::logic_error("backward called on a forward pass without a tape");
    const auto& gs = model.gaussians.gaussians;
    const auto n = static_cast<std::int64_t>(gs.size());
    const int nj = model.tmpl.num_joints();

    FrameGrads out;
    out.mean.assign(n, Vec3::Zero());
    out.log_scale.assign(n, Vec3::Zero());
    out.rotation.assign(n, Vec4::Zero());
    out.opacity_logit.assign(n, 0.0);
    out.color.assign(n, Vec3::Zero());
    out.screen_grad.assign(n, 0.0);
    out.pose.joint_rotations.assign(nj, Vec3::Zero());
    if (n == 0) return out;

    const auto sg = render_backward(st.splats, st.camera, d_rgb, d_alpha, st.options.raster);
    std::vector<Vec3> d_obs(n, Vec3::Zero());
    std::vector<Mat3> d_cov(n, Mat3::Zero());
    for (std::size_t s = 0; s < st.splats.size(); ++s) {
        const int i = st.splat_to_gaussian[s];
        const auto pg = project_gaussian_backward(st.observed[i], st.cov_observed[i], st.camera, sg[s].d_mean2d,
                                                  sg[s].d_cov2d);
        d_obs[i] = pg.d_mean3d;
        d_cov[i] = pg.d_cov3d;
        out.camera_rotation += pg.d_cam_rotation;
        out.camera_translation += pg.d_cam_translation;
        out.color[i] = sg[s].d_color;
        out.opacity_logit[i] = sg[s].d_alpha0 * st.alpha0[i] * (1.0 - st.alpha0[i]);
        // normalized device units, so thresholds do not depend on resolution
        out.screen_grad[i] = sg[s].d_mean2d.cwiseProduct(Vec2(0.5 * st.camera.width, 0.5 * st.camera.height)).norm();
    }

    const auto head = st.head.values();
    const auto hs = static_cast<std::size_t>(st.head.cols());
    std::vector<double> d_head(head.size(), 0.0);
    std::vector<AffineTransform3> d_skin(n, AffineTransform3{Mat3::Zero(), Vec3::Zero()});
    std::vector<Vec3> direct(n, Vec3::Zero());

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const Mat3& A = st.nonrigid[i].linear;
        const Mat3& M = st.skin_xf[i].linear;
        const Mat3 L = A * M;
        const Mat3 gsym = sym(d_cov[i]);
        const Mat3 dL = 2.0 * gsym * L * st.cov_canonical[i];
        const Mat3 d_sigma_c = L.transpose() * gsym * L;

        const Mat3 dA = dL * M.transpose() + d_obs[i] * st.skinned[i].transpose();
        const Vec3 d_skinned = A.transpose() * d_obs[i];
        d_skin[i].linear = A.transpose() * dL + d_skinned * gs[i].mean.transpose();
        d_skin[i].translation = d_skinned;
        direct[i] = M.transpose() * d_skinned;
        model.deform.decode_backward(head.subspan(i * hs, hs), dA, d_obs[i],
                                     std::span<double>(d_head).subspan(i * hs, hs));

        const auto cg = gaussian_covariance_backward(gs[i], d_sigma_c);
        out.log_scale[i] = cg.d_log_scale;
        out.rotation[i] = cg.d_rotation;
    }

    // Seed the network outputs with their upstream gradients and run the tape once.
    ad::Tensor surrogate = ad::sum(ad::mul(st.head, ad::Tensor::from(st.head.shape(), d_head)));
    const bool live_color = st.color_out.defined();
    if (live_color) {
        std::vector<double> seed(3 * n);
        for (std::int64_t i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) seed[3 * i + a] = out.color[i][a];
        surrogate = ad::add(surrogate, ad::sum(ad::mul(st.color_out, ad::Tensor::from(st.color_out.shape(), seed))));
    }
    ad::backward(surrogate);

    const bool shared = st.options.shared_position_leaf;
    const auto gx = st.x_deform.grad();
    for (std::int64_t i = 0; i < n; ++i) out.mean[i] = direct[i] + (gx.empty() ? Vec3::Zero() : row3(gx, i));
    if (!shared) {
        out.mean_render = out.mean;
        const auto gc = st.x_color.grad();
        if (!gc.empty())
            for (std::int64_t i = 0; i < n; ++i) out.mean[i] += row3(gc, i);
    }

    const auto d_joint = blend_transforms_backward(model.skin, d_skin, nj);
    out.pose = joint_transforms_backward(model.tmpl, st.pose, d_joint);
    const auto gf = st.feature.grad();
    if (!gf.empty()) {
        const auto extra = pose_feature_backward(model.tmpl, st.pose, gf);
        for (int j = 0; j < nj; ++j) out.pose.joint_rotations[j] += extra[j];
    }
    return out;
}

FrameCorrection correction_gradient(const FrameGrads& grads, const Camera& base_camera,
                                    const FrameCorrection& correction) {
    FrameCorrection d = FrameCorrection::zero(static_cast<int>(grads.pose.joint_rotations.size()));
    d.joint_rotations = grads.pose.joint_rotations;
    d.root_rotation = grads.pose.root_rotation;
    d.root_translation = grads.pose.root_translation;
    d.camera_rotation =
        rodrigues_backward(correction.camera_rotation, grads.camera_rotation * base_camera.extrinsic_rotation.transpose());
    d.camera_translation = grads.camera_translation;
    return d;
}

}  // namespace rigsplat
