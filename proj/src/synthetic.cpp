// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace rigsplat {

namespace {

constexpr int kSegments = 12;
constexpr double kPi = std::numbers::pi;

struct Limb {
    Vec3 a, b;  // a is the proximal end
    double radius;
    int joint;
    Vec3 base_color;
};

struct Builder {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::pair<int, double>> parent_weight;  // per vertex: (joint, weight on its parent)
    std::vector<int> vertex_joint;
    std::vector<Vec3> colors;
};

Vec3 band_color(const Limb& limb, double t, double psi, double phase) {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch)
        c[ch] = limb.base_color[ch] + 0.12 * std::sin(2.0 * kPi * 2.0 * t + phase + 2.1 * ch) +
                0.05 * std::cos(psi + phase);
    return c.cwiseMax(0.05).cwiseMin(0.95);
}

void add_capsule(Builder& b, const Limb& limb, const std::vector<int>& parent, double phase) {
    const Vec3 axis = limb.b - limb.a;
    const double len = axis.norm();
    const Vec3 d = axis / len;
    const Vec3 helper = std::abs(d.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 u = d.cross(helper).normalized();
    const Vec3 v = d.cross(u);
    const double r = limb.radius;

    // Rings from the proximal pole to the distal pole: two cap rings, four body rings, two cap rings.
    std::vector<std::pair<Vec3, double>> rings;
    for (double beta : {kPi / 6.0, kPi / 3.0}) rings.emplace_back(limb.a - d * r * std::cos(beta), r * std::sin(beta));
    for (int i = 0; i < 4; ++i) rings.emplace_back(limb.a + axis * (i / 3.0), r);
    for (double beta : {kPi / 3.0, kPi / 6.0}) rings.emplace_back(limb.b + d * r * std::cos(beta), r * std::sin(beta));

    const int base = static_cast<int>(b.verts.size());
    auto push_vertex = [&](const Vec3& p) {
        b.verts.push_back(p);
        b.vertex_joint.push_back(limb.joint);
        const double s = (p - limb.a).dot(d);
        const double blend = std::min(0.12, 0.3 * len);
        const double w = parent[limb.joint] < 0 ? 0.0 : 0.5 * std::clamp(1.0 - s / blend, 0.0, 1.0);
        b.parent_weight.emplace_back(limb.joint, w);
    };
    push_vertex(limb.a - d * r);
    for (const auto& [c, rad] : rings)
        for (int s = 0; s < kSegments; ++s) {
            const double psi = 2.0 * kPi * s / kSegments;
            push_vertex(c + rad * (std::cos(psi) * u + std::sin(psi) * v));
        }
    push_vertex(limb.b + d * r);
    const int south = base;
    const int north = base + 1 + static_cast<int>(rings.size()) * kSegments;
    auto ring_vertex = [&](int ring, int s) { return base + 1 + ring * kSegments + (s % kSegments); };

    auto face_color = [&](const std::array<int, 3>& f) {
        const Vec3 centroid = (b.verts[f[0]] + b.verts[f[1]] + b.verts[f[2]]) / 3.0;
        const double t = std::clamp((centroid - limb.a).dot(d) / len, 0.0, 1.0);
        const Vec3 rel = centroid - limb.a;
        const double psi = std::atan2(rel.dot(v), rel.dot(u));
        return band_color(limb, t, psi, phase);
    };
    auto add_face = [&](int i, int j, int k) {
        b.faces.push_back({i, j, k});
        b.colors.push_back(face_color(b.faces.back()));
    };
    const int nr = static_cast<int>(rings.size());
    for (int s = 0; s < kSegments; ++s) add_face(south, ring_vertex(0, s + 1), ring_vertex(0, s));
    for (int ring = 0; ring + 1 < nr; ++ring)
        for (int s = 0; s < kSegments; ++s) {
            add_face(ring_vertex(ring, s), ring_vertex(ring, s + 1), ring_vertex(ring + 1, s + 1));
            add_face(ring_vertex(ring, s), ring_vertex(ring + 1, s + 1), ring_vertex(ring + 1, s));
        }
    for (int s = 0; s < kSegments; ++s) add_face(north, ring_vertex(nr - 1, s), ring_vertex(nr - 1, s + 1));
}

}  // namespace

RiggedTemplate make_synthetic_rig(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> tint(-0.05, 0.05), ph(0.0, 2.0 * kPi);

    RiggedTemplate t;
    t.joints.resize(kSyntheticJointCount);
    t.parent.resize(kSyntheticJointCount);
    t.joints[kTorso] = Vec3(0.0, 0.95, 0.0);
    t.joints[kHead] = Vec3(0.0, 1.48, 0.0);
    t.joints[kLeftUpperArm] = Vec3(0.2, 1.38, 0.0);
    t.joints[kLeftForearm] = Vec3(0.5, 1.38, 0.0);
    t.joints[kRightUpperArm] = Vec3(-0.2, 1.38, 0.0);
    t.joints[kRightForearm] = Vec3(-0.5, 1.38, 0.0);
    t.joints[kLeftLeg] = Vec3(0.1, 0.9, 0.0);
    t.joints[kRightLeg] = Vec3(-0.1, 0.9, 0.0);
    t.parent = {-1, kTorso, kTorso, kLeftUpperArm, kTorso, kRightUpperArm, kTorso, kTorso};

    const std::vector<Limb> limbs = {
        {Vec3(0.0, 0.95, 0.0), Vec3(0.0, 1.36, 0.0), 0.16, kTorso, Vec3(0.80, 0.32, 0.25)},
        {Vec3(0.0, 1.56, 0.0), Vec3(0.0, 1.70, 0.0), 0.10, kHead, Vec3(0.88, 0.72, 0.58)},
        {Vec3(0.2, 1.38, 0.0), Vec3(0.5, 1.38, 0.0), 0.05, kLeftUpperArm, Vec3(0.30, 0.50, 0.82)},
        {Vec3(0.5, 1.38, 0.0), Vec3(0.78, 1.38, 0.0), 0.045, kLeftForearm, Vec3(0.35, 0.74, 0.48)},
        {Vec3(-0.2, 1.38, 0.0), Vec3(-0.5, 1.38, 0.0), 0.05, kRightUpperArm, Vec3(0.30, 0.50, 0.82)},
        {Vec3(-0.5, 1.38, 0.0), Vec3(-0.78, 1.38, 0.0), 0.045, kRightForearm, Vec3(0.35, 0.74, 0.48)},
        {Vec3(0.1, 0.9, 0.0), Vec3(0.1, 0.07, 0.0), 0.07, kLeftLeg, Vec3(0.28, 0.30, 0.62)},
        {Vec3(-0.1, 0.9, 0.0), Vec3(-0.1, 0.07, 0.0), 0.07, kRightLeg, Vec3(0.28, 0.30, 0.62)},
    };

    Builder b;
    for (auto limb : limbs) {
        for (int c = 0; c < 3; ++c) limb.base_color[c] += tint(rng);
        add_capsule(b, limb, t.parent, ph(rng));
    }
    t.vertices_canonical = b.verts;
    t.faces = b.faces;
    t.face_colors = b.colors;
    t.blend_weights = MatX::Zero(static_cast<Eigen::Index>(b.verts.size()), kSyntheticJointCount);
    for (std::size_t i = 0; i < b.verts.size(); ++i) {
        const auto [j, w] = b.parent_weight[i];
        t.blend_weights(i, j) = 1.0 - w;
        if (w > 0.0) t.blend_weights(i, t.parent[j]) += w;
    }
    t.validate();
    return t;
}

std::vector<Pose> make_pose_sequence(const RiggedTemplate& tmpl, int frames, std::uint64_t seed) {
    if (tmpl.num_joints() != kSyntheticJointCount)
        throw GeometryError("pose sequence expects the synthetic rig's joint layout");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.8, 1.2);
    const double a_arm = 0.6 * amp(rng), a_fore = 0.8 * amp(rng), a_leg = 0.3 * amp(rng),
                 a_head = 0.35 * amp(rng), a_root = 0.15 * amp(rng);

    std::vector<Pose> out;
    out.reserve(frames);
    for (int k = 0; k < frames; ++k) {
        const double th = 2.0 * kPi * k / std::max(1, frames);
        const double s1 = std::sin(th), s2 = std::sin(2.0 * th), c1 = 0.5 * (1.0 - std::cos(th));
        Pose p = Pose::rest(kSyntheticJointCount);
        p.joint_rotations[kTorso] = Vec3(0.0, a_root * s1, 0.0);
        p.joint_rotations[kHead] = Vec3(0.0, a_head * s1, 0.5 * a_head * s2);
        p.joint_rotations[kLeftUpperArm] = Vec3(0.0, 0.0, a_arm * s1);
        p.joint_rotations[kLeftForearm] = Vec3(0.0, 0.0, a_fore * c1);
        p.joint_rotations[kRightUpperArm] = Vec3(0.0, 0.0, a_arm * s2);
        p.joint_rotations[kRightForearm] = Vec3(0.0, 0.0, -a_fore * c1);
        p.joint_rotations[kLeftLeg] = Vec3(a_leg * s1, 0.0, 0.5 * a_leg * c1);
        p.joint_rotations[kRightLeg] = Vec3(-a_leg * s1, 0.0, -0.5 * a_leg * c1);
        p.root_translation = Vec3(0.05 * s2, 0.0, 0.0);
        out.push_back(p);
    }
    return out;
}

Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
    if (a.joint_rotations.size() != b.joint_rotations.size())
        throw GeometryError("interpolate_pose: joint counts differ");
    Pose p = a;
    for (std::size_t j = 0; j < p.joint_rotations.size(); ++j)
        p.joint_rotations[j] = (1.0 - t) * a.joint_rotations[j] + t * b.joint_rotations[j];
    p.root_rotation = (1.0 - t) * a.root_rotation + t * b.root_rotation;
    p.root_translation = (1.0 - t) * a.root_translation + t * b.root_translation;
    return p;
}

Camera make_front_camera(int width, int height) {
    Camera c;
    const double f = 1.25 * std::min(width, height);
    c.focal = Vec2(f, f);
    c.principal_point = Vec2(0.5 * width, 0.5 * height);
    c.extrinsic_rotation = Vec3(1.0, -1.0, -1.0).asDiagonal();
    c.extrinsic_translation = Vec3(0.0, 0.9, 3.0);
    c.width = width;
    c.height = height;
    return c;
}

Dataset render_dataset(const RiggedTemplate& tmpl, const std::vector<Pose>& poses, const Camera& camera,
                       const GroundTruthOptions& options) {
    std::mt19937_64 rng(options.seed);
    auto init = initialize(tmpl, options.points, rng);
    AvatarModel model;
    model.tmpl = tmpl;
    model.gaussians = std::move(init.gaussians);
    const double logit = std::log(options.opacity / (1.0 - options.opacity));
    for (std::size_t i = 0; i < init.samples.size(); ++i) {
        model.gaussians.gaussians[i].color = init.samples[i].color;
        model.gaussians.gaussians[i].opacity_logit = logit;
    }
    model.use_color_field = false;
    model.deform = DeformMlp({DeformVariant::Translation, 0, 1, 0}, tmpl.num_joints(), 0);
    model.rebuild_skin({});

    ForwardOptions opts;
    opts.record_tape = false;
    Dataset data;
    for (const auto& pose : poses) {
        const auto st = forward(model, pose, camera, opts);
        const auto out = render_brute_force(st.splats, camera, opts.raster);
        Frame f;
        f.pose = pose;
        f.camera = camera;
        f.mask = Image(camera.width, camera.height, 1);
        f.image = out.rgb;
        for (int y = 0; y < camera.height; ++y)
            for (int x = 0; x < camera.width; ++x) {
                const double m = out.alpha.at(x, y) > 0.5 ? 1.0 : 0.0;
                f.mask.at(x, y) = m;
                for (int c = 0; c < 3; ++c) f.image.at(x, y, c) *= m;
            }
        data.frames.push_back(std::move(f));
    }
    return data;
}

}  // namespace rigsplat
