// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/deform.hpp"

#include <algorithm>
#include <cctype>

namespace rigsplat {

std::string to_string(DeformVariant v) {
    switch (v) {
        case DeformVariant::Translation: return "t";
        case DeformVariant::Rigid: return "r";
        case DeformVariant::Affine: return "a";
    }
    return "r";
}

DeformVariant parse_deform_variant(const std::string& s) {
    std::string low(s);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    if (low == "t" || low == "translation") return DeformVariant::Translation;
    if (low == "r" || low == "rigid") return DeformVariant::Rigid;
    if (low == "a" || low == "affine") return DeformVariant::Affine;
    throw std::invalid_argument("unknown pose-MLP variant '" + s + "' (expected t, r or a)");
}

PoseFeature pose_feature(const RiggedTemplate& tmpl, const Pose& pose) {
    if (static_cast<int>(pose.joint_rotations.size()) != tmpl.num_joints())
        throw GeometryError("pose joint count does not match template");
    PoseFeature f;
    f.values.reserve(9 * std::max(0, tmpl.num_joints() - 1));
    for (int j = 0; j < tmpl.num_joints(); ++j) {
        if (tmpl.parent[j] < 0) continue;
        const Mat3 d = rodrigues(pose.joint_rotations[j]) - Mat3::Identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f.values.push_back(d(r, c));
    }
    return f;
}

std::vector<Vec3> pose_feature_backward(const RiggedTemplate& tmpl, const Pose& pose,
                                        std::span<const double> d_feature) {
    std::vector<Vec3> out(tmpl.num_joints(), Vec3::Zero());
    std::size_t o = 0;
    for (int j = 0; j < tmpl.num_joints(); ++j) {
        if (tmpl.parent[j] < 0) continue;
        Mat3 d;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) d(r, c) = d_feature[o + 3 * r + c];
        o += 9;
        out[j] = rodrigues_backward(pose.joint_rotations[j], d);
    }
    return out;
}

int DeformMlp::head_size(DeformVariant v) {
    switch (v) {
        case DeformVariant::Translation: return 3;
        case DeformVariant::Rigid: return 7;
        case DeformVariant::Affine: return 12;
    }
    return 7;
}

DeformMlp::DeformMlp(const DeformConfig& config, int num_joints, std::uint64_t seed)
    : config_(config),
      encoding_{config.num_frequencies, true},
      pose_dim_(9 * std::max(0, num_joints - 1)),
      net_(encoding_.output_dim() + pose_dim_, config.hidden_layers, config.width,
           head_size(config.variant), seed, /*zero_output_layer=*/true) {}

ad::Tensor DeformMlp::forward_head(const ad::Tensor& x, const ad::Tensor& feature) const {
    auto enc = encode_positions(x, encoding_);
    if (pose_dim_ == 0) return net_.forward(enc);
    if (feature.numel() != pose_dim_) throw ad::ShapeError("pose feature has the wrong length");
    const auto ones = ad::Tensor::from({x.rows(), 1}, std::vector<double>(x.rows(), 1.0));
    return net_.forward(ad::concat({enc, ad::matmul(ones, feature)}));
}

AffineTransform3 DeformMlp::decode(std::span<const double> h) const {
    AffineTransform3 out;
    switch (config_.variant) {
        case DeformVariant::Translation:
            out.translation = Vec3(h[0], h[1], h[2]);
            break;
        case DeformVariant::Rigid: {
            const Vec4 q(h[0] + 1.0, h[1], h[2], h[3]);
            if (q.squaredNorm() > 0.0) out.linear = quaternion_to_matrix(q);
            out.translation = Vec3(h[4], h[5], h[6]);
            break;
        }
        case DeformVariant::Affine:
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) out.linear(r, c) += h[3 * r + c];
            out.translation = Vec3(h[9], h[10], h[11]);
            break;
    }
    return out;
}

void DeformMlp::decode_backward(std::span<const double> h, const Mat3& d_linear,
                                const Vec3& d_translation, std::span<double> d_head) const {
    switch (config_.variant) {
        case DeformVariant::Translation:
            for (int i = 0; i < 3; ++i) d_head[i] = d_translation[i];
            break;
        case DeformVariant::Rigid: {
            const Vec4 q(h[0] + 1.0, h[1], h[2], h[3]);
            const Vec4 dq = q.squaredNorm() > 0.0 ? quaternion_to_matrix_backward(q, d_linear) : Vec4::Zero();
            for (int i = 0; i < 4; ++i) d_head[i] = dq[i];
            for (int i = 0; i < 3; ++i) d_head[4 + i] = d_translation[i];
            break;
        }
        case DeformVariant::Affine:
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) d_head[3 * r + c] = d_linear(r, c);
            for (int i = 0; i < 3; ++i) d_head[9 + i] = d_translation[i];
            break;
    }
}

DeformMlp DeformMlp::clone() const {
    DeformMlp out;
    out.config_ = config_;
    out.encoding_ = encoding_;
    out.pose_dim_ = pose_dim_;
    out.net_ = net_.clone();
    return out;
}

AffineTransform3 nonrigid_transform(const Vec3& x_canonical, const RiggedTemplate& tmpl,
                                    const Pose& pose, const DeformMlp& mlp) {
    const auto feature = pose_feature(tmpl, pose);
    Eigen::VectorXd in(mlp.net().input_dim());
    in.head(mlp.encoding().output_dim()) = encode_position(x_canonical, mlp.encoding());
    for (int i = 0; i < mlp.pose_feature_dim(); ++i) in[mlp.encoding().output_dim() + i] = feature.values[i];
    const Eigen::VectorXd head = mlp.net().forward(in);
    return mlp.decode({head.data(), static_cast<std::size_t>(head.size())});
}

NonrigidResult apply_nonrigid(const SkinnedPoint& skinned, const AffineTransform3& nr) {
    return {nr.apply(skinned.observed), nr.linear * skinned.transform.linear};
}

}  // namespace rigsplat
