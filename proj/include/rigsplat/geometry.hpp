// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rigsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for malformed inputs: non-finite parameters, inconsistent templates,
/// mismatched poses. Carries a short human-readable reason.
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One canonical-space Gaussian primitive.
///
/// `rotation` is a quaternion stored as (w, x, y, z). It may drift from unit
/// norm between optimizer steps; every consumer normalizes it first.
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    std::optional<Vec3> color;
};

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    std::uint64_t generation = 0;

    [[nodiscard]] std::size_t size() const { return gaussians.size(); }
    [[nodiscard]] bool empty() const { return gaussians.empty(); }
};

/// Rest-pose mesh plus skeleton. The rest pose defines canonical space.
struct RiggedTemplate {
    std::vector<Vec3> vertices_canonical;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> joints;
    std::vector<int> parent;  // root has -1
    MatX blend_weights;       // |V| x |J|
    std::vector<Vec3> face_colors;

    [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices_canonical.size()); }
    [[nodiscard]] int num_joints() const { return static_cast<int>(joints.size()); }

    /// Throws GeometryError describing the first violated invariant.
    void validate() const;

    /// Joint indices ordered so every parent precedes its children.
    [[nodiscard]] std::vector<int> topological_order() const;
};

struct Pose {
    std::vector<Vec3> joint_rotations;  // axis-angle, one per joint
    Vec3 root_rotation = Vec3::Zero();
    Vec3 root_translation = Vec3::Zero();

    static Pose rest(int num_joints);
};

/// Pinhole camera; extrinsics map world to camera space (x right, y down, z forward).
struct Camera {
    Vec2 focal = Vec2(1.0, 1.0);
    Vec2 principal_point = Vec2::Zero();
    Mat3 extrinsic_rotation = Mat3::Identity();
    Vec3 extrinsic_translation = Vec3::Zero();
    int width = 0;
    int height = 0;

    void validate() const;
};

/// Affine map x -> linear * x + translation.
struct AffineTransform3 {
    Mat3 linear = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static AffineTransform3 identity() { return {}; }

    [[nodiscard]] Vec3 apply(const Vec3& x) const { return linear * x + translation; }
    [[nodiscard]] AffineTransform3 compose(const AffineTransform3& rhs) const {
        return {linear * rhs.linear, linear * rhs.translation + translation};
    }
};

/// Rotation matrix of a (possibly un-normalized) wxyz quaternion.
Mat3 quaternion_to_matrix(const Vec4& wxyz);

/// Backward of quaternion_to_matrix: gradient on the raw (un-normalized)
/// quaternion given dL/dR.
Vec4 quaternion_to_matrix_backward(const Vec4& wxyz, const Mat3& dR);

/// R diag(exp(2 s)) R^T.
Mat3 gaussian_covariance(const Gaussian& g);

/// Gradients of gaussian_covariance w.r.t. log_scale and raw rotation, given
/// a symmetric dL/dSigma.
struct CovarianceGrad {
    Vec3 d_log_scale = Vec3::Zero();
    Vec4 d_rotation = Vec4::Zero();
};
CovarianceGrad gaussian_covariance_backward(const Gaussian& g, const Mat3& d_sigma);

/// Exponential map so(3) -> SO(3).
Mat3 rodrigues(const Vec3& axis_angle);

/// dR/dtheta_k for k = 0..2.
std::array<Mat3, 3> rodrigues_derivatives(const Vec3& axis_angle);

/// Pulls dL/dR back to dL/dtheta.
Vec3 rodrigues_backward(const Vec3& axis_angle, const Mat3& dR);

Mat3 skew(const Vec3& v);

/// Per-joint transforms relative to the rest pose: a vertex rigidly bound to
/// joint j is posed by result[j]. The global root rotation/translation is
/// applied last.
std::vector<AffineTransform3> joint_transforms(const RiggedTemplate& tmpl, const Pose& pose);

/// Gradient of a scalar loss w.r.t. the pose, given dL/d(joint transform).
struct PoseGrad {
    std::vector<Vec3> joint_rotations;
    Vec3 root_rotation = Vec3::Zero();
    Vec3 root_translation = Vec3::Zero();
};
PoseGrad joint_transforms_backward(const RiggedTemplate& tmpl, const Pose& pose,
                                   const std::vector<AffineTransform3>& d_transforms);

}  // namespace rigsplat
