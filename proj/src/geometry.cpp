// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/geometry.hpp"

#include <cmath>
#include <sstream>

namespace rigsplat {

namespace {

bool all_finite(const Vec3& v) { return v.allFinite(); }

// Rodrigues coefficients: R = I + a K + b K^2 with K = [theta]x, plus the
// radial derivatives divided by theta (used by the Jacobian).
struct RodriguesCoeffs {
    double a, b, da_over_theta, db_over_theta;
};

RodriguesCoeffs rodrigues_coeffs(double theta) {
    const double t2 = theta * theta;
    if (theta < 1e-3) {
        return {1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                -1.0 / 3.0 + t2 / 30.0,
                -1.0 / 12.0 + t2 / 180.0};
    }
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double half = std::sin(0.5 * theta);
    const double a = s / theta;
    const double b = 2.0 * half * half / t2;
    const double da = (theta * c - s) / t2;
    const double db = (theta * s - 2.0 * (1.0 - c)) / (t2 * theta);
    return {a, b, da / theta, db / theta};
}

}  // namespace

void RiggedTemplate::validate() const {
    const int nv = num_vertices();
    const int nj = num_joints();
    if (nv == 0) throw GeometryError("template has no vertices");
    if (nj == 0) throw GeometryError("template has no joints");
    if (static_cast<int>(parent.size()) != nj)
        throw GeometryError("parent list length does not match joint count");
    if (blend_weights.rows() != nv || blend_weights.cols() != nj)
        throw GeometryError("blend_weights must be |V| x |J|");
    for (const auto& v : vertices_canonical)
        if (!all_finite(v)) throw GeometryError("non-finite template vertex");
    for (const auto& j : joints)
        if (!all_finite(j)) throw GeometryError("non-finite joint position");
    for (int i = 0; i < nv; ++i) {
        double sum = 0.0;
        for (int j = 0; j < nj; ++j) {
            const double w = blend_weights(i, j);
            if (!(w >= 0.0)) {
                std::ostringstream msg;
                msg << "blend weight row " << i << " has a negative or non-finite entry";
                throw GeometryError(msg.str());
            }
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            std::ostringstream msg;
            msg << "blend weight row " << i << " sums to " << sum;
            throw GeometryError(msg.str());
        }
    }
    for (const auto& f : faces)
        for (int idx : f)
            if (idx < 0 || idx >= nv) throw GeometryError("face references a missing vertex");
    if (!face_colors.empty() && face_colors.size() != faces.size())
        throw GeometryError("face_colors must be empty or one per face");
    (void)topological_order();
}

std::vector<int> RiggedTemplate::topological_order() const {
    const int nj = num_joints();
    int roots = 0;
    std::vector<std::vector<int>> children(nj);
    for (int j = 0; j < nj; ++j) {
        const int p = parent[j];
        if (p == -1) {
            ++roots;
        } else if (p < 0 || p >= nj || p == j) {
            throw GeometryError("invalid parent index in kinematic tree");
        } else {
            children[p].push_back(j);
        }
    }
    if (roots != 1) throw GeometryError("kinematic tree must have exactly one root");
    std::vector<int> order;
    order.reserve(nj);
    for (int j = 0; j < nj; ++j)
        if (parent[j] == -1) order.push_back(j);
    for (std::size_t head = 0; head < order.size(); ++head)
        for (int c : children[order[head]]) order.push_back(c);
    if (static_cast<int>(order.size()) != nj) throw GeometryError("kinematic tree has a cycle");
    return order;
}

Pose Pose::rest(int num_joints) {
    Pose p;
    p.joint_rotations.assign(num_joints, Vec3::Zero());
    return p;
}

void Camera::validate() const {
    if (!(focal.x() > 0.0 && focal.y() > 0.0)) throw GeometryError("camera focal must be positive");
    if (width <= 0 || height <= 0) throw GeometryError("camera image size must be positive");
    const Mat3 rrt = extrinsic_rotation * extrinsic_rotation.transpose();
    if (!((rrt - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6))
        throw GeometryError("camera rotation is not orthonormal");
    if (!extrinsic_translation.allFinite() || !principal_point.allFinite())
        throw GeometryError("non-finite camera parameters");
}

Mat3 quaternion_to_matrix(const Vec4& q_raw) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Vec4 quaternion_to_matrix_backward(const Vec4& q_raw, const Mat3& g) {
    const double n = q_raw.norm();
    const Vec4 q = q_raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 dq;
    dq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    dq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    dq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    // through q / |q|
    return (dq - q * q.dot(dq)) / n;
}

Mat3 gaussian_covariance(const Gaussian& g) {
    if (!g.mean.allFinite() || !g.log_scale.allFinite() || !g.rotation.allFinite() ||
        !std::isfinite(g.opacity_logit) || !(g.rotation.norm() > 0.0))
        throw GeometryError("degenerate gaussian");
    const Mat3 r = quaternion_to_matrix(g.rotation);
    const Vec3 var = (2.0 * g.log_scale).array().exp();
    Mat3 sigma = r * var.asDiagonal() * r.transpose();
    return 0.5 * (sigma + sigma.transpose());
}

CovarianceGrad gaussian_covariance_backward(const Gaussian& g, const Mat3& d_sigma) {
    const Mat3 gs = 0.5 * (d_sigma + d_sigma.transpose());
    const Mat3 r = quaternion_to_matrix(g.rotation);
    const Vec3 var = (2.0 * g.log_scale).array().exp();
    CovarianceGrad out;
    const Mat3 dr = 2.0 * gs * r * var.asDiagonal();
    out.d_rotation = quaternion_to_matrix_backward(g.rotation, dr);
    const Mat3 inner = r.transpose() * gs * r;
    for (int k = 0; k < 3; ++k) out.d_log_scale[k] = 2.0 * var[k] * inner(k, k);
    return out;
}

Mat3 skew(const Vec3& v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return k;
}

Mat3 rodrigues(const Vec3& axis_angle) {
    const double theta = axis_angle.norm();
    const Mat3 k = skew(axis_angle);
    if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
    const auto c = rodrigues_coeffs(theta);
    return Mat3::Identity() + c.a * k + c.b * k * k;
}

std::array<Mat3, 3> rodrigues_derivatives(const Vec3& v) {
    const double theta = v.norm();
    const auto c = rodrigues_coeffs(theta);
    const Mat3 k = skew(v);
    const Mat3 k2 = k * k;
    std::array<Mat3, 3> out;
    for (int i = 0; i < 3; ++i) {
        const Mat3 e = skew(Vec3::Unit(i));
        out[i] = c.a * e + c.b * (e * k + k * e) + c.da_over_theta * v[i] * k +
                 c.db_over_theta * v[i] * k2;
    }
    return out;
}

Vec3 rodrigues_backward(const Vec3& axis_angle, const Mat3& dR) {
    const auto d = rodrigues_derivatives(axis_angle);
    return {dR.cwiseProduct(d[0]).sum(), dR.cwiseProduct(d[1]).sum(), dR.cwiseProduct(d[2]).sum()};
}

namespace {

AffineTransform3 pivot_rotation(const Mat3& r, const Vec3& pivot) { return {r, pivot - r * pivot}; }

void check_pose(const RiggedTemplate& tmpl, const Pose& pose) {
    if (static_cast<int>(pose.joint_rotations.size()) != tmpl.num_joints()) {
        std::ostringstream msg;
        msg << "pose has " << pose.joint_rotations.size() << " joint rotations but template has "
            << tmpl.num_joints() << " joints";
        throw GeometryError(msg.str());
    }
}

}  // namespace

std::vector<AffineTransform3> joint_transforms(const RiggedTemplate& tmpl, const Pose& pose) {
    check_pose(tmpl, pose);
    const AffineTransform3 global{rodrigues(pose.root_rotation), pose.root_translation};
    std::vector<AffineTransform3> out(tmpl.num_joints());
    for (int j : tmpl.topological_order()) {
        const auto local = pivot_rotation(rodrigues(pose.joint_rotations[j]), tmpl.joints[j]);
        const int p = tmpl.parent[j];
        out[j] = (p < 0 ? global : out[p]).compose(local);
    }
    return out;
}

PoseGrad joint_transforms_backward(const RiggedTemplate& tmpl, const Pose& pose,
                                   const std::vector<AffineTransform3>& d_transforms) {
    check_pose(tmpl, pose);
    const int nj = tmpl.num_joints();
    if (static_cast<int>(d_transforms.size()) != nj)
        throw GeometryError("gradient list length does not match joint count");
    const auto order = tmpl.topological_order();
    const AffineTransform3 global{rodrigues(pose.root_rotation), pose.root_translation};
    std::vector<AffineTransform3> fwd(nj), local(nj);
    for (int j : order) {
        local[j] = pivot_rotation(rodrigues(pose.joint_rotations[j]), tmpl.joints[j]);
        const int p = tmpl.parent[j];
        fwd[j] = (p < 0 ? global : fwd[p]).compose(local[j]);
    }

    // accumulated gradients, stored as affine pairs (d_linear, d_translation)
    std::vector<AffineTransform3> grad(nj);
    for (int j = 0; j < nj; ++j) grad[j] = d_transforms[j];
    AffineTransform3 d_global{Mat3::Zero(), Vec3::Zero()};

    PoseGrad out;
    out.joint_rotations.assign(nj, Vec3::Zero());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int j = *it;
        const int p = tmpl.parent[j];
        const AffineTransform3& parent_fwd = p < 0 ? global : fwd[p];
        const AffineTransform3& dc = grad[j];
        AffineTransform3& dparent = p < 0 ? d_global : grad[p];
        dparent.linear += dc.linear * local[j].linear.transpose() +
                          dc.translation * local[j].translation.transpose();
        dparent.translation += dc.translation;
        const Mat3 d_local_lin = parent_fwd.linear.transpose() * dc.linear;
        const Vec3 d_local_t = parent_fwd.linear.transpose() * dc.translation;
        const Mat3 d_rot = d_local_lin - d_local_t * tmpl.joints[j].transpose();
        out.joint_rotations[j] = rodrigues_backward(pose.joint_rotations[j], d_rot);
    }
    out.root_rotation = rodrigues_backward(pose.root_rotation, d_global.linear);
    out.root_translation = d_global.translation;
    return out;
}

}  // namespace rigsplat
