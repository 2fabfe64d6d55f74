// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"
#include "rigsplat/trainer.hpp"

#include <cstdint>
#include <vector>

namespace rigsplat {

/// Joint indices of the synthetic rig.
enum SyntheticJoint : int {
    kTorso = 0,
    kHead,
    kLeftUpperArm,
    kLeftForearm,
    kRightUpperArm,
    kRightForearm,
    kLeftLeg,
    kRightLeg,
    kSyntheticJointCount
};

/// Capsule-limb humanoid in a T-pose, about 1.8 units tall with feet at y = 0,
/// facing +z. Eight capsules of 98 vertices each; colors are smooth bands per
/// limb whose phases and tints depend on `seed`.
RiggedTemplate make_synthetic_rig(std::uint64_t seed);

/// Smooth periodic animation; frame 0 is the rest pose.
std::vector<Pose> make_pose_sequence(const RiggedTemplate& tmpl, int frames, std::uint64_t seed);

/// Componentwise linear blend of axis-angle parameters.
Pose interpolate_pose(const Pose& a, const Pose& b, double t);

/// Fixed camera 3 units in front of the rig, looking at its center.
Camera make_front_camera(int width, int height);

struct GroundTruthOptions {
    int points = 20000;
    double opacity = 0.95;
    std::uint64_t seed = 7;
};

/// Renders dense surface Gaussians with their face colors through the
/// reference renderer. Masks are alpha > 0.5; images are pre-masked.
Dataset render_dataset(const RiggedTemplate& tmpl, const std::vector<Pose>& poses, const Camera& camera,
                       const GroundTruthOptions& options = {});

}  // namespace rigsplat
