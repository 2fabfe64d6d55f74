// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rigsplat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "SARM", u32 version, u32 section count, then sections of
/// (u32 name length, name, u64 payload length, payload). Little-endian, f64.
///
/// Sections: config, template, gaussians, deform_mlp, color_mlp, corrections, rng.
struct Checkpoint {
    TrainConfig config;
    RiggedTemplate tmpl;
    GaussianSet gaussians;
    DeformMlp deform;
    ColorMlp color;
    std::vector<FrameCorrection> corrections;
    std::string rng_state;
};

Checkpoint checkpoint_from_state(const TrainState& state);
/// Model ready for rendering; the skin field is rebuilt from the config.
AvatarModel model_from_checkpoint(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rigsplat
