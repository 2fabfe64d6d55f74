// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/geometry.hpp"
#include "rigsplat/image.hpp"
#include "rigsplat/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace rigsplat {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes bytes to a sibling temp file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// PNG, 8 bits per channel, v -> round(255 v) after clamping to [0, 1].
void write_png_rgb(const std::filesystem::path& path, const Image& rgb);
/// Single-channel mask, stored as 0 or 255 (threshold 0.5).
void write_png_mask(const std::filesystem::path& path, const Image& mask);
Image read_png_rgb(const std::filesystem::path& path);
/// Values are mapped back to [0, 1] by v / 255.
Image read_png_mask(const std::filesystem::path& path);

std::string template_to_json(const RiggedTemplate& tmpl);
RiggedTemplate template_from_json(const std::string& text);
void save_template(const std::filesystem::path& path, const RiggedTemplate& tmpl);
RiggedTemplate load_template(const std::filesystem::path& path);

/// One JSON object per line: joint_rotations, root_rotation, root_translation.
void save_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> load_poses(const std::filesystem::path& path);

std::string camera_to_json(const Camera& camera);
Camera camera_from_json(const std::string& text);
void save_camera(const std::filesystem::path& path, const Camera& camera);
Camera load_camera(const std::filesystem::path& path);
/// One camera per line; a single-camera file yields one entry.
std::vector<Camera> load_cameras(const std::filesystem::path& path);

std::string config_to_json(const TrainConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

std::string metrics_to_json_line(const MetricsRecord& rec);

/// Dataset directory layout:
///   images/NNNN.png  masks/NNNN.png  poses.jsonl  cameras.jsonl
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Images are multiplied by their masks on load.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace rigsplat
