// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <set>
#include <sstream>

namespace rigsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw FormatError(std::string(what) + ": expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec2 vec2_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2) throw FormatError(std::string(what) + ": expected a 2-element array");
    return {j[0].get<double>(), j[1].get<double>()};
}

const json& field(const json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) throw FormatError(std::string("missing field '") + name + "'");
    return j.at(name);
}

json parse(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(what + ": " + e.what());
    }
}

json pose_json(const Pose& p) {
    json rot = json::array();
    for (const auto& r : p.joint_rotations) rot.push_back(vec_json(r));
    return {{"joint_rotations", rot},
            {"root_rotation", vec_json(p.root_rotation)},
            {"root_translation", vec_json(p.root_translation)}};
}

Pose pose_of(const json& j) {
    Pose p;
    for (const auto& r : field(j, "joint_rotations")) p.joint_rotations.push_back(vec3_of(r, "joint_rotations"));
    p.root_rotation = vec3_of(field(j, "root_rotation"), "root_rotation");
    p.root_translation = vec3_of(field(j, "root_translation"), "root_translation");
    return p;
}

json camera_json(const Camera& c) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
        rot.push_back(json::array({c.extrinsic_rotation(r, 0), c.extrinsic_rotation(r, 1), c.extrinsic_rotation(r, 2)}));
    return {{"focal", {c.focal.x(), c.focal.y()}},
            {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
            {"extrinsic_rotation", rot},
            {"extrinsic_translation", vec_json(c.extrinsic_translation)},
            {"width", c.width},
            {"height", c.height}};
}

Camera camera_of(const json& j) {
    Camera c;
    c.focal = vec2_of(field(j, "focal"), "focal");
    c.principal_point = vec2_of(field(j, "principal_point"), "principal_point");
    const auto& rot = field(j, "extrinsic_rotation");
    if (!rot.is_array() || rot.size() != 3) throw FormatError("extrinsic_rotation: expected 3 rows");
    for (int r = 0; r < 3; ++r) c.extrinsic_rotation.row(r) = vec3_of(rot[r], "extrinsic_rotation").transpose();
    c.extrinsic_translation = vec3_of(field(j, "extrinsic_translation"), "extrinsic_translation");
    c.width = field(j, "width").get<int>();
    c.height = field(j, "height").get<int>();
    c.validate();
    return c;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
    return out;
}

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.png", i);
    return buf;
}

}  // namespace

std::string template_to_json(const RiggedTemplate& t) {
    json verts = json::array(), faces = json::array(), joints = json::array(), weights = json::array(),
         colors = json::array();
    for (const auto& v : t.vertices_canonical) verts.push_back(vec_json(v));
    for (const auto& f : t.faces) faces.push_back({f[0], f[1], f[2]});
    for (const auto& j : t.joints) joints.push_back(vec_json(j));
    for (Eigen::Index r = 0; r < t.blend_weights.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < t.blend_weights.cols(); ++c) row.push_back(t.blend_weights(r, c));
        weights.push_back(row);
    }
    for (const auto& c : t.face_colors) colors.push_back(vec_json(c));
    json j = {{"vertices_canonical", verts}, {"faces", faces},          {"joints", joints},
              {"parent", t.parent},          {"blend_weights", weights}, {"face_colors", colors}};
    return j.dump(1) + "\n";
}

RiggedTemplate template_from_json(const std::string& text) {
    const json j = parse(text, "template");
    RiggedTemplate t;
    try {
        for (const auto& v : field(j, "vertices_canonical")) t.vertices_canonical.push_back(vec3_of(v, "vertices_canonical"));
        for (const auto& f : field(j, "faces")) {
            if (!f.is_array() || f.size() != 3) throw FormatError("faces: expected index triples");
            t.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
        }
        for (const auto& p : field(j, "joints")) t.joints.push_back(vec3_of(p, "joints"));
        t.parent = field(j, "parent").get<std::vector<int>>();
        const auto& w = field(j, "blend_weights");
        t.blend_weights = MatX::Zero(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(t.joints.size()));
        for (std::size_t r = 0; r < w.size(); ++r) {
            if (w[r].size() != t.joints.size()) throw FormatError("blend_weights: row length must equal joint count");
            for (std::size_t c = 0; c < w[r].size(); ++c) t.blend_weights(r, c) = w[r][c].get<double>();
        }
        if (j.contains("face_colors"))
            for (const auto& c : j.at("face_colors")) t.face_colors.push_back(vec3_of(c, "face_colors"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("template: ") + e.what());
    }
    t.validate();
    return t;
}

void save_template(const fs::path& path, const RiggedTemplate& tmpl) { atomic_write(path, template_to_json(tmpl)); }
RiggedTemplate load_template(const fs::path& path) { return template_from_json(read_file(path)); }

void save_poses(const fs::path& path, const std::vector<Pose>& poses) {
    std::string out;
    for (const auto& p : poses) out += pose_json(p).dump() + "\n";
    atomic_write(path, out);
}

std::vector<Pose> load_poses(const fs::path& path) {
    std::vector<Pose> out;
    const auto lines = lines_of(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(pose_of(parse(lines[i], "pose line " + std::to_string(i + 1))));
        } catch (const json::exception& e) {
            throw FormatError("pose line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::string camera_to_json(const Camera& camera) { return camera_json(camera).dump() + "\n"; }

Camera camera_from_json(const std::string& text) {
    try {
        return camera_of(parse(text, "camera"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("camera: ") + e.what());
    }
}

void save_camera(const fs::path& path, const Camera& camera) { atomic_write(path, camera_to_json(camera)); }
Camera load_camera(const fs::path& path) { return camera_from_json(read_file(path)); }

std::vector<Camera> load_cameras(const fs::path& path) {
    std::vector<Camera> out;
    const auto lines = lines_of(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(camera_from_json(lines[i]));
    if (out.empty()) throw FormatError("camera: " + path.string() + " holds no cameras");
    return out;
}

// X-macro keeps the JSON names identical to the struct fields.
#define RIGSPLAT_CONFIG_FIELDS(X)                                                                  \
    X(epochs) X(max_steps) X(lambda_perceptual) X(lambda_dice) X(use_color_field) X(densify_interval) \
    X(densify_grad_threshold) X(densify_scale_threshold) X(densify_until) X(opacity_prune_threshold) \
    X(max_gaussians) X(knn_k) X(sigma) X(skin_rebuild_threshold) X(seed) X(n_points) X(deform_hidden_layers) X(deform_width)   \
    X(deform_frequencies) X(color_hidden_layers) X(color_width) X(color_frequencies) X(pretrain_steps) \
    X(pretrain_batch) X(lr_means) X(lr_log_scale) X(lr_rotation) X(lr_opacity) X(lr_color) X(lr_mlp)  \
    X(lr_pose) X(optimize_gaussians) X(optimize_mlps) X(optimize_pose_corrections) X(eval_interval)  \
    X(tile_size)

std::string config_to_json(const TrainConfig& c) {
    json j;
#define X(name) j[#name] = c.name;
    RIGSPLAT_CONFIG_FIELDS(X)
#undef X
    j["pose_mlp_variant"] = to_string(c.pose_mlp_variant);
    return j.dump(1) + "\n";
}

TrainConfig config_from_json(const std::string& text) {
    const json j = parse(text, "config");
    if (!j.is_object()) throw FormatError("config: expected an object");
    TrainConfig c;
    std::set<std::string> known{"pose_mlp_variant"};
#define X(name) known.insert(#name);
    RIGSPLAT_CONFIG_FIELDS(X)
#undef X
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw FormatError("config: unknown field '" + it.key() + "'");
    try {
#define X(name) \
    if (j.contains(#name)) c.name = j.at(#name).get<decltype(c.name)>();
        RIGSPLAT_CONFIG_FIELDS(X)
#undef X
        if (j.contains("pose_mlp_variant")) c.pose_mlp_variant = parse_deform_variant(j.at("pose_mlp_variant").get<std::string>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_config(const fs::path& path) { return config_from_json(read_file(path)); }

std::string metrics_to_json_line(const MetricsRecord& r) {
    json j = {{"epoch", r.epoch}, {"step", r.step},   {"loss", r.loss}, {"l1", r.l1},
              {"perceptual", r.perceptual}, {"dice", r.dice}, {"psnr", r.psnr}, {"gaussians", r.gaussians}};
    if (r.heldout_psnr) j["heldout_psnr"] = *r.heldout_psnr;
    if (!r.frame_psnr.empty()) j["frame_psnr"] = r.frame_psnr;
    return j.dump() + "\n";
}

void save_dataset(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::vector<Pose> poses;
    std::string cams;
    for (std::size_t i = 0; i < data.frames.size(); ++i) {
        write_png_rgb(dir / "images" / frame_name(i), data.frames[i].image);
        write_png_mask(dir / "masks" / frame_name(i), data.frames[i].mask);
        poses.push_back(data.frames[i].pose);
        cams += camera_json(data.frames[i].camera).dump() + "\n";
    }
    save_poses(dir / "poses.jsonl", poses);
    atomic_write(dir / "cameras.jsonl", cams);
}

Dataset load_dataset(const fs::path& dir) {
    const auto poses = load_poses(dir / "poses.jsonl");
    const auto cam_lines = lines_of(read_file(dir / "cameras.jsonl"));
    if (cam_lines.size() != poses.size())
        throw FormatError("dataset: " + std::to_string(cam_lines.size()) + " cameras for " +
                          std::to_string(poses.size()) + " poses");
    Dataset data;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto img = dir / "images" / frame_name(i);
        const auto msk = dir / "masks" / frame_name(i);
        if (!fs::exists(img)) throw FormatError("dataset frame " + std::to_string(i) + ": missing image " + img.string());
        if (!fs::exists(msk)) throw FormatError("dataset frame " + std::to_string(i) + ": missing mask " + msk.string());
        Frame f;
        f.image = read_png_rgb(img);
        f.mask = read_png_mask(msk);
        for (auto& v : f.mask.data) v = v > 0.5 ? 1.0 : 0.0;
        if (f.mask.width != f.image.width || f.mask.height != f.image.height)
            throw FormatError("dataset frame " + std::to_string(i) + ": mask size differs from image");
        for (int y = 0; y < f.image.height; ++y)
            for (int x = 0; x < f.image.width; ++x)
                for (int c = 0; c < 3; ++c) f.image.at(x, y, c) *= f.mask.at(x, y);
        f.pose = poses[i];
        f.camera = camera_of(parse(cam_lines[i], "camera line " + std::to_string(i + 1)));
        data.frames.push_back(std::move(f));
    }
    data.validate();
    return data;
}

}  // namespace rigsplat
