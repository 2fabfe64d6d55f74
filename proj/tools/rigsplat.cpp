// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

// rigsplat command line: synthetic data, training, rendering and self checks.

#include "rigsplat/check.hpp"
#include "rigsplat/checkpoint.hpp"
#include "rigsplat/io.hpp"
#include "rigsplat/losses.hpp"
#include "rigsplat/synthetic.hpp"
#include "rigsplat/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace rigsplat;

namespace {

std::string frame_file(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.png", i);
    return buf;
}

struct RigArgs {
    std::string out = "rig.json";
    std::string poses = "poses.jsonl";
    std::string camera;
    std::uint64_t seed = 0;
    int frames = 8;
    int width = 64, height = 64;
};

int run_rig(const RigArgs& a) {
    const auto tmpl = make_synthetic_rig(a.seed);
    save_template(a.out, tmpl);
    save_poses(a.poses, make_pose_sequence(tmpl, a.frames, a.seed));
    if (!a.camera.empty()) save_camera(a.camera, make_front_camera(a.width, a.height));
    std::cout << "wrote " << a.out << " (" << tmpl.vertices_canonical.size() << " vertices, " << tmpl.num_joints()
              << " joints) and " << a.frames << " poses to " << a.poses << "\n";
    return 0;
}

struct MakedataArgs {
    std::string tmpl, poses, out, camera;
    int width = 64, height = 64;
    GroundTruthOptions gt;
};

int run_makedata(const MakedataArgs& a) {
    const auto tmpl = load_template(a.tmpl);
    const auto poses = load_poses(a.poses);
    const Camera cam = a.camera.empty() ? make_front_camera(a.width, a.height) : load_camera(a.camera);
    const auto data = render_dataset(tmpl, poses, cam, a.gt);
    save_dataset(a.out, data);
    save_template(fs::path(a.out) / "template.json", tmpl);
    std::cout << "wrote " << data.frames.size() << " frames to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data, config, out, metrics, heldout, pose_mlp;
    bool ablate_colors = false;
    int checkpoint_every = 0;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, max_steps;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
    if (a.ablate_colors) cfg.use_color_field = false;
    if (!a.pose_mlp.empty()) cfg.pose_mlp_variant = parse_deform_variant(a.pose_mlp);
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.max_steps) cfg.max_steps = *a.max_steps;
    cfg.validate();

    const auto data = load_dataset(a.data);
    const auto tmpl = load_template(fs::path(a.data) / "template.json");
    std::optional<Dataset> heldout;
    if (!a.heldout.empty()) heldout = load_dataset(a.heldout);
    const std::string metrics_path = a.metrics.empty() ? a.out + ".metrics.jsonl" : a.metrics;

    std::string log;
    FitCallbacks cb;
    cb.on_epoch = [&](const MetricsRecord& rec, const TrainState& st) {
        log += metrics_to_json_line(rec);
        atomic_write(metrics_path, log);
        std::cout << "epoch " << rec.epoch << " step " << rec.step << " loss " << rec.loss << " psnr " << rec.psnr;
        if (rec.heldout_psnr) std::cout << " heldout " << *rec.heldout_psnr;
        std::cout << " gaussians " << rec.gaussians << "\n";
        if (a.checkpoint_every > 0 && (rec.epoch + 1) % a.checkpoint_every == 0)
            save_checkpoint(a.out, checkpoint_from_state(st));
    };
    cb.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
    const auto res = fit(tmpl, data, cfg, heldout ? &*heldout : nullptr, cb);
    save_checkpoint(a.out, checkpoint_from_state(res.state));
    std::cout << "wrote " << a.out << " and " << metrics_path << "\n";
    return 0;
}

struct RenderArgs {
    std::string ckpt, poses, camera, out, reference;
    int frame = -1;
    bool corrections = false;
    bool alpha = false;
};

ForwardOptions render_options(const Checkpoint& ck) {
    ForwardOptions o;
    o.record_tape = false;
    o.raster.tile_size = ck.config.tile_size;
    return o;
}

int run_render(const RenderArgs& a) {
    const auto ck = load_checkpoint(a.ckpt);
    const auto model = model_from_checkpoint(ck);
    const auto poses = load_poses(a.poses);
    const auto cams = load_cameras(a.camera);
    if (cams.size() != 1 && cams.size() != poses.size())
        throw FormatError("camera file holds " + std::to_string(cams.size()) + " cameras for " +
                          std::to_string(poses.size()) + " poses");
    for (const auto& p : poses)
        if (static_cast<int>(p.joint_rotations.size()) != model.tmpl.num_joints())
            throw FormatError("pose joint count " + std::to_string(p.joint_rotations.size()) +
                              " does not match the template (" + std::to_string(model.tmpl.num_joints()) + ")");
    std::optional<Dataset> ref;
    if (!a.reference.empty()) ref = load_dataset(a.reference);

    std::size_t begin = 0, end = poses.size();
    if (a.frame >= 0) {
        if (static_cast<std::size_t>(a.frame) >= poses.size())
            throw std::out_of_range("frame " + std::to_string(a.frame) + " is beyond the pose file");
        begin = static_cast<std::size_t>(a.frame);
        end = begin + 1;
    } else {
        fs::create_directories(a.out);
    }
    const auto opts = render_options(ck);
    for (std::size_t i = begin; i < end; ++i) {
        FrameCorrection corr = FrameCorrection::zero(model.tmpl.num_joints());
        if (a.corrections && i < ck.corrections.size()) corr = ck.corrections[i];
        const Camera& cam = cams.size() == 1 ? cams[0] : cams[i];
        const auto st = forward(model, corrected_pose(poses[i], corr), corrected_camera(cam, corr), opts);
        const fs::path path = a.frame >= 0 ? fs::path(a.out) : fs::path(a.out) / frame_file(i);
        write_png_rgb(path, st.render.rgb);
        if (a.alpha) write_png_mask(path.string() + ".mask.png", st.render.alpha);
        if (ref) {
            if (i >= ref->frames.size()) throw std::out_of_range("reference has no frame " + std::to_string(i));
            std::printf("frame %zu psnr %.6f\n", i, psnr(st.render.rgb, ref->frames[i].image));
        }
    }
    return 0;
}

struct AnimateArgs {
    std::string ckpt, poses, camera, out;
    int substeps = 1;
};

int run_animate(const AnimateArgs& a) {
    const auto ck = load_checkpoint(a.ckpt);
    const auto model = model_from_checkpoint(ck);
    const auto keys = load_poses(a.poses);
    const Camera cam = load_cameras(a.camera).front();
    std::vector<Pose> seq;
    for (std::size_t k = 0; k < keys.size(); ++k) {
        if (static_cast<int>(keys[k].joint_rotations.size()) != model.tmpl.num_joints())
            throw FormatError("pose " + std::to_string(k) + " joint count does not match the template");
        if (k + 1 == keys.size()) {
            seq.push_back(keys[k]);
            break;
        }
        for (int s = 0; s < a.substeps; ++s) seq.push_back(interpolate_pose(keys[k], keys[k + 1], double(s) / a.substeps));
    }
    fs::create_directories(a.out);
    std::optional<ColorCache> cache;
    auto opts = render_options(ck);
    if (model.use_color_field) {
        cache = bake_color_cache(model.gaussians, model.color);
        opts.color_cache = &*cache;
    }
    for (std::size_t i = 0; i < seq.size(); ++i)
        write_png_rgb(fs::path(a.out) / frame_file(i), forward(model, seq[i], cam, opts).render.rgb);
    std::cout << "wrote " << seq.size() << " frames to " << a.out << "\n";
    return 0;
}

struct CheckArgs {
    CheckOptions opts;
    std::string inject;
    bool full = false;
};

int run_check(CheckArgs a) {
    if (!a.inject.empty()) {
        if (a.inject != "compositing") throw CLI::ValidationError("--inject-fault", "unknown fault " + a.inject);
        a.opts.inject_compositing_fault = true;
    }
    if (a.full) {
        a.opts.oracle_scenes = 100;
        a.opts.skin_seeds = 10;
        a.opts.skin_points = 20000;
    }
    const auto report = run_checks(a.opts);
    std::cout << report.format();
    return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rigsplat: articulated Gaussian splat avatars on the CPU"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(36);

    RigArgs rig;
    auto* c_rig = app.add_subcommand("rig", "Write the synthetic rig template and a pose sequence");
    c_rig->add_option("out", rig.out, "Template file")->capture_default_str();
    c_rig->add_option("--seed", rig.seed, "Rig and animation seed")->capture_default_str();
    c_rig->add_option("--poses", rig.poses, "Pose sequence file (JSON lines)")->capture_default_str();
    c_rig->add_option("--frames", rig.frames, "Frames in the sequence")->capture_default_str()->check(CLI::PositiveNumber);
    c_rig->add_option("--camera", rig.camera, "Also write the front camera here");
    c_rig->add_option("--width", rig.width, "Camera width")->capture_default_str();
    c_rig->add_option("--height", rig.height, "Camera height")->capture_default_str();

    MakedataArgs mk;
    auto* c_mk = app.add_subcommand("makedata", "Render a ground-truth dataset from a rig and poses");
    c_mk->add_option("template", mk.tmpl, "Template file")->required();
    c_mk->add_option("poses", mk.poses, "Pose sequence file")->required();
    c_mk->add_option("out-dir", mk.out, "Dataset directory")->required();
    c_mk->add_option("--camera", mk.camera, "Camera file (default: front camera)");
    c_mk->add_option("--width", mk.width, "Front camera width")->capture_default_str();
    c_mk->add_option("--height", mk.height, "Front camera height")->capture_default_str();
    c_mk->add_option("--points", mk.gt.points, "Surface Gaussians")->capture_default_str();
    c_mk->add_option("--opacity", mk.gt.opacity, "Ground-truth opacity")->capture_default_str();
    c_mk->add_option("--seed", mk.gt.seed, "Sampling seed")->capture_default_str();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Fit an avatar to a dataset");
    c_tr->add_option("data-dir", tr.data, "Dataset directory (with template.json)")->required();
    c_tr->add_option("config", tr.config, "Config file (JSON; missing fields use defaults)");
    c_tr->add_option("-o,--out", tr.out, "Checkpoint path")->required();
    c_tr->add_flag("--ablate-colors", tr.ablate_colors, "Per-Gaussian colors instead of the color field");
    c_tr->add_option("--pose-mlp", tr.pose_mlp, "Deformation head: t, r or a (default r)")
        ->check(CLI::IsMember({"t", "r", "a"}));
    c_tr->add_option("--seed", tr.seed, "Override config seed (default 0)");
    c_tr->add_option("--epochs", tr.epochs, "Override config epochs (default 500)");
    c_tr->add_option("--max-steps", tr.max_steps, "Override config max_steps (default 0, no cap)");
    c_tr->add_option("--heldout", tr.heldout, "Held-out dataset evaluated every eval_interval epochs");
    c_tr->add_option("--metrics", tr.metrics, "Metrics log (default <out>.metrics.jsonl)");
    c_tr->add_option("--checkpoint-every", tr.checkpoint_every, "Also save every N epochs (0: only at the end)")
        ->capture_default_str();

    RenderArgs rd;
    auto* c_rd = app.add_subcommand("render", "Render a checkpoint for each pose in a file");
    c_rd->add_option("checkpoint", rd.ckpt, "Checkpoint")->required();
    c_rd->add_option("poses", rd.poses, "Pose file")->required();
    c_rd->add_option("camera", rd.camera, "Camera file")->required();
    c_rd->add_option("out", rd.out, "Output directory, or PNG file with --frame")->required();
    c_rd->add_option("--frame", rd.frame, "Render only this pose index (-1: all)")->capture_default_str();
    c_rd->add_flag("--corrections", rd.corrections, "Apply learned per-frame corrections by index");
    c_rd->add_flag("--alpha", rd.alpha, "Also write the thresholded alpha next to each image");
    c_rd->add_option("--reference", rd.reference, "Dataset to compare against; prints PSNR per frame");

    AnimateArgs an;
    auto* c_an = app.add_subcommand("animate", "Render a pose sequence with cached colors");
    c_an->add_option("checkpoint", an.ckpt, "Checkpoint")->required();
    c_an->add_option("poses", an.poses, "Key poses")->required();
    c_an->add_option("camera", an.camera, "Camera file")->required();
    c_an->add_option("out-dir", an.out, "Output directory")->required();
    c_an->add_option("--substeps", an.substeps, "Interpolated frames per key pose")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    CheckArgs ck;
    auto* c_ck = app.add_subcommand("check", "Gradient, oracle and invariant self checks");
    c_ck->add_option("--seed", ck.opts.seed, "Seed")->capture_default_str();
    c_ck->add_option("--inject-fault", ck.inject, "Test fixture: 'compositing' flips a backward sign");
    c_ck->add_flag("--full", ck.full, "Acceptance scale: 100 oracle scenes, 10 x 20000 skinning rows");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*c_rig) return run_rig(rig);
        if (*c_mk) return run_makedata(mk);
        if (*c_tr) return run_train(tr);
        if (*c_rd) return run_render(rd);
        if (*c_an) return run_animate(an);
        if (*c_ck) return run_check(ck);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
