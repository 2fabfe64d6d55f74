// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/color_field.hpp"
#include "rigsplat/density.hpp"
#include "rigsplat/optim.hpp"
#include "rigsplat/pipeline.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rigsplat {

struct TrainConfig {
    int epochs = 500;
    int max_steps = 0;  // 0: no cap beyond epochs
    double lambda_perceptual = 0.1;
    double lambda_dice = 0.1;
    DeformVariant pose_mlp_variant = DeformVariant::Rigid;
    bool use_color_field = true;

    int densify_interval = 100;
    double densify_grad_threshold = 2e-4;
    double densify_scale_threshold = 0.03;
    double densify_until = 0.6;  // fraction of training
    double opacity_prune_threshold = 5e-3;
    int max_gaussians = 200000;

    int knn_k = 4;
    double sigma = 0.05;
    double skin_rebuild_threshold = 0.01;  // max mean drift before the skin field is rebuilt
    std::uint64_t seed = 0;

    int n_points = 20000;
    int deform_hidden_layers = 4;
    int deform_width = 128;
    int deform_frequencies = 6;
    int color_hidden_layers = 4;
    int color_width = 128;
    int color_frequencies = 10;
    int pretrain_steps = 2000;
    int pretrain_batch = 4096;

    double lr_means = kLrMeans;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
    double lr_mlp = kLrMlp;
    double lr_pose = kLrPose;

    bool optimize_gaussians = true;
    bool optimize_mlps = true;
    bool optimize_pose_corrections = true;

    int eval_interval = 10;  // epochs between held-out evaluations
    int tile_size = 16;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Small networks and point budget for 64x64 synthetic data on one core:
/// about 2000 steps over 8 frames in a few minutes.
TrainConfig desk_config();

struct Frame {
    Image image;  // H x W x 3, pre-masked
    Image mask;   // H x W x 1, values in {0, 1}
    Pose pose;
    Camera camera;
};

struct Dataset {
    std::vector<Frame> frames;
    void validate() const;
};

struct InitResult {
    GaussianSet gaussians;
    std::vector<ColorSample> samples;
};

/// Area-weighted surface samples, one Gaussian per sample.
InitResult initialize(const RiggedTemplate& tmpl, int n_points, std::mt19937_64& rng);

struct StepLosses {
    double total = 0.0;
    double l1 = 0.0;
    double perceptual = 0.0;
    double dice = 0.0;
    double psnr = 0.0;
};

struct TrainState {
    AvatarModel model;
    TrainConfig config;
    std::vector<FrameCorrection> corrections;
    std::vector<AdamState> correction_adam;
    AdamState adam_mean, adam_log_scale, adam_rotation, adam_opacity, adam_color;
    std::vector<AdamState> adam_deform, adam_color_mlp;
    DensityStats density;
    std::int64_t step = 0;
    std::mt19937_64 rng;
    double pretrain_mse = 0.0;
    std::vector<Vec3> skin_anchor;  // means at the last skin rebuild

    [[nodiscard]] SkinSettings skin_settings() const { return {config.knn_k, config.sigma}; }
    [[nodiscard]] ForwardOptions forward_options() const;
    /// Rebuilds the skin field if the set changed or a mean drifted past the
    /// rebuild threshold (or unconditionally with `force`).
    void maintain_skin(bool force = false);
    /// Applies a density-control result to every per-Gaussian optimizer state.
    void remap_gaussian_optim(std::span<const int> sources);
};

/// Builds the model, samples the surface and pretrains the color field.
TrainState make_train_state(const RiggedTemplate& tmpl, std::size_t num_frames, const TrainConfig& config);

StepLosses train_step(TrainState& state, const Dataset& data, std::size_t frame);

/// Forward-only render of a dataset frame with its learned correction.
RenderOutput render_frame(const TrainState& state, const Frame& frame, std::size_t correction_index);

struct MetricsRecord {
    int epoch = 0;
    std::int64_t step = 0;
    double loss = 0.0;
    double l1 = 0.0;
    double perceptual = 0.0;
    double dice = 0.0;
    double psnr = 0.0;
    std::optional<double> heldout_psnr;
    /// Final model on each training frame, filled on the last epoch only.
    std::vector<double> frame_psnr;
    std::size_t gaussians = 0;
};

struct FitCallbacks {
    std::function<void(const MetricsRecord&, const TrainState&)> on_epoch;
    std::function<void(const std::string&)> on_warning;
};

struct FitResult {
    TrainState state;
    std::vector<MetricsRecord> metrics;
};

FitResult fit(const RiggedTemplate& tmpl, const Dataset& data, const TrainConfig& config,
              const Dataset* heldout = nullptr, const FitCallbacks& callbacks = {});

/// Mean PSNR of rendered frames against their targets. Frames beyond the
/// learned corrections are rendered with zero correction.
double evaluate_psnr(const TrainState& state, const Dataset& data);

}  // namespace rigsplat
