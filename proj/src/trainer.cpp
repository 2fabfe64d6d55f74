// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/trainer.hpp"

#include "rigsplat/losses.hpp"
#include "rigsplat/spatial_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rigsplat {

namespace {

template <typename V, int K>
std::vector<double> flatten_rows(const std::vector<Gaussian>& gs, V Gaussian::*field) {
    std::vector<double> out(K * gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i)
        for (int a = 0; a < K; ++a) out[K * i + a] = (gs[i].*field)[a];
    return out;
}

template <typename V, int K>
void scatter_rows(std::vector<Gaussian>& gs, V Gaussian::*field, const std::vector<double>& flat) {
    for (std::size_t i = 0; i < gs.size(); ++i)
        for (int a = 0; a < K; ++a) (gs[i].*field)[a] = flat[K * i + a];
}

template <typename V, int K>
std::vector<double> flatten_grad(const std::vector<V>& g) {
    std::vector<double> out(K * g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (int a = 0; a < K; ++a) out[K * i + a] = g[i][a];
    return out;
}

void step_mlp(Mlp& net, std::vector<AdamState>& states, const char* name) {
    auto& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        adam_step(params[i].values(), params[i].grad(), states[i], name);
    }
}

std::vector<AdamState> mlp_states(const Mlp& net, double lr) {
    std::vector<AdamState> out;
    for (const auto& p : net.parameters()) out.emplace_back(static_cast<std::size_t>(p.numel()), AdamHyper{lr});
    return out;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid train config: " + what);
}

}  // namespace

void TrainConfig::validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(max_steps >= 0, "max_steps must be >= 0");
    require(lambda_perceptual >= 0.0, "lambda_perceptual must be >= 0");
    require(lambda_dice >= 0.0, "lambda_dice must be >= 0");
    require(densify_interval >= 0, "densify_interval must be >= 0");
    require(densify_until >= 0.0 && densify_until <= 1.0, "densify_until must lie in [0, 1]");
    require(max_gaussians >= 1, "max_gaussians must be >= 1");
    require(knn_k >= 1, "knn_k must be >= 1");
    require(sigma > 0.0, "sigma must be > 0");
    require(n_points >= 1, "n_points must be >= 1");
    require(deform_hidden_layers >= 0 && deform_width >= 1, "deform MLP shape");
    require(color_hidden_layers >= 0 && color_width >= 1, "color MLP shape");
    require(deform_frequencies >= 0 && color_frequencies >= 0, "frequencies must be >= 0");
    require(pretrain_steps >= 0 && pretrain_batch >= 1, "pretraining schedule");
    require(skin_rebuild_threshold >= 0.0, "skin_rebuild_threshold must be >= 0");
    require(eval_interval >= 1, "eval_interval must be >= 1");
    require(tile_size >= 1, "tile_size must be >= 1");
}

TrainConfig desk_config() {
    TrainConfig c;
    c.epochs = 250;
    c.n_points = 3000;
    c.max_gaussians = 5000;
    c.deform_hidden_layers = 2;
    c.deform_width = 32;
    c.deform_frequencies = 4;
    c.color_hidden_layers = 3;
    c.color_width = 64;
    c.color_frequencies = 6;
    c.pretrain_steps = 300;
    c.pretrain_batch = 1024;
    c.eval_interval = 25;
    return c;
}

void Dataset::validate() const {
    if (frames.empty()) throw std::invalid_argument("dataset has no frames");
    const auto& f0 = frames.front();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        const auto name = "frame " + std::to_string(i);
        if (f.image.channels != 3 || f.image.width != f0.image.width || f.image.height != f0.image.height)
            throw std::invalid_argument(name + ": inconsistent image dimensions");
        if (f.mask.channels != 1 || f.mask.width != f.image.width || f.mask.height != f.image.height)
            throw std::invalid_argument(name + ": mask does not match image");
        if (f.camera.width != f.image.width || f.camera.height != f.image.height)
            throw std::invalid_argument(name + ": camera size does not match image");
        for (double v : f.mask.data)
            if (v != 0.0 && v != 1.0) throw std::invalid_argument(name + ": mask is not binary");
        f.camera.validate();
    }
}

InitResult initialize(const RiggedTemplate& tmpl, int n_points, std::mt19937_64& rng) {
    tmpl.validate();
    if (n_points < 1) throw std::invalid_argument("initialize: n_points must be positive");
    if (tmpl.face_colors.size() != tmpl.faces.size())
        throw GeometryError("initialize: template needs one color per face");
    std::vector<double> area(tmpl.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < tmpl.faces.size(); ++f) {
        const auto& t = tmpl.faces[f];
        const Vec3& a = tmpl.vertices_canonical[t[0]];
        area[f] = 0.5 * (tmpl.vertices_canonical[t[1]] - a).cross(tmpl.vertices_canonical[t[2]] - a).norm();
        total += area[f];
    }
    if (!(total > 0.0)) throw GeometryError("degenerate mesh: zero total surface area");

    std::discrete_distribution<int> pick(area.begin(), area.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    InitResult out;
    out.samples.reserve(n_points);
    std::vector<Vec3> pts;
    pts.reserve(n_points);
    for (int s = 0; s < n_points; ++s) {
        const int f = pick(rng);
        double u = unit(rng), v = unit(rng);
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const auto& t = tmpl.faces[f];
        const Vec3 p = (1.0 - u - v) * tmpl.vertices_canonical[t[0]] + u * tmpl.vertices_canonical[t[1]] +
                       v * tmpl.vertices_canonical[t[2]];
        pts.push_back(p);
        out.samples.push_back({p, tmpl.face_colors[f]});
    }

    // Isotropic scale from the mean distance to the three nearest other samples.
    const double spacing = std::sqrt(total / n_points);
    const PointGrid grid(pts, std::max(2.0 * spacing, 1e-6));
    const int k = std::min(n_points, 4);
    const double init_logit = std::log(0.1 / 0.9);
    out.gaussians.gaussians.resize(n_points);
#pragma omp parallel for schedule(static)
    for (int s = 0; s < n_points; ++s) {
        double d = spacing;
        if (k > 1) {
            const auto nn = grid.knn(pts[s], k);
            double acc = 0.0;
            int used = 0;
            for (int j : nn) {
                if (j == s) continue;
                acc += (pts[j] - pts[s]).norm();
                ++used;
            }
            if (used > 0 && acc > 0.0) d = acc / used;
        }
        auto& g = out.gaussians.gaussians[s];
        g.mean = pts[s];
        g.log_scale = Vec3::Constant(std::log(std::max(d, 1e-6)));
        g.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        g.opacity_logit = init_logit;
    }
    return out;
}

ForwardOptions TrainState::forward_options() const {
    ForwardOptions o;
    o.raster.tile_size = config.tile_size;
    return o;
}

void TrainState::maintain_skin(bool force) {
    const auto& gs = model.gaussians.gaussians;
    bool stale = force || model.skin.generation != model.gaussians.generation || model.skin.size() != gs.size() ||
                 skin_anchor.size() != gs.size();
    for (std::size_t i = 0; !stale && i < gs.size(); ++i)
        stale = (gs[i].mean - skin_anchor[i]).norm() > config.skin_rebuild_threshold;
    if (!stale) return;
    model.rebuild_skin(skin_settings());
    skin_anchor.resize(gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i) skin_anchor[i] = gs[i].mean;
}

void TrainState::remap_gaussian_optim(std::span<const int> sources) {
    remap_adam_rows(adam_mean, 3, sources);
    remap_adam_rows(adam_log_scale, 3, sources);
    remap_adam_rows(adam_rotation, 4, sources);
    remap_adam_rows(adam_opacity, 1, sources);
    remap_adam_rows(adam_color, 3, sources);
}

TrainState make_train_state(const RiggedTemplate& tmpl, std::size_t num_frames, const TrainConfig& config) {
    config.validate();
    TrainState st;
    st.config = config;
    st.rng.seed(config.seed);
    auto init = initialize(tmpl, config.n_points, st.rng);

    auto& m = st.model;
    m.tmpl = tmpl;
    m.gaussians = std::move(init.gaussians);
    m.use_color_field = config.use_color_field;
    m.deform = DeformMlp({config.pose_mlp_variant, config.deform_hidden_layers, config.deform_width,
                          config.deform_frequencies},
                         tmpl.num_joints(), config.seed + 1);
    m.color = ColorMlp({config.color_hidden_layers, config.color_width, config.color_frequencies}, config.seed + 2);
    if (config.use_color_field) {
        st.pretrain_mse = pretrain_color_field(
            init.samples, m.color, {config.pretrain_steps, config.lr_mlp, config.pretrain_batch, config.seed + 3});
    } else {
        for (std::size_t i = 0; i < init.samples.size(); ++i) m.gaussians.gaussians[i].color = init.samples[i].color;
    }
    st.maintain_skin(true);
    m.deform.net().set_requires_grad(config.optimize_mlps);
    m.color.net().set_requires_grad(config.optimize_mlps && config.use_color_field);

    const auto n = m.gaussians.size();
    st.adam_mean = AdamState(3 * n, {config.lr_means});
    st.adam_log_scale = AdamState(3 * n, {config.lr_log_scale});
    st.adam_rotation = AdamState(4 * n, {config.lr_rotation});
    st.adam_opacity = AdamState(n, {config.lr_opacity});
    st.adam_color = AdamState(3 * n, {config.lr_color});
    st.adam_deform = mlp_states(m.deform.net(), config.lr_mlp);
    st.adam_color_mlp = mlp_states(m.color.net(), config.lr_mlp);

    st.corrections.assign(num_frames, FrameCorrection::zero(tmpl.num_joints()));
    const auto corr_size = st.corrections.empty() ? 0 : st.corrections.front().flatten().size();
    st.correction_adam.assign(num_frames, AdamState(corr_size, {config.lr_pose}));
    st.density.reset(n);
    return st;
}

StepLosses train_step(TrainState& state, const Dataset& data, std::size_t frame_index) {
    const auto& frame = data.frames.at(frame_index);
    auto& corr = state.corrections.at(frame_index);
    const auto& cfg = state.config;
    auto& model = state.model;
    state.maintain_skin();

    const Pose pose = corrected_pose(frame.pose, corr);
    const Camera camera = corrected_camera(frame.camera, corr);
    auto fwd = forward(model, pose, camera, state.forward_options());

    StepLosses losses;
    const auto l1 = loss_l1(fwd.render.rgb, frame.image);
    losses.l1 = l1.value;
    Image d_rgb = l1.grad;
    Image d_alpha(camera.width, camera.height, 1);
    if (cfg.lambda_perceptual > 0.0) {
        const auto p = loss_perceptual(fwd.render.rgb, frame.image);
        losses.perceptual = p.value;
        for (std::size_t i = 0; i < d_rgb.size(); ++i) d_rgb.data[i] += cfg.lambda_perceptual * p.grad.data[i];
    }
    if (cfg.lambda_dice > 0.0) {
        // The alpha channel is the white-color mask render.
        const auto d = loss_dice(fwd.render.alpha, frame.mask);
        losses.dice = d.value;
        for (std::size_t i = 0; i < d_alpha.size(); ++i) d_alpha.data[i] = cfg.lambda_dice * d.grad.data[i];
    }
    losses.total = losses.l1 + cfg.lambda_perceptual * losses.perceptual + cfg.lambda_dice * losses.dice;
    losses.psnr = psnr(fwd.render.rgb, frame.image);
    ++state.step;
    if (!std::isfinite(losses.total)) throw DivergedError("loss", state.step);

    model.deform.net().zero_grad();
    model.color.net().zero_grad();
    const auto grads = backward(model, fwd, d_rgb, &d_alpha);

    try {
        if (cfg.optimize_gaussians) {
            auto& gs = model.gaussians.gaussians;
            auto mean = flatten_rows<Vec3, 3>(gs, &Gaussian::mean);
            adam_step(mean, flatten_grad<Vec3, 3>(grads.mean), state.adam_mean, "means");
            scatter_rows<Vec3, 3>(gs, &Gaussian::mean, mean);

            auto scale = flatten_rows<Vec3, 3>(gs, &Gaussian::log_scale);
            adam_step(scale, flatten_grad<Vec3, 3>(grads.log_scale), state.adam_log_scale, "log_scales");
            scatter_rows<Vec3, 3>(gs, &Gaussian::log_scale, scale);

            auto rot = flatten_rows<Vec4, 4>(gs, &Gaussian::rotation);
            adam_step(rot, flatten_grad<Vec4, 4>(grads.rotation), state.adam_rotation, "rotations");
            scatter_rows<Vec4, 4>(gs, &Gaussian::rotation, rot);
            for (auto& g : gs) g.rotation.normalize();

            std::vector<double> op(gs.size());
            for (std::size_t i = 0; i < gs.size(); ++i) op[i] = gs[i].opacity_logit;
            adam_step(op, grads.opacity_logit, state.adam_opacity, "opacities");
            for (std::size_t i = 0; i < gs.size(); ++i) gs[i].opacity_logit = op[i];

            if (!model.use_color_field) {
                std::vector<double> col(3 * gs.size());
                for (std::size_t i = 0; i < gs.size(); ++i)
                    for (int a = 0; a < 3; ++a) col[3 * i + a] = gs[i].color.value_or(Vec3::Constant(0.5))[a];
                adam_step(col, flatten_grad<Vec3, 3>(grads.color), state.adam_color, "colors");
                for (std::size_t i = 0; i < gs.size(); ++i)
                    gs[i].color = Vec3(col[3 * i], col[3 * i + 1], col[3 * i + 2]).cwiseMax(0.0).cwiseMin(1.0);
            }
        }
        if (cfg.optimize_mlps) {
            step_mlp(model.deform.net(), state.adam_deform, "deform_mlp");
            if (model.use_color_field) step_mlp(model.color.net(), state.adam_color_mlp, "color_mlp");
        }
        if (cfg.optimize_pose_corrections) {
            const auto d = correction_gradient(grads, frame.camera, corr);
            auto values = corr.flatten();
            adam_step(values, d.flatten(), state.correction_adam.at(frame_index), "frame_correction");
            corr.unflatten(values);
        }
    } catch (const DivergedError& e) {
        throw DivergedError(e.parameter(), state.step);
    }

    state.density.accumulate(grads, fwd.splat_to_gaussian);
    return losses;
}

RenderOutput render_frame(const TrainState& state, const Frame& frame, std::size_t correction_index) {
    const FrameCorrection corr = correction_index < state.corrections.size()
                                     ? state.corrections[correction_index]
                                     : FrameCorrection::zero(state.model.tmpl.num_joints());
    auto opts = state.forward_options();
    opts.record_tape = false;
    return forward(state.model, corrected_pose(frame.pose, corr), corrected_camera(frame.camera, corr), opts).render;
}

double evaluate_psnr(const TrainState& state, const Dataset& data) {
    if (data.frames.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < data.frames.size(); ++i)
        acc += psnr(render_frame(state, data.frames[i], i).rgb, data.frames[i].image);
    return acc / static_cast<double>(data.frames.size());
}

FitResult fit(const RiggedTemplate& tmpl, const Dataset& data, const TrainConfig& config, const Dataset* heldout,
              const FitCallbacks& callbacks) {
    data.validate();
    for (std::size_t i = 0; i < data.frames.size(); ++i)
        if (static_cast<int>(data.frames[i].pose.joint_rotations.size()) != tmpl.num_joints())
            throw std::invalid_argument("frame " + std::to_string(i) + ": pose has " +
                                        std::to_string(data.frames[i].pose.joint_rotations.size()) +
                                        " joint rotations, template has " + std::to_string(tmpl.num_joints()));
    FitResult result{make_train_state(tmpl, data.frames.size(), config), {}};
    auto& st = result.state;

    const auto nframes = static_cast<std::int64_t>(data.frames.size());
    std::int64_t total = static_cast<std::int64_t>(config.epochs) * nframes;
    if (config.max_steps > 0) total = std::min<std::int64_t>(total, config.max_steps);
    const auto densify_until = static_cast<std::int64_t>(config.densify_until * static_cast<double>(total));

    std::vector<std::size_t> order(data.frames.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < config.epochs && st.step < total; ++epoch) {
        std::shuffle(order.begin(), order.end(), st.rng);
        MetricsRecord rec;
        rec.epoch = epoch;
        int taken = 0;
        for (std::size_t f : order) {
            if (st.step >= total) break;
            const auto l = train_step(st, data, f);
            rec.loss += l.total;
            rec.l1 += l.l1;
            rec.perceptual += l.perceptual;
            rec.dice += l.dice;
            rec.psnr += l.psnr;
            ++taken;

            if (config.densify_interval > 0 && st.step % config.densify_interval == 0 && st.step < densify_until) {
                const DensitySettings ds{config.densify_grad_threshold, config.densify_scale_threshold,
                                         config.opacity_prune_threshold,
                                         static_cast<std::size_t>(config.max_gaussians)};
                const auto res = density_control(st.model, st.density, ds, st.skin_settings(), st.rng);
                if (res.changed()) st.remap_gaussian_optim(res.sources);
                if (res.capped && callbacks.on_warning)
                    callbacks.on_warning("max_gaussians reached at step " + std::to_string(st.step) +
                                         "; densification skipped");
                st.density.reset(st.model.gaussians.size());
            }
        }
        const double inv = 1.0 / std::max(1, taken);
        rec.loss *= inv;
        rec.l1 *= inv;
        rec.perceptual *= inv;
        rec.dice *= inv;
        rec.psnr *= inv;
        rec.step = st.step;
        rec.gaussians = st.model.gaussians.size();
        const bool last = epoch + 1 == config.epochs || st.step >= total;
        if (last) st.maintain_skin(true);
        if (heldout && !heldout->frames.empty() && ((epoch + 1) % config.eval_interval == 0 || last)) {
            double acc = 0.0;
            for (const auto& f : heldout->frames) acc += psnr(render_frame(st, f, st.corrections.size()).rgb, f.image);
            rec.heldout_psnr = acc / static_cast<double>(heldout->frames.size());
        }
        if (last)
            for (std::size_t i = 0; i < data.frames.size(); ++i)
                rec.frame_psnr.push_back(psnr(render_frame(st, data.frames[i], i).rgb, data.frames[i].image));
        result.metrics.push_back(rec);
        if (callbacks.on_epoch) callbacks.on_epoch(rec, st);
    }
    return result;
}

}  // namespace rigsplat
