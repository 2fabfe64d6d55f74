// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/check.hpp"

#include "rigsplat/losses.hpp"
#include "rigsplat/optim.hpp"
#include "rigsplat/synthetic.hpp"
#include "rigsplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

namespace rigsplat {

namespace {

CheckComponent from_report(const std::string& name, const FiniteDifferenceReport& r, double tol) {
    CheckComponent c{name, r.max_rel_error, tol, r.passed(), ""};
    std::ostringstream d;
    d << r.checked << " coordinates, " << r.failing.size() << " failing";
    c.detail = d.str();
    return c;
}

CheckComponent merge(const std::string& name, const std::vector<CheckComponent>& parts) {
    CheckComponent out{name, 0.0, parts.empty() ? 0.0 : parts.front().tolerance, true, ""};
    std::string worst;
    for (const auto& p : parts) {
        out.passed = out.passed && p.passed;
        if (p.max_error >= out.max_error) {
            out.max_error = p.max_error;
            worst = p.name;
        }
        if (!p.passed) out.detail += (out.detail.empty() ? "failing: " : ", ") + p.name;
    }
    if (out.detail.empty()) out.detail = "worst: " + worst;
    return out;
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// f(inputs) -> output tensor; loss = sum(output * weights).
CheckComponent check_op(const std::string& name, std::mt19937_64& rng,
                        const std::vector<std::vector<std::int64_t>>& shapes,
                        const std::function<ad::Tensor(const std::vector<ad::Tensor>&)>& op, double lo, double hi,
                        bool avoid_zero = false) {
    std::vector<std::vector<double>> init;
    for (const auto& s : shapes) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        auto v = uniform(rng, static_cast<std::size_t>(n), lo, hi);
        if (avoid_zero)
            for (auto& x : v)
                if (std::abs(x) < 0.1) x = x < 0 ? x - 0.1 : x + 0.1;
        init.push_back(v);
    }
    std::vector<double> flat;
    for (const auto& v : init) flat.insert(flat.end(), v.begin(), v.end());

    auto build = [&](std::span<const double> p, bool grad, std::vector<ad::Tensor>* leaves) {
        std::vector<ad::Tensor> in;
        std::size_t o = 0;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            std::vector<double> vals(p.begin() + o, p.begin() + o + init[i].size());
            o += init[i].size();
            in.push_back(ad::Tensor::from(shapes[i], std::move(vals), grad));
        }
        if (leaves) *leaves = in;
        return op(in);
    };
    const auto probe = build(flat, false, nullptr);
    std::mt19937_64 wrng(rng());
    const auto weights = uniform(wrng, static_cast<std::size_t>(probe.numel()), -1.0, 1.0);
    auto loss_of = [&](const ad::Tensor& out) {
        return ad::sum(ad::mul(out, ad::Tensor::from(out.shape(), weights)));
    };

    std::vector<ad::Tensor> leaves;
    const auto loss = loss_of(build(flat, true, &leaves));
    ad::backward(loss);
    std::vector<double> analytic;
    for (const auto& l : leaves) {
        if (l.has_grad())
            analytic.insert(analytic.end(), l.grad().begin(), l.grad().end());
        else
            analytic.insert(analytic.end(), static_cast<std::size_t>(l.numel()), 0.0);
    }
    const auto rep = finite_difference_check(
        [&](std::span<const double> p) { return loss_of(build(p, false, nullptr)).item(); }, flat, analytic, 1e-5,
        1e-6);
    return from_report(name, rep, 1e-6);
}

}  // namespace

bool CheckReport::passed() const {
    return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.passed; });
}

std::string CheckReport::format() const {
    std::ostringstream out;
    for (const auto& c : components) {
        char line[256];
        std::snprintf(line, sizeof line, "%-4s %-28s max_error=%.3e tol=%.1e  %s\n", c.passed ? "ok" : "FAIL",
                      c.name.c_str(), c.max_error, c.tolerance, c.detail.c_str());
        out << line;
    }
    out << (passed() ? "all checks passed\n" : "CHECKS FAILED\n");
    return out.str();
}

RasterSettings smooth_raster_settings() {
    RasterSettings s;
    s.min_alpha = 0.0;
    s.min_transmittance = 0.0;
    return s;
}

Camera pixel_camera(int width, int height) {
    Camera c;
    c.focal = Vec2(width, height);
    c.principal_point = Vec2(0.5 * width, 0.5 * height);
    c.width = width;
    c.height = height;
    return c;
}

std::vector<SplattedGaussian> random_splats(std::mt19937_64& rng, int n, int width, int height) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SplattedGaussian> out(n);
    for (int i = 0; i < n; ++i) {
        auto& s = out[i];
        s.mean2d = Vec2(-4.0 + (width + 8.0) * u(rng), -4.0 + (height + 8.0) * u(rng));
        const double a = 2.0 * M_PI * u(rng);
        const double s0 = 0.5 + 5.5 * u(rng), s1 = 0.5 + 5.5 * u(rng);
        Mat2 r;
        r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        s.cov2d = r * Vec2(s0 * s0, s1 * s1).asDiagonal() * r.transpose();
        s.cov2d = 0.5 * (s.cov2d + s.cov2d.transpose()).eval();
        s.cov2d(0, 0) += 0.3;
        s.cov2d(1, 1) += 0.3;
        s.depth = 1.0 + 9.0 * u(rng);
        s.color = Vec3(u(rng), u(rng), u(rng));
        s.alpha0 = 0.05 + 0.94 * u(rng);
        s.source_index = i;
    }
    return out;
}

CheckComponent check_tape_ops(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    using T = std::vector<ad::Tensor>;
    std::vector<CheckComponent> parts;
    parts.push_back(check_op("matmul", rng, {{4, 4}, {4, 4}}, [](const T& x) { return ad::matmul(x[0], x[1]); }, -1, 1));
    parts.push_back(check_op("add", rng, {{3, 4}, {3, 4}}, [](const T& x) { return ad::add(x[0], x[1]); }, -1, 1));
    parts.push_back(
        check_op("add_broadcast", rng, {{3, 4}, {4}}, [](const T& x) { return ad::add(x[0], x[1]); }, -1, 1));
    parts.push_back(check_op("mul", rng, {{3, 4}, {3, 4}}, [](const T& x) { return ad::mul(x[0], x[1]); }, -1, 1));
    parts.push_back(check_op("scale", rng, {{3, 4}}, [](const T& x) { return ad::scale(x[0], -1.7); }, -1, 1));
    parts.push_back(check_op("relu", rng, {{3, 4}}, [](const T& x) { return ad::relu(x[0]); }, -1, 1, true));
    parts.push_back(check_op("sigmoid", rng, {{3, 4}}, [](const T& x) { return ad::sigmoid(x[0]); }, -3, 3));
    parts.push_back(check_op("sin", rng, {{3, 4}}, [](const T& x) { return ad::sin(x[0]); }, -3, 3));
    parts.push_back(check_op("cos", rng, {{3, 4}}, [](const T& x) { return ad::cos(x[0]); }, -3, 3));
    parts.push_back(check_op("exp", rng, {{3, 4}}, [](const T& x) { return ad::exp(x[0]); }, -2, 2));
    parts.push_back(check_op("concat", rng, {{3, 2}, {3, 3}}, [](const T& x) { return ad::concat({x[0], x[1]}); },
                             -1, 1));
    parts.push_back(check_op("sum", rng, {{3, 4}}, [](const T& x) { return ad::sum(x[0]); }, -1, 1));
    parts.push_back(check_op("mean", rng, {{3, 4}}, [](const T& x) { return ad::mean(x[0]); }, -1, 1));
    return merge("tape_ops", parts);
}

CheckComponent check_rasterizer_backward(std::uint64_t seed, bool inject_fault) {
    std::mt19937_64 rng(seed);
    const int size = 16;
    const Camera cam = pixel_camera(size, size);
    auto splats = random_splats(rng, 3, size, size);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& s : splats) {
        s.mean2d = Vec2(4.0 + 8.0 * u(rng), 4.0 + 8.0 * u(rng));
        s.alpha0 = 0.2 + 0.6 * u(rng);
        s.cov2d = Mat2::Identity() * (2.0 + 4.0 * u(rng));
        s.cov2d(0, 1) = s.cov2d(1, 0) = 0.8 * u(rng) - 0.4;
    }
    RasterSettings st = smooth_raster_settings();
    const auto w_rgb = uniform(rng, size * size * 3, -1.0, 1.0);
    const auto w_a = uniform(rng, size * size, -1.0, 1.0);
    constexpr int kStride = 9;  // mean2d(2), cov a b c, alpha0, color(3)

    auto pack = [&](const std::vector<SplattedGaussian>& ss) {
        std::vector<double> p;
        for (const auto& s : ss) {
            p.insert(p.end(), {s.mean2d.x(), s.mean2d.y(), s.cov2d(0, 0), s.cov2d(0, 1), s.cov2d(1, 1), s.alpha0,
                               s.color.x(), s.color.y(), s.color.z()});
        }
        return p;
    };
    auto unpack = [&](std::span<const double> p) {
        auto ss = splats;
        for (std::size_t i = 0; i < ss.size(); ++i) {
            const double* q = p.data() + kStride * i;
            ss[i].mean2d = Vec2(q[0], q[1]);
            ss[i].cov2d << q[2], q[3], q[3], q[4];
            ss[i].alpha0 = q[5];
            ss[i].color = Vec3(q[6], q[7], q[8]);
        }
        return ss;
    };
    auto loss = [&](std::span<const double> p) {
        const auto ss = unpack(p);
        const auto out = render(ss, cam, st);
        double l = 0.0;
        for (std::size_t i = 0; i < out.rgb.size(); ++i) l += w_rgb[i] * out.rgb.data[i];
        for (std::size_t i = 0; i < out.alpha.size(); ++i) l += w_a[i] * out.alpha.data[i];
        return l;
    };

    Image d_rgb(size, size, 3), d_alpha(size, size, 1);
    d_rgb.data = w_rgb;
    d_alpha.data = w_a;
    RasterSettings bst = st;
    bst.inject_sign_error = inject_fault;
    const auto g = render_backward(splats, cam, d_rgb, &d_alpha, bst);
    std::vector<double> analytic;
    for (const auto& s : g)
        analytic.insert(analytic.end(), {s.d_mean2d.x(), s.d_mean2d.y(), s.d_cov2d(0, 0),
                                         s.d_cov2d(0, 1) + s.d_cov2d(1, 0), s.d_cov2d(1, 1), s.d_alpha0,
                                         s.d_color.x(), s.d_color.y(), s.d_color.z()});
    const auto rep = finite_difference_check(loss, pack(splats), analytic, 1e-4, 1e-3);
    return from_report("compositing_backward", rep, 1e-3);
}

CheckComponent check_projection_backward(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Camera cam = make_front_camera(64, 64);
    cam.extrinsic_rotation = rodrigues(Vec3(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng))) * cam.extrinsic_rotation;
    const Vec3 mean(0.2 * u(rng), 0.9 + 0.3 * u(rng), 0.2 * u(rng));
    Mat3 a;
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = 0.1 * u(rng);
    const Mat3 cov = a * a.transpose() + 0.01 * Mat3::Identity();
    const Vec2 w_mean(u(rng), u(rng));
    Mat2 w_cov;
    w_cov << u(rng), u(rng), u(rng), u(rng);
    w_cov = (0.5 * (w_cov + w_cov.transpose())).eval();  // upstream covariance gradients are symmetric

    // params: mean(3), cov(9, full), R(9), t(3)
    std::vector<double> p(mean.data(), mean.data() + 3);
    for (int i = 0; i < 9; ++i) p.push_back(cov(i / 3, i % 3));
    for (int i = 0; i < 9; ++i) p.push_back(cam.extrinsic_rotation(i / 3, i % 3));
    for (int i = 0; i < 3; ++i) p.push_back(cam.extrinsic_translation[i]);

    auto eval = [&](std::span<const double> q) {
        const Vec3 m(q[0], q[1], q[2]);
        Mat3 c, r;
        for (int i = 0; i < 9; ++i) c(i / 3, i % 3) = q[3 + i];
        for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = q[12 + i];
        const Vec3 t(q[21], q[22], q[23]);
        // Projection formula without the camera's orthonormality check.
        const Vec3 pc = r * m + t;
        Eigen::Matrix<double, 2, 3> J;
        J << cam.focal.x() / pc.z(), 0, -cam.focal.x() * pc.x() / (pc.z() * pc.z()), 0, cam.focal.y() / pc.z(),
            -cam.focal.y() * pc.y() / (pc.z() * pc.z());
        const Eigen::Matrix<double, 2, 3> T = J * r;
        const Mat2 c2 = T * c * T.transpose();
        const Vec2 m2(cam.focal.x() * pc.x() / pc.z() + cam.principal_point.x(),
                      cam.focal.y() * pc.y() / pc.z() + cam.principal_point.y());
        return w_mean.dot(m2) + (w_cov.array() * c2.array()).sum();
    };
    const auto g = project_gaussian_backward(mean, cov, cam, w_mean, w_cov);
    std::vector<double> analytic(g.d_mean3d.data(), g.d_mean3d.data() + 3);
    // d_cov3d is symmetric; a symmetric perturbation of entry (i,j) only moves that entry here.
    for (int i = 0; i < 9; ++i) analytic.push_back(g.d_cov3d(i / 3, i % 3));
    for (int i = 0; i < 9; ++i) analytic.push_back(g.d_cam_rotation(i / 3, i % 3));
    for (int i = 0; i < 3; ++i) analytic.push_back(g.d_cam_translation[i]);
    const auto rep = finite_difference_check(eval, p, analytic, 1e-6, 1e-4);
    return from_report("projection_backward", rep, 1e-4);
}

TinyScene make_tiny_scene(std::uint64_t seed, int n_gaussians, int size, DeformVariant variant) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
    TinyScene sc;
    auto& t = sc.model.tmpl;
    t.joints = {Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.4, 0.0)};
    t.parent = {-1, 0};
    const int levels = 6, around = 6;
    t.blend_weights = MatX::Zero(levels * around, 2);
    for (int l = 0; l < levels; ++l)
        for (int a = 0; a < around; ++a) {
            const double y = -0.2 + 1.0 * l / (levels - 1);
            const double ang = 2.0 * M_PI * a / around;
            t.vertices_canonical.emplace_back(0.15 * std::cos(ang), y, 0.15 * std::sin(ang));
            const double w = std::clamp((y - 0.2) / 0.4, 0.0, 1.0);
            t.blend_weights(l * around + a, 0) = 1.0 - w;
            t.blend_weights(l * around + a, 1) = w;
        }
    t.validate();

    auto& gs = sc.model.gaussians.gaussians;
    gs.resize(n_gaussians);
    for (auto& g : gs) {
        g.mean = Vec3(0.12 * s(rng), -0.05 + 0.7 * u(rng), 0.12 * s(rng));
        g.log_scale = Vec3(std::log(0.03 + 0.04 * u(rng)), std::log(0.03 + 0.04 * u(rng)), std::log(0.03 + 0.04 * u(rng)));
        g.rotation = Vec4(s(rng), s(rng), s(rng), s(rng)).normalized();
        const double a0 = 0.3 + 0.4 * u(rng);
        g.opacity_logit = std::log(a0 / (1.0 - a0));
    }
    sc.model.deform = DeformMlp({variant, 2, 16, 2}, 2, seed + 11);
    sc.model.color = ColorMlp({2, 16, 3}, seed + 12);
    // Randomize the zero-initialized heads so the whole chain is exercised.
    auto randomize = [&](Mlp& net, double scale) {
        auto& p = net.parameters();
        for (double& v : p[p.size() - 2].values()) v = scale * s(rng);
        for (double& v : p.back().values()) v = scale * s(rng);
    };
    randomize(sc.model.deform.net(), 0.05);
    randomize(sc.model.color.net(), 0.5);
    sc.model.rebuild_skin({4, 0.1});

    sc.pose = Pose::rest(2);
    sc.pose.joint_rotations[0] = Vec3(0.1 * s(rng), 0.1 * s(rng), 0.1 * s(rng));
    sc.pose.joint_rotations[1] = Vec3(0.1 * s(rng), 0.1 * s(rng), 0.5 + 0.2 * s(rng));
    sc.pose.root_rotation = Vec3(0.1 * s(rng), 0.2 * s(rng), 0.05 * s(rng));
    sc.pose.root_translation = Vec3(0.05 * s(rng), 0.05 * s(rng), 0.05 * s(rng));

    sc.camera.focal = Vec2(2.0 * size, 2.0 * size);
    sc.camera.principal_point = Vec2(0.5 * size, 0.5 * size);
    sc.camera.extrinsic_rotation = Vec3(1.0, -1.0, -1.0).asDiagonal();
    sc.camera.extrinsic_translation = Vec3(0.0, 0.3, 2.0);
    sc.camera.width = size;
    sc.camera.height = size;

    sc.target = Image(size, size, 3);
    for (auto& v : sc.target.data) v = u(rng);
    sc.mask = Image(size, size, 1);
    for (auto& v : sc.mask.data) v = u(rng) < 0.5 ? 0.0 : 1.0;
    return sc;
}

double tiny_scene_loss(const TinyScene& sc, const ForwardOptions& options, FrameGrads* grads) {
    ForwardOptions opts = options;
    opts.record_tape = grads != nullptr;
    auto st = forward(sc.model, sc.pose, sc.camera, opts);
    const auto l1 = loss_l1(st.render.rgb, sc.target);
    const auto pc = loss_perceptual(st.render.rgb, sc.target);
    const auto dc = loss_dice(st.render.alpha, sc.mask);
    if (grads) {
        Image d_rgb = l1.grad;
        for (std::size_t i = 0; i < d_rgb.size(); ++i) d_rgb.data[i] += 0.1 * pc.grad.data[i];
        Image d_alpha = dc.grad;
        for (auto& v : d_alpha.data) v *= 0.1;
        *grads = backward(sc.model, st, d_rgb, &d_alpha);
    }
    return l1.value + 0.1 * pc.value + 0.1 * dc.value;
}

CheckComponent check_pipeline_mean_gradient(std::uint64_t seed, DeformVariant variant) {
    TinyScene sc = make_tiny_scene(seed, 5, 32, variant);
    ForwardOptions opts;
    opts.raster = smooth_raster_settings();
    sc.model.deform.net().zero_grad();
    sc.model.color.net().zero_grad();
    FrameGrads g;
    tiny_scene_loss(sc, opts, &g);
    std::vector<double> p, analytic;
    for (std::size_t i = 0; i < sc.model.gaussians.size(); ++i)
        for (int a = 0; a < 3; ++a) {
            p.push_back(sc.model.gaussians.gaussians[i].mean[a]);
            analytic.push_back(g.mean[i][a]);
        }
    auto loss = [&](std::span<const double> q) {
        TinyScene probe = sc;
        for (std::size_t i = 0; i < probe.model.gaussians.size(); ++i)
            for (int a = 0; a < 3; ++a) probe.model.gaussians.gaussians[i].mean[a] = q[3 * i + a];
        return tiny_scene_loss(probe, opts);
    };
    const auto rep = finite_difference_check(loss, p, analytic, 1e-5, 1e-3);
    return from_report("pipeline_mean_gradient", rep, 1e-3);
}

CheckComponent check_color_term_consistency(std::uint64_t seed) {
    TinyScene sc = make_tiny_scene(seed, 5, 32);
    ForwardOptions shared;
    shared.raster = smooth_raster_settings();
    ForwardOptions split = shared;
    split.shared_position_leaf = false;
    FrameGrads gs, gp;
    tiny_scene_loss(sc, shared, &gs);
    tiny_scene_loss(sc, split, &gp);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < sc.model.gaussians.size(); ++i) {
        const Vec3 x = sc.model.gaussians.gaussians[i].mean;
        const Vec3 two_term = mean_gradient_with_color_term(gp.mean_render[i], gp.color[i], color_jacobian(x, sc.model.color));
        err = std::max(err, (two_term - gs.mean[i]).cwiseAbs().maxCoeff());
        scale = std::max(scale, gs.mean[i].cwiseAbs().maxCoeff());
    }
    CheckComponent c{"color_term_consistency", err, 1e-10, err < 1e-10, ""};
    std::ostringstream d;
    d << "max |mean grad| " << scale;
    c.detail = d.str();
    return c;
}

CheckComponent check_tile_oracle(std::uint64_t seed, int scenes) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int s = 0; s < scenes; ++s) {
        std::uniform_int_distribution<int> count(1, 200);
        const auto splats = random_splats(rng, count(rng), 64, 64);
        const Camera cam = pixel_camera(64, 64);
        const auto a = render(splats, cam);
        const auto b = render_brute_force(splats, cam);
        for (std::size_t i = 0; i < a.rgb.size(); ++i) worst = std::max(worst, std::abs(a.rgb.data[i] - b.rgb.data[i]));
        for (std::size_t i = 0; i < a.alpha.size(); ++i)
            worst = std::max(worst, std::abs(a.alpha.data[i] - b.alpha.data[i]));
    }
    CheckComponent c{"tile_vs_oracle", worst, 1e-10, worst < 1e-10, std::to_string(scenes) + " scenes"};
    return c;
}

CheckComponent check_skinning_invariants(std::uint64_t seed, int seeds, int points) {
    const auto tmpl = make_synthetic_rig(0);
    double pou = 0.0, rest = 0.0, rigid = 0.0, indep = 0.0;
    for (int k = 0; k < seeds; ++k) {
        std::mt19937_64 rng(seed + 97 * k);
        auto init = initialize(tmpl, points, rng);
        auto& set = init.gaussians;
        std::normal_distribution<double> n(0.0, 0.03);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& g : set.gaussians) {
            g.mean += Vec3(n(rng), n(rng), n(rng));
            g.log_scale = Vec3(std::log(0.01 + 0.02 * (u(rng) + 1.0)), std::log(0.02), std::log(0.015));
            g.rotation = Vec4(u(rng), u(rng), u(rng), u(rng)).normalized();
        }
        const SkinSettings ss;
        const auto field = build_skin_field(set, tmpl, ss);
        for (std::size_t g = 0; g < field.size(); ++g) {
            double sum = 0.0;
            for (double w : field.weights(g)) sum += w;
            pou = std::max(pou, std::abs(sum - 1.0));
        }

        const auto rest_xf = joint_transforms(tmpl, Pose::rest(tmpl.num_joints()));
        Pose pose = Pose::rest(tmpl.num_joints());
        for (auto& r : pose.joint_rotations) r = Vec3(0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng));
        pose.root_rotation = Vec3(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
        pose.root_translation = Vec3(u(rng), u(rng), u(rng));
        const Mat3 R = rodrigues(Vec3(u(rng), u(rng), u(rng)));
        const Vec3 t(u(rng), u(rng), u(rng));
        Pose moved = pose;
        const Eigen::AngleAxisd aa(R * rodrigues(pose.root_rotation));
        moved.root_rotation = aa.angle() * aa.axis();
        moved.root_translation = R * pose.root_translation + t;
        const auto xf = joint_transforms(tmpl, pose);
        const auto xf_moved = joint_transforms(tmpl, moved);

        for (std::size_t g = 0; g < set.size(); ++g) {
            const auto& gg = set.gaussians[g];
            const auto at_rest = forward_skin_point(gg.mean, field.neighbors(g), field.weights(g), tmpl, rest_xf);
            rest = std::max(rest, (at_rest.observed - gg.mean).cwiseAbs().maxCoeff());
            const auto a = forward_skin_point(gg.mean, field.neighbors(g), field.weights(g), tmpl, xf);
            const auto b = forward_skin_point(gg.mean, field.neighbors(g), field.weights(g), tmpl, xf_moved);
            rigid = std::max(rigid, (b.observed - (R * a.observed + t)).cwiseAbs().maxCoeff());
            const Mat3 cov = gaussian_covariance(gg);
            const Mat3 ca = transport_covariance(cov, a.transform.linear);
            const Mat3 cb = transport_covariance(cov, b.transform.linear);
            rigid = std::max(rigid, (cb - R * ca * R.transpose()).cwiseAbs().maxCoeff());
        }

        // tau never reads the pose: a rebuilt field is identical.
        const auto again = build_skin_field(set, tmpl, ss);
        for (std::size_t i = 0; i < field.tau.size(); ++i) indep = std::max(indep, std::abs(field.tau[i] - again.tau[i]));
        if (again.neighbor_indices != field.neighbor_indices) indep = 1.0;
    }
    const bool ok = pou < 1e-9 && rest < 1e-12 && rigid < 1e-9 && indep == 0.0;
    std::ostringstream d;
    d << "partition " << pou << ", rest " << rest << ", rigid " << rigid << ", pose-independence " << indep;
    return {"skinning_invariants", std::max({pou, rest, rigid, indep}), 1e-9, ok, d.str()};
}

CheckComponent check_deform_identity(std::uint64_t seed, int probes) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto tmpl = make_synthetic_rig(0);
    const DeformConfig base;
    std::vector<DeformMlp> nets;
    for (auto v : {DeformVariant::Translation, DeformVariant::Rigid, DeformVariant::Affine}) {
        DeformConfig c = base;
        c.variant = v;
        nets.emplace_back(c, tmpl.num_joints(), seed);
    }
    double lin = 0.0, trans = 0.0, agree = 0.0;
    for (int p = 0; p < probes; ++p) {
        const Vec3 x(u(rng), 1.0 + u(rng), u(rng));
        Pose pose = Pose::rest(tmpl.num_joints());
        for (auto& r : pose.joint_rotations) r = Vec3(u(rng), u(rng), u(rng));
        std::vector<AffineTransform3> outs;
        for (const auto& net : nets) {
            const auto a = nonrigid_transform(x, tmpl, pose, net);
            lin = std::max(lin, (a.linear - Mat3::Identity()).cwiseAbs().maxCoeff());
            trans = std::max(trans, a.translation.cwiseAbs().maxCoeff());
            outs.push_back(a);
        }
        for (std::size_t k = 1; k < outs.size(); ++k) {
            agree = std::max(agree, (outs[k].linear - outs[0].linear).cwiseAbs().maxCoeff());
            agree = std::max(agree, (outs[k].translation - outs[0].translation).cwiseAbs().maxCoeff());
        }
    }
    const bool ok = trans == 0.0 && lin <= 1e-15 && agree <= 1e-15;
    std::ostringstream d;
    d << probes << " probes; linear " << lin << ", translation " << trans << ", variant spread " << agree;
    return {"deform_identity", std::max({lin, trans, agree}), 1e-15, ok, d.str()};
}

CheckReport run_checks(const CheckOptions& o) {
    CheckReport r;
    r.components.push_back(check_tape_ops(o.seed));
    r.components.push_back(check_rasterizer_backward(o.seed, o.inject_compositing_fault));
    r.components.push_back(check_projection_backward(o.seed));
    r.components.push_back(check_pipeline_mean_gradient(o.seed));
    r.components.push_back(check_color_term_consistency(o.seed));
    r.components.push_back(check_tile_oracle(o.seed, o.oracle_scenes));
    r.components.push_back(check_skinning_invariants(o.seed, o.skin_seeds, o.skin_points));
    r.components.push_back(check_deform_identity(o.seed, 200));
    return r;
}

}  // namespace rigsplat
