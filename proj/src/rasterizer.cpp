// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rigsplat {

namespace {

struct Conic {
    Mat2 q;  // cov2d^-1
};

Conic conic_of(const SplattedGaussian& s) {
    const Mat2& c = s.cov2d;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    if (!(det > 0.0) || !std::isfinite(det))
        throw std::logic_error("rasterizer: singular cov2d for splat " + std::to_string(s.source_index));
    Mat2 q;
    q << c(1, 1) / det, -c(0, 1) / det, -c(1, 0) / det, c(0, 0) / det;
    return {q};
}

// Both renderers evaluate alpha through this one function so their
// arithmetic matches exactly.
inline double splat_power(const Mat2& q, double dx, double dy) {
    return dx * dx * q(0, 0) + dx * dy * (q(0, 1) + q(1, 0)) + dy * dy * q(1, 1);
}

inline double splat_gauss(const Mat2& q, double dx, double dy) { return std::exp(-0.5 * splat_power(q, dx, dy)); }

bool depth_less(const SplattedGaussian& a, const SplattedGaussian& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source_index < b.source_index;
}

std::vector<int> depth_order(std::span<const SplattedGaussian> splats) {
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return depth_less(splats[a], splats[b]); });
    return order;
}

struct PixelRect {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
    [[nodiscard]] bool empty() const { return x1 < x0 || y1 < y0; }
};

// Pixels whose centers may receive alpha >= min_alpha, padded by one pixel.
PixelRect splat_rect(const SplattedGaussian& s, const Camera& cam, const RasterSettings& st) {
    PixelRect r;
    if (st.min_alpha <= 0.0) return {0, 0, cam.width - 1, cam.height - 1};
    if (s.alpha0 < st.min_alpha) return r;
    const double qmax = 2.0 * std::log(s.alpha0 / st.min_alpha);
    const double ex = std::sqrt(std::max(0.0, qmax * s.cov2d(0, 0)));
    const double ey = std::sqrt(std::max(0.0, qmax * s.cov2d(1, 1)));
    // Pixel centers sit at c + 0.5.
    r.x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - ex - 0.5)) - 1);
    r.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.mean2d.x() + ex - 0.5)) + 1);
    r.y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - ey - 0.5)) - 1);
    r.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.mean2d.y() + ey - 0.5)) + 1);
    return r;
}

struct TileGrid {
    int tile = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<int>> lists;  // per tile, splat indices front to back
};

TileGrid bin_splats(std::span<const SplattedGaussian> splats, const Camera& cam, const RasterSettings& st) {
    if (st.tile_size < 1) throw std::invalid_argument("tile_size must be positive");
    TileGrid g;
    g.tile = st.tile_size;
    g.tiles_x = (cam.width + g.tile - 1) / g.tile;
    g.tiles_y = (cam.height + g.tile - 1) / g.tile;
    g.lists.resize(static_cast<std::size_t>(g.tiles_x) * g.tiles_y);
    for (int idx : depth_order(splats)) {
        const auto r = splat_rect(splats[idx], cam, st);
        if (r.empty()) continue;
        for (int ty = r.y0 / g.tile; ty <= r.y1 / g.tile; ++ty)
            for (int tx = r.x0 / g.tile; tx <= r.x1 / g.tile; ++tx)
                g.lists[static_cast<std::size_t>(ty) * g.tiles_x + tx].push_back(idx);
    }
    return g;
}

struct Hit {
    int local = 0;  // position in the list being composited
    double alpha = 0.0;
    double gauss = 0.0;
    double trans = 0.0;  // transmittance in front of this splat
};

// Front-to-back walk over `list` at one pixel. Returns the final transmittance.
template <typename IndexList>
double composite_pixel(std::span<const SplattedGaussian> splats, const std::vector<Conic>& conics,
                       const IndexList& list, double px, double py, const RasterSettings& st,
                       std::vector<Hit>& hits) {
    hits.clear();
    double T = 1.0;
    for (std::size_t l = 0; l < list.size(); ++l) {
        const int i = list[l];
        const auto& s = splats[i];
        const double gauss = splat_gauss(conics[i].q, px - s.mean2d.x(), py - s.mean2d.y());
        const double alpha = std::min(st.max_alpha, s.alpha0 * gauss);
        if (alpha < st.min_alpha) continue;
        const double next = T * (1.0 - alpha);
        if (next < st.min_transmittance) break;
        hits.push_back({static_cast<int>(l), alpha, gauss, T});
        T = next;
    }
    return T;
}

std::vector<Conic> conics_of(std::span<const SplattedGaussian> splats) {
    std::vector<Conic> c;
    c.reserve(splats.size());
    for (const auto& s : splats) c.push_back(conic_of(s));
    return c;
}

RenderOutput blank(const Camera& cam, std::size_t n) {
    RenderOutput out;
    out.rgb = Image(cam.width, cam.height, 3);
    out.alpha = Image(cam.width, cam.height, 1);
    out.contribution.assign(n, 0.0);
    return out;
}

}  // namespace

std::optional<SplattedGaussian> project_gaussian(const Vec3& mean3d, const Mat3& cov3d, const Camera& camera,
                                                 const RasterSettings& settings) {
    const Vec3 p = camera.extrinsic_rotation * mean3d + camera.extrinsic_translation;
    const double z = p.z();
    if (!(z > settings.near_plane) || !p.allFinite()) return std::nullopt;
    const double fx = camera.focal.x(), fy = camera.focal.y();
    Eigen::Matrix<double, 2, 3> J;
    J << fx / z, 0.0, -fx * p.x() / (z * z), 0.0, fy / z, -fy * p.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> T = J * camera.extrinsic_rotation;

    SplattedGaussian s;
    s.mean2d = Vec2(fx * p.x() / z + camera.principal_point.x(), fy * p.y() / z + camera.principal_point.y());
    s.cov2d = T * cov3d * T.transpose();
    s.cov2d = 0.5 * (s.cov2d + s.cov2d.transpose()).eval();
    s.cov2d(0, 0) += settings.low_pass;
    s.cov2d(1, 1) += settings.low_pass;
    s.depth = z;
    if (!s.cov2d.allFinite() || !s.mean2d.allFinite()) return std::nullopt;

    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double det = s.cov2d.determinant();
    const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double r = 3.0 * std::sqrt(lmax);
    if (s.mean2d.x() + r < 0.0 || s.mean2d.x() - r > camera.width || s.mean2d.y() + r < 0.0 ||
        s.mean2d.y() - r > camera.height)
        return std::nullopt;
    return s;
}

ProjectionGrad project_gaussian_backward(const Vec3& mean3d, const Mat3& cov3d, const Camera& camera,
                                         const Vec2& d_mean2d, const Mat2& d_cov2d) {
    const Mat3& W = camera.extrinsic_rotation;
    const Vec3 p = W * mean3d + camera.extrinsic_translation;
    const double z = p.z(), z2 = z * z, z3 = z2 * z;
    const double fx = camera.focal.x(), fy = camera.focal.y();
    Eigen::Matrix<double, 2, 3> J;
    J << fx / z, 0.0, -fx * p.x() / z2, 0.0, fy / z, -fy * p.y() / z2;
    const Eigen::Matrix<double, 2, 3> T = J * W;
    const Mat2 gs = 0.5 * (d_cov2d + d_cov2d.transpose());

    ProjectionGrad g;
    g.d_cov3d = T.transpose() * gs * T;
    const Eigen::Matrix<double, 2, 3> dT = 2.0 * gs * T * cov3d;
    const Eigen::Matrix<double, 2, 3> dJ = dT * W.transpose();
    g.d_cam_rotation = J.transpose() * dT;

    Vec3 dp = J.transpose() * d_mean2d;
    dp.x() += dJ(0, 2) * (-fx / z2);
    dp.y() += dJ(1, 2) * (-fy / z2);
    dp.z() += dJ(0, 0) * (-fx / z2) + dJ(0, 2) * (2.0 * fx * p.x() / z3) + dJ(1, 1) * (-fy / z2) +
              dJ(1, 2) * (2.0 * fy * p.y() / z3);

    g.d_mean3d = W.transpose() * dp;
    g.d_cam_rotation += dp * mean3d.transpose();
    g.d_cam_translation = dp;
    return g;
}

RenderOutput render(std::span<const SplattedGaussian> splats, const Camera& camera,
                    const RasterSettings& settings) {
    RenderOutput out = blank(camera, splats.size());
    if (splats.empty() || camera.width <= 0 || camera.height <= 0) return out;
    const auto conics = conics_of(splats);
    const TileGrid grid = bin_splats(splats, camera, settings);
    const int ntiles = static_cast<int>(grid.lists.size());
    std::vector<std::vector<double>> partial(ntiles);

#pragma omp parallel
    {
        std::vector<Hit> hits;
#pragma omp for schedule(static)
        for (int t = 0; t < ntiles; ++t) {
            const auto& list = grid.lists[t];
            if (list.empty()) continue;
            auto& contrib = partial[t];
            contrib.assign(list.size(), 0.0);
            const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
            const int xe = std::min(camera.width, (tx + 1) * grid.tile);
            const int ye = std::min(camera.height, (ty + 1) * grid.tile);
            for (int y = ty * grid.tile; y < ye; ++y) {
                for (int x = tx * grid.tile; x < xe; ++x) {
                    const double T = composite_pixel(splats, conics, list, x + 0.5, y + 0.5, settings, hits);
                    double c[3] = {0.0, 0.0, 0.0};
                    for (const auto& h : hits) {
                        const auto& s = splats[list[h.local]];
                        const double w = h.alpha * h.trans;
                        for (int k = 0; k < 3; ++k) c[k] += s.color[k] * w;
                        contrib[h.local] += w;
                    }
                    for (int k = 0; k < 3; ++k) out.rgb.at(x, y, k) = c[k];
                    out.alpha.at(x, y) = 1.0 - T;
                }
            }
        }
    }

    for (int t = 0; t < ntiles; ++t)
        for (std::size_t l = 0; l < partial[t].size(); ++l) out.contribution[grid.lists[t][l]] += partial[t][l];
    return out;
}

RenderOutput render_brute_force(std::span<const SplattedGaussian> splats, const Camera& camera,
                                const RasterSettings& settings) {
    RenderOutput out = blank(camera, splats.size());
    if (splats.empty()) return out;
    const auto conics = conics_of(splats);
    std::vector<int> live;
    live.reserve(splats.size());
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            live.clear();
            for (int i = 0; i < static_cast<int>(splats.size()); ++i) {
                const auto& s = splats[i];
                const double a = std::min(settings.max_alpha,
                                          s.alpha0 * splat_gauss(conics[i].q, px - s.mean2d.x(), py - s.mean2d.y()));
                if (a >= settings.min_alpha) live.push_back(i);
            }
            std::sort(live.begin(), live.end(), [&](int a, int b) { return depth_less(splats[a], splats[b]); });
            double T = 1.0;
            double c[3] = {0.0, 0.0, 0.0};
            bool done = false;
            for (int i : live) {
                if (done) continue;
                const auto& s = splats[i];
                const double a = std::min(settings.max_alpha,
                                          s.alpha0 * splat_gauss(conics[i].q, px - s.mean2d.x(), py - s.mean2d.y()));
                const double next = T * (1.0 - a);
                if (next < settings.min_transmittance) {
                    done = true;
                    continue;
                }
                const double w = a * T;
                for (int k = 0; k < 3; ++k) c[k] += s.color[k] * w;
                out.contribution[i] += w;
                T = next;
            }
            for (int k = 0; k < 3; ++k) out.rgb.at(x, y, k) = c[k];
            out.alpha.at(x, y) = 1.0 - T;
        }
    }
    return out;
}

std::vector<SplatGrad> render_backward(std::span<const SplattedGaussian> splats, const Camera& camera,
                                       const Image& d_rgb, const Image* d_alpha,
                                       const RasterSettings& settings) {
    std::vector<SplatGrad> grads(splats.size());
    if (splats.empty()) return grads;
    if (d_rgb.width != camera.width || d_rgb.height != camera.height || d_rgb.channels != 3)
        throw std::invalid_argument("render_backward: d_rgb shape does not match the camera");
    if (d_alpha && (d_alpha->width != camera.width || d_alpha->height != camera.height || d_alpha->channels != 1))
        throw std::invalid_argument("render_backward: d_alpha shape does not match the camera");

    const auto conics = conics_of(splats);
    const TileGrid grid = bin_splats(splats, camera, settings);
    const int ntiles = static_cast<int>(grid.lists.size());
    std::vector<std::vector<SplatGrad>> partial(ntiles);
    const double sign = settings.inject_sign_error ? -1.0 : 1.0;

#pragma omp parallel
    {
        std::vector<Hit> hits;
#pragma omp for schedule(static)
        for (int t = 0; t < ntiles; ++t) {
            const auto& list = grid.lists[t];
            if (list.empty()) continue;
            auto& local = partial[t];
            local.assign(list.size(), SplatGrad{});
            const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
            const int xe = std::min(camera.width, (tx + 1) * grid.tile);
            const int ye = std::min(camera.height, (ty + 1) * grid.tile);
            for (int y = ty * grid.tile; y < ye; ++y) {
                for (int x = tx * grid.tile; x < xe; ++x) {
                    const double px = x + 0.5, py = y + 0.5;
                    const double T_final = composite_pixel(splats, conics, list, px, py, settings, hits);
                    const Vec3 g(d_rgb.at(x, y, 0), d_rgb.at(x, y, 1), d_rgb.at(x, y, 2));
                    const double ga = d_alpha ? d_alpha->at(x, y) : 0.0;
                    Vec3 suffix = Vec3::Zero();  // sum over later hits of c_j alpha_j T_j
                    for (auto h = hits.rbegin(); h != hits.rend(); ++h) {
                        const auto& s = splats[list[h->local]];
                        auto& out = local[h->local];
                        const double w = h->alpha * h->trans;
                        out.d_color += w * g;
                        const double inv = 1.0 / (1.0 - h->alpha);
                        double d_alpha_i = g.dot(s.color * h->trans - suffix * inv) + ga * T_final * inv;
                        d_alpha_i *= sign;
                        suffix += s.color * w;

                        if (s.alpha0 * h->gauss > settings.max_alpha) continue;  // clamped
                        out.d_alpha0 += d_alpha_i * h->gauss;
                        const double d_power = -0.5 * d_alpha_i * s.alpha0 * h->gauss;
                        const Mat2& q = conics[list[h->local]].q;
                        const Vec2 d(px - s.mean2d.x(), py - s.mean2d.y());
                        // power = d^T Q d, d = pixel - mean
                        out.d_mean2d += -d_power * (q + q.transpose()) * d;
                        const Mat2 dQ = d_power * d * d.transpose();
                        out.d_cov2d += -q.transpose() * dQ * q.transpose();
                    }
                }
            }
        }
    }

    for (int t = 0; t < ntiles; ++t) {
        for (std::size_t l = 0; l < partial[t].size(); ++l) {
            auto& dst = grads[grid.lists[t][l]];
            const auto& src = partial[t][l];
            dst.d_mean2d += src.d_mean2d;
            dst.d_cov2d += src.d_cov2d;
            dst.d_alpha0 += src.d_alpha0;
            dst.d_color += src.d_color;
        }
    }
    return grads;
}

Image render_mask(std::span<const SplattedGaussian> splats, const Camera& camera, const RasterSettings& settings) {
    std::vector<SplattedGaussian> white(splats.begin(), splats.end());
    for (auto& s : white) s.color = Vec3::Ones();
    const auto out = render(white, camera, settings);
    Image mask(camera.width, camera.height, 1);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) mask.at(x, y) = out.rgb.at(x, y, 0);
    return mask;
}

std::vector<SplatGrad> render_mask_backward(std::span<const SplattedGaussian> splats, const Camera& camera,
                                            const Image& d_mask, const RasterSettings& settings) {
    std::vector<SplattedGaussian> white(splats.begin(), splats.end());
    for (auto& s : white) s.color = Vec3::Ones();
    Image d_rgb(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) d_rgb.at(x, y, 0) = d_mask.at(x, y);
    auto grads = render_backward(white, camera, d_rgb, nullptr, settings);
    for (auto& g : grads) g.d_color.setZero();
    return grads;
}

}  // namespace rigsplat
