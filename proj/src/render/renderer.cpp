// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/renderer.hpp"

#include "mimic/ops.hpp"
#include "mimic/parallel.hpp"
#include "mimic/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace mimic {

namespace {

constexpr std::uint64_t kStratifiedStream = 1;
constexpr std::uint64_t kImportanceStream = 2;
constexpr double kMergeTolerance = 1e-12;

Vec3 normalized(const Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n > 0.0)) throw std::invalid_argument("camera: zero-length vector");
    return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

}  // namespace

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                               std::size_t image_size) {
    const Vec3 z = normalized({eye[0] - target[0], eye[1] - target[1], eye[2] - target[2]});
    const Vec3 x = normalized(cross(up, z));
    const Vec3 y = cross(z, x);
    CameraPose cam;
    cam.rotation = {x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]};
    cam.translation = eye;
    cam.focal = focal;
    cam.cx = cam.cy = 0.5 * static_cast<double>(image_size);
    cam.image_size = image_size;
    cam.validate();
    return cam;
}

CameraPose CameraPose::orbit(double radius, double yaw, double pitch, double fov_degrees, std::size_t image_size) {
    if (!(radius > 0.0)) throw std::invalid_argument("orbit: radius must be positive");
    if (!(std::fabs(pitch) < 1.55)) throw std::invalid_argument("orbit: |pitch| must stay below pi/2");
    if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw std::invalid_argument("orbit: fov outside (0, 180)");
    const Vec3 eye{radius * std::sin(yaw) * std::cos(pitch), radius * std::sin(pitch),
                   radius * std::cos(yaw) * std::cos(pitch)};
    const double focal = 0.5 * static_cast<double>(image_size) / std::tan(0.5 * fov_degrees * M_PI / 180.0);
    return look_at(eye, {0, 0, 0}, {0, 1, 0}, focal, image_size);
}

void CameraPose::validate() const {
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += rotation[3 * k + i] * rotation[3 * k + j];
            if (std::fabs(dot - (i == j ? 1.0 : 0.0)) > 1e-9) throw std::invalid_argument("camera: rotation not orthonormal");
        }
    }
    const auto& r = rotation;
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (std::fabs(det - 1.0) > 1e-9) throw std::invalid_argument("camera: rotation determinant is not +1");
    if (!(focal > 0.0) || !std::isfinite(focal)) throw std::invalid_argument("camera: focal must be positive");
    if (image_size == 0) throw std::invalid_argument("camera: empty image");
}

void PatchSpec::validate() const {
    if (size == 0 || size > full) {
        throw std::invalid_argument("patch: size " + std::to_string(size) + " not in [1, " + std::to_string(full) + "]");
    }
    if (u0 > full - size || v0 > full - size) {
        throw std::invalid_argument("patch: origin (" + std::to_string(u0) + ", " + std::to_string(v0) +
                                    ") leaves the frame");
    }
}

ad::Tensor RayBatch::points() const {
    std::vector<double> p(t.size() * 3);
    for (std::size_t r = 0; r < size(); ++r) {
        for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
            for (int k = 0; k < 3; ++k) p[i * 3 + k] = origins[r * 3 + k] + t[i] * directions[r * 3 + k];
        }
    }
    return ad::Tensor::from_vector({t.size(), 3}, std::move(p));
}

bool intersect_unit_cube(const Vec3& origin, const Vec3& direction, double& t_near, double& t_far) {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (direction[k] == 0.0) {
            if (origin[k] < -1.0 || origin[k] > 1.0) return false;
            continue;
        }
        double a = (-1.0 - origin[k]) / direction[k];
        double b = (1.0 - origin[k]) / direction[k];
        if (a > b) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
    }
    if (!(hi > lo + kMergeTolerance)) return false;
    t_near = lo;
    t_far = hi;
    return true;
}

RayBatch generate_rays(const CameraPose& cam, std::size_t u0, std::size_t v0, std::size_t width,
                       std::size_t height) {
    cam.validate();
    if (u0 + width > cam.image_size || v0 + height > cam.image_size) {
        throw std::invalid_argument("generate_rays: rectangle leaves the frame");
    }
    const std::size_t n = width * height;
    RayBatch rays;
    rays.origins.resize(n * 3);
    rays.directions.resize(n * 3);
    rays.near.assign(n, 0.0);
    rays.far.assign(n, 0.0);
    rays.hit.assign(n, 0);
    rays.pixel.resize(n);
    rays.offsets.assign(n + 1, 0);
    const auto& r = cam.rotation;
    for (std::size_t row = 0; row < height; ++row) {
        for (std::size_t col = 0; col < width; ++col) {
            const std::size_t i = row * width + col;
            const std::size_t u = u0 + col, v = v0 + row;
            const Vec3 d_cam = normalized({(static_cast<double>(u) + 0.5 - cam.cx) / cam.focal,
                                           -(static_cast<double>(v) + 0.5 - cam.cy) / cam.focal, -1.0});
            Vec3 d{};
            for (int k = 0; k < 3; ++k) d[k] = r[3 * k] * d_cam[0] + r[3 * k + 1] * d_cam[1] + r[3 * k + 2] * d_cam[2];
            d = normalized(d);
            for (int k = 0; k < 3; ++k) {
                rays.origins[i * 3 + k] = cam.translation[k];
                rays.directions[i * 3 + k] = d[k];
            }
            rays.pixel[i] = static_cast<std::uint64_t>(v) * cam.image_size + u;
            double tn = 0.0, tf = 0.0;
            if (intersect_unit_cube(cam.translation, d, tn, tf)) {
                rays.near[i] = tn;
                rays.far[i] = tf;
                rays.hit[i] = 1;
            }
        }
    }
    return rays;
}

RayBatch generate_rays(const CameraPose& cam, const PatchSpec& patch) {
    patch.validate();
    if (patch.full != cam.image_size) {
        throw std::invalid_argument("generate_rays: patch frame " + std::to_string(patch.full) +
                                    " differs from camera image size " + std::to_string(cam.image_size));
    }
    return generate_rays(cam, patch.u0, patch.v0, patch.size, patch.size);
}

void update_deltas(RayBatch& rays) {
    rays.delta.assign(rays.t.size(), 0.0);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const std::size_t b = rays.offsets[r], e = rays.offsets[r + 1];
        for (std::size_t i = b; i < e; ++i) {
            const double next = i + 1 < e ? rays.t[i + 1] : rays.far[r];
            rays.delta[i] = std::max(0.0, next - rays.t[i]);
        }
    }
}

void stratified_sample(RayBatch& rays, std::size_t s1, std::uint64_t seed) {
    if (s1 == 0) throw std::invalid_argument("stratified_sample: S1 must be >= 1");
    const std::size_t n = rays.size();
    rays.offsets.assign(n + 1, 0);
    for (std::size_t r = 0; r < n; ++r) rays.offsets[r + 1] = rays.offsets[r] + (rays.hit[r] ? s1 : 0);
    rays.t.assign(rays.offsets[n], 0.0);
    parallel::parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            if (!rays.hit[r]) continue;
            auto rng = make_rng(seed, {kStratifiedStream, rays.pixel[r]});
            const double lo = rays.near[r], span = rays.far[r] - rays.near[r];
            for (std::size_t i = 0; i < s1; ++i) {
                const double t = lo + span * (static_cast<double>(i) + uniform01(rng)) / static_cast<double>(s1);
                rays.t[rays.offsets[r] + i] = std::min(t, rays.far[r]);
            }
        }
    });
    update_deltas(rays);
}

void stratified_sample(RayBatch& rays, double near, double far, std::size_t s1, std::uint64_t seed) {
    if (!(near < far) || !std::isfinite(near) || !std::isfinite(far)) {
        throw std::invalid_argument("stratified_sample: need finite near < far");
    }
    std::fill(rays.near.begin(), rays.near.end(), near);
    std::fill(rays.far.begin(), rays.far.end(), far);
    std::fill(rays.hit.begin(), rays.hit.end(), 1);
    stratified_sample(rays, s1, seed);
}

std::vector<double> sample_piecewise_constant(double near, double far, std::span<const double> weights,
                                              std::size_t n, std::mt19937_64& rng, double floor) {
    const std::size_t bins = weights.size();
    if (bins == 0) throw std::invalid_argument("sample_piecewise_constant: no bins");
    std::vector<double> cdf(bins + 1, 0.0);
    for (std::size_t i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0) + floor;
    const double total = cdf[bins];
    if (!(total > 0.0)) throw std::invalid_argument("sample_piecewise_constant: zero total mass");
    const double width = (far - near) / static_cast<double>(bins);
    std::vector<double> out(n);
    for (auto& t : out) {
        const double u = uniform01(rng) * total;
        auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
        const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()) - 1, bins - 1);
        const double mass = cdf[b + 1] - cdf[b];
        const double frac = mass > 0.0 ? std::clamp((u - cdf[b]) / mass, 0.0, 1.0) : 0.5;
        t = std::clamp(near + (static_cast<double>(b) + frac) * width, near, far);
    }
    return out;
}

RayBatch importance_sample(const RayBatch& rays, std::span<const double> weights, std::size_t s2,
                           std::uint64_t seed, double floor) {
    if (weights.size() != rays.samples()) {
        throw std::invalid_argument("importance_sample: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(rays.samples()) + " samples");
    }
    RayBatch out = rays;
    const std::size_t n = rays.size();
    std::vector<std::vector<double>> merged(n);
    parallel::parallel_for(n, 32, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            const std::size_t lo = rays.offsets[r], hi = rays.offsets[r + 1];
            if (lo == hi) continue;
            auto rng = make_rng(seed, {kImportanceStream, rays.pixel[r]});
            auto drawn = s2 == 0 ? std::vector<double>{}
                                 : sample_piecewise_constant(rays.near[r], rays.far[r], weights.subspan(lo, hi - lo),
                                                             s2, rng, floor);
            drawn.insert(drawn.end(), rays.t.begin() + static_cast<std::ptrdiff_t>(lo),
                         rays.t.begin() + static_cast<std::ptrdiff_t>(hi));
            std::sort(drawn.begin(), drawn.end());
            auto& m = merged[r];
            m.reserve(drawn.size());
            for (double t : drawn) {
                if (m.empty() || t - m.back() > kMergeTolerance) m.push_back(t);
            }
        }
    });
    out.offsets.assign(n + 1, 0);
    for (std::size_t r = 0; r < n; ++r) out.offsets[r + 1] = out.offsets[r] + merged[r].size();
    out.t.clear();
    out.t.reserve(out.offsets[n]);
    for (const auto& m : merged) out.t.insert(out.t.end(), m.begin(), m.end());
    update_deltas(out);
    return out;
}

Composite composite(const ad::Tensor& color, const ad::Tensor& sigma, std::span<const double> delta,
                    std::span<const std::size_t> offsets) {
    if (offsets.empty() || offsets.front() != 0) throw std::invalid_argument("composite: offsets must start at 0");
    const std::size_t n = offsets.size() - 1;
    const std::size_t m = offsets.back();
    if (color.shape() != ad::Shape{m, 3} || sigma.shape() != ad::Shape{m} || delta.size() != m) {
        throw std::invalid_argument("composite: color " + ad::to_string(color.shape()) + ", sigma " +
                                    ad::to_string(sigma.shape()) + " and " + std::to_string(delta.size()) +
                                    " spacings disagree with " + std::to_string(m) + " samples");
    }
    struct Saved {
        std::vector<double> weight, t_next, t_end, color, delta;
        std::vector<std::size_t> offsets;
    };
    auto saved = std::make_shared<Saved>();
    saved->weight.assign(m, 0.0);
    saved->t_next.assign(m, 0.0);
    saved->t_end.assign(n, 1.0);
    saved->color.assign(color.data().begin(), color.data().end());
    saved->delta.assign(delta.begin(), delta.end());
    saved->offsets.assign(offsets.begin(), offsets.end());
    const auto sg = sigma.data();
    std::vector<double> out(3 * n + m + n, 0.0);
    parallel::parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            double trans = 1.0;
            double px[3] = {0.0, 0.0, 0.0};
            for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
                const double tau = sg[i] * delta[i];
                const double alpha = -std::expm1(-tau);
                const double w = trans * alpha;
                trans *= std::exp(-tau);
                saved->weight[i] = w;
                saved->t_next[i] = trans;
                for (int k = 0; k < 3; ++k) px[k] += w * saved->color[i * 3 + k];
            }
            saved->t_end[r] = trans;
            for (int k = 0; k < 3; ++k) out[r * 3 + k] = px[k];
        }
    });
    std::copy(saved->weight.begin(), saved->weight.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * n));
    std::copy(saved->t_end.begin(), saved->t_end.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * n + m));

    auto backward = [saved, n, m](const ad::Tensor& grad) -> std::vector<ad::Tensor> {
        const auto g = grad.data();
        std::vector<double> gc(m * 3, 0.0), gs(m, 0.0);
        parallel::parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                const double* gp = &g[r * 3];
                const double gt = g[3 * n + m + r];
                const std::size_t lo = saved->offsets[r], hi = saved->offsets[r + 1];
                double suffix = 0.0;  // sum_{k > i} w_k a_k
                for (std::size_t i = hi; i-- > lo;) {
                    const double* c = &saved->color[i * 3];
                    const double a = gp[0] * c[0] + gp[1] * c[1] + gp[2] * c[2] + g[3 * n + i];
                    const double w = saved->weight[i];
                    for (int k = 0; k < 3; ++k) gc[i * 3 + k] = w * gp[k];
                    gs[i] = saved->delta[i] * (saved->t_next[i] * a - suffix - saved->t_end[r] * gt);
                    suffix += w * a;
                }
            }
        });
        return {ad::Tensor::from_vector({m, 3}, std::move(gc)), ad::Tensor::from_vector({m}, std::move(gs))};
    };
    auto packed = ad::make_op_result("composite", {3 * n + m + n}, std::move(out), {color, sigma}, backward);
    return {ad::reshape(ad::slice(packed, 0, 0, 3 * n), {n, 3}), ad::slice(packed, 0, 3 * n, m),
            ad::slice(packed, 0, 3 * n + m, n)};
}

Composite composite(const ad::Tensor& color, const ad::Tensor& sigma, const ad::Tensor& delta) {
    if (sigma.dim() != 2 || delta.shape() != sigma.shape() ||
        color.shape() != ad::Shape{sigma.size(0), sigma.size(1), 3}) {
        throw std::invalid_argument("composite: color " + ad::to_string(color.shape()) + ", sigma " +
                                    ad::to_string(sigma.shape()) + ", delta " + ad::to_string(delta.shape()) +
                                    " do not form N x S (x 3)");
    }
    const std::size_t n = sigma.size(0), s = sigma.size(1);
    std::vector<std::size_t> offsets(n + 1);
    for (std::size_t r = 0; r <= n; ++r) offsets[r] = r * s;
    auto c = composite(ad::reshape(color, {n * s, 3}), ad::reshape(sigma, {n * s}), delta.data(), offsets);
    c.weights = ad::reshape(c.weights, {n, s});
    return c;
}

RenderOutput render_planned(const RadianceField& field, const RayBatch& rays, std::size_t width,
                            const Vec3& background) {
    const std::size_t n = rays.size();
    if (width == 0 || n % width != 0) throw std::invalid_argument("render_planned: ray count is not a multiple of width");
    const std::size_t height = n / width;
    RenderOutput out;
    out.depth.assign(n, 0.0);
    out.opacity.assign(n, 0.0);
    std::vector<double> bg(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) bg[i * 3 + k] = background[k];
    }
    if (rays.samples() == 0) {
        out.image = ad::Tensor::from_vector({height, width, 3}, std::move(bg));
        return out;
    }
    const auto q = field.query(rays.points());
    const auto c = composite(q.color, q.sigma, rays.delta, rays.offsets);
    const auto w = c.weights.data();
    for (std::size_t r = 0; r < n; ++r) {
        double sw = 0.0, swt = 0.0;
        for (std::size_t i = rays.offsets[r]; i < rays.offsets[r + 1]; ++i) {
            sw += w[i];
            swt += w[i] * rays.t[i];
        }
        out.opacity[r] = sw;
        out.depth[r] = swt / std::max(sw, 1e-10);
    }
    const auto bg_term = ad::mul(ad::expand(c.t_end, 1, 3), ad::Tensor::from_vector({n, 3}, std::move(bg)));
    out.image = ad::reshape(ad::add(c.pixel, bg_term), {height, width, 3});
    return out;
}

namespace {

RayBatch plan_rect(const RadianceField& field, const CameraPose& cam, std::size_t u0, std::size_t v0,
                   std::size_t width, std::size_t height, const RenderOptions& opts) {
    auto rays = generate_rays(cam, u0, v0, width, height);
    stratified_sample(rays, opts.coarse_samples, opts.seed);
    if (opts.fine_samples == 0 || rays.samples() == 0) return rays;
    std::vector<double> weights;
    {
        ad::NoGradGuard guard;
        const auto q = field.query(rays.points());
        const auto c = composite(q.color, q.sigma, rays.delta, rays.offsets);
        weights.assign(c.weights.data().begin(), c.weights.data().end());
    }
    return importance_sample(rays, weights, opts.fine_samples, opts.seed, opts.importance_floor);
}

RenderOutput render_rect(const RadianceField& field, const CameraPose& cam, std::size_t u0, std::size_t v0,
                         std::size_t width, std::size_t height, const RenderOptions& opts) {
    return render_planned(field, plan_rect(field, cam, u0, v0, width, height, opts), width, opts.background);
}

}  // namespace

RenderOutput render(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                    const RenderOptions& opts) {
    patch.validate();
    if (patch.full != cam.image_size) {
        throw std::invalid_argument("render: patch frame " + std::to_string(patch.full) +
                                    " differs from camera image size " + std::to_string(cam.image_size));
    }
    if (opts.coarse_samples == 0) throw std::invalid_argument("render: coarse_samples must be >= 1");
    const std::size_t p = patch.size;
    if (ad::GradMode::enabled() || opts.chunk_rows == 0 || opts.chunk_rows >= p) {
        return render_rect(field, cam, patch.u0, patch.v0, p, p, opts);
    }
    RenderOutput out;
    std::vector<double> image;
    image.reserve(p * p * 3);
    for (std::size_t row = 0; row < p; row += opts.chunk_rows) {
        const std::size_t rows = std::min(opts.chunk_rows, p - row);
        auto part = render_rect(field, cam, patch.u0, patch.v0 + row, p, rows, opts);
        image.insert(image.end(), part.image.data().begin(), part.image.data().end());
        out.depth.insert(out.depth.end(), part.depth.begin(), part.depth.end());
        out.opacity.insert(out.opacity.end(), part.opacity.begin(), part.opacity.end());
    }
    out.image = ad::Tensor::from_vector({p, p, 3}, std::move(image));
    return out;
}

RayBatch plan_samples(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts) {
    patch.validate();
    if (patch.full != cam.image_size) throw std::invalid_argument("plan_samples: patch frame differs from camera");
    return plan_rect(field, cam, patch.u0, patch.v0, patch.size, patch.size, opts);
}

ad::Tensor render_patch(const StudentField& student, const CameraPose& cam, const PatchSpec& patch,
                        const RenderOptions& opts) {
    const PreparedStudent field(student);
    return render(field, cam, patch, opts).image;
}

DepthMap render_depth(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts) {
    ad::NoGradGuard guard;
    const auto r = render(field, cam, patch, opts);
    DepthMap d;
    d.width = patch.size;
    d.depth = r.depth;
    d.valid.resize(r.opacity.size());
    for (std::size_t i = 0; i < r.opacity.size(); ++i) d.valid[i] = r.opacity[i] >= 0.01 ? 1 : 0;
    return d;
}

DepthMap render_depth(const StudentField& student, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts) {
    ad::NoGradGuard guard;
    const PreparedStudent field(student);
    return render_depth(field, cam, patch, opts);
}

}  // namespace mimic
