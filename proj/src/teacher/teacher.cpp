// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/teacher.hpp"

#include "mimic/parallel.hpp"
#include "mimic/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace mimic {

namespace {

// Compactly supported step: 0 below -1, 1 above 1, C1 smoothstep in between.
double ramp(double x) {
    const double t = std::clamp(0.5 * (x + 1.0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double norm(const Vec3& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); }

// Fixed texture directions and phases, one per channel.
constexpr double kDir[3][3] = {{0.8, 0.6, 0.0}, {0.0, 0.6, -0.8}, {-0.6, 0.0, 0.8}};
constexpr double kPhase[3] = {0.3, 1.7, 4.1};

double wave(const Vec3& x, int k, double freq) {
    return std::sin(freq * (kDir[k][0] * x[0] + kDir[k][1] * x[1] + kDir[k][2] * x[2]) + kPhase[k]);
}

Vec3 blob_centre(int i) { return {i == 0 ? -0.35 : 0.35, i == 0 ? 0.1 : -0.1, 0.0}; }

// Separable Gaussian blur of a single-channel H x W field, clamp-to-edge.
std::vector<double> blur(const std::vector<double>& f, std::size_t h, std::size_t w, double sigma) {
    if (!(sigma > 0.0)) return f;
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * rad + 1);
    double total = 0.0;
    for (int i = -rad; i <= rad; ++i) total += k[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= total;
    auto clampi = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(i, 0, long(n) - 1)); };
    std::vector<double> tmp(h * w, 0.0), out(h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (int i = -rad; i <= rad; ++i) tmp[y * w + x] += k[i + rad] * f[y * w + clampi(long(x) + i, w)];
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (int i = -rad; i <= rad; ++i) out[y * w + x] += k[i + rad] * tmp[clampi(long(y) + i, h) * w + x];
    return out;
}

double bilinear(const std::vector<double>& img, std::size_t h, std::size_t w, double x, double y, int ch) {
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double a = x - double(x0), b = y - double(y0);
    auto at = [&](std::size_t yy, std::size_t xx) { return img[(yy * w + xx) * 3 + ch]; };
    return (1 - a) * (1 - b) * at(y0, x0) + a * (1 - b) * at(y0, x1) + (1 - a) * b * at(y1, x0) + a * b * at(y1, x1);
}

}  // namespace

SceneKind parse_scene_kind(const std::string& name) {
    if (name == "sphere") return SceneKind::kSphere;
    if (name == "two_blob") return SceneKind::kTwoBlob;
    if (name == "striped_box") return SceneKind::kStripedBox;
    throw std::invalid_argument("unknown scene '" + name + "' (expected sphere, two_blob or striped_box)");
}

std::string scene_kind_name(SceneKind kind) {
    switch (kind) {
        case SceneKind::kSphere: return "sphere";
        case SceneKind::kTwoBlob: return "two_blob";
        case SceneKind::kStripedBox: return "striped_box";
    }
    return "?";
}

void OracleScene::validate() const {
    if (!(radius > 0.0 && radius < 1.0)) throw std::invalid_argument("scene: radius must lie in (0, 1)");
    if (!(sigma_max > 0.0 && std::isfinite(sigma_max))) throw std::invalid_argument("scene: sigma_max must be > 0");
    if (!(edge_width > 0.0)) throw std::invalid_argument("scene: edge_width must be > 0");
    if (!std::isfinite(texture_frequency)) throw std::invalid_argument("scene: texture_frequency must be finite");
}

double OracleScene::density(const Vec3& x) const {
    switch (kind) {
        case SceneKind::kSphere: return sigma_max * ramp((radius - norm(x)) / edge_width);
        case SceneKind::kTwoBlob: {
            double s = 0.0;
            for (int i = 0; i < 2; ++i) {
                const auto c = blob_centre(i);
                const double d = norm({x[0] - c[0], x[1] - c[1], x[2] - c[2]});
                s = std::max(s, ramp((0.6 * radius - d) / edge_width));
            }
            return sigma_max * s;
        }
        case SceneKind::kStripedBox: {
            const double d = std::max({std::fabs(x[0]), std::fabs(x[1]), std::fabs(x[2])}) - radius;
            return sigma_max * ramp(-d / edge_width);
        }
    }
    return 0.0;
}

Vec3 OracleScene::albedo(const Vec3& x) const {
    Vec3 c{};
    switch (kind) {
        case SceneKind::kSphere:
            for (int k = 0; k < 3; ++k) c[k] = 0.5 + 0.3 * wave(x, k, texture_frequency);
            break;
        case SceneKind::kTwoBlob: {
            // Warm-textured left blob, cool-textured right blob, blended by proximity.
            const auto a = blob_centre(0), b = blob_centre(1);
            const double da = norm({x[0] - a[0], x[1] - a[1], x[2] - a[2]});
            const double db = norm({x[0] - b[0], x[1] - b[1], x[2] - b[2]});
            const double m = logistic((db - da) / 0.05);
            const Vec3 warm{0.75, 0.45, 0.25}, cool{0.25, 0.45, 0.75};
            for (int k = 0; k < 3; ++k) {
                c[k] = m * warm[k] + (1 - m) * cool[k] + 0.05 * wave(x, k, texture_frequency);
            }
            break;
        }
        case SceneKind::kStripedBox: {
            const double s = std::tanh(4.0 * std::sin(texture_frequency * M_PI * x[0] / 2.0));
            c = {0.5 + 0.3 * s, 0.5 - 0.3 * s, 0.5 + 0.3 * std::tanh(4.0 * std::sin(texture_frequency * x[1]))};
            break;
        }
    }
    for (auto& v : c) v = std::clamp(v, 0.2, 0.8);
    return c;
}

FieldSample OracleScene::query(const ad::Tensor& points) const {
    if (points.dim() != 2 || points.size(1) != 3) {
        throw std::invalid_argument("scene query: expected N x 3 points, got " + ad::to_string(points.shape()));
    }
    const std::size_t n = points.size(0);
    const auto p = points.data();
    std::vector<double> color(n * 3), sigma(n);
    parallel::parallel_for(n, 1024, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 x{p[3 * i], p[3 * i + 1], p[3 * i + 2]};
            sigma[i] = density(x);
            const auto c = albedo(x);
            for (int k = 0; k < 3; ++k) color[3 * i + k] = c[k];
        }
    });
    return {ad::Tensor::from_vector({n, 3}, std::move(color)), ad::Tensor::from_vector({n}, std::move(sigma))};
}

OracleImage oracle_render(const OracleScene& scene, const CameraPose& cam, const OracleOptions& opts) {
    scene.validate();
    if (opts.samples == 0) throw std::invalid_argument("oracle_render: samples must be >= 1");
    const std::size_t f = cam.image_size;
    const auto rays = generate_rays(cam, PatchSpec::whole(f));
    const std::size_t n = rays.size();
    std::vector<double> image(n * 3);
    OracleImage out;
    out.alpha.assign(n, 0.0);
    parallel::parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            double trans = 1.0;
            Vec3 acc{0, 0, 0};
            if (rays.hit[r]) {
                const double dt = (rays.far[r] - rays.near[r]) / double(opts.samples);
                for (std::size_t i = 0; i < opts.samples; ++i) {
                    const double t = rays.near[r] + (double(i) + 0.5) * dt;
                    Vec3 x;
                    for (int k = 0; k < 3; ++k) x[k] = rays.origins[3 * r + k] + t * rays.directions[3 * r + k];
                    const double sigma = scene.density(x);
                    if (sigma <= 0.0) continue;
                    const double a = 1.0 - std::exp(-sigma * dt);
                    const auto c = scene.albedo(x);
                    for (int k = 0; k < 3; ++k) acc[k] += trans * a * c[k];
                    trans *= 1.0 - a;
                }
            }
            for (int k = 0; k < 3; ++k) image[3 * r + k] = acc[k] + trans * opts.background[k];
            out.alpha[r] = 1.0 - trans;
        }
    });
    out.image = ad::Tensor::from_vector({f, f, 3}, std::move(image));
    return out;
}

InconsistencyMode parse_inconsistency_mode(const std::string& name) {
    if (name == "none") return InconsistencyMode::kNone;
    if (name == "texture_jitter") return InconsistencyMode::kTextureJitter;
    if (name == "warp") return InconsistencyMode::kWarp;
    throw std::invalid_argument("unknown inconsistency mode '" + name + "' (expected none, texture_jitter or warp)");
}

std::string inconsistency_mode_name(InconsistencyMode mode) {
    switch (mode) {
        case InconsistencyMode::kNone: return "none";
        case InconsistencyMode::kTextureJitter: return "texture_jitter";
        case InconsistencyMode::kWarp: return "warp";
    }
    return "?";
}

void InconsistencySpec::validate() const {
    if (!(amplitude >= 0.0 && std::isfinite(amplitude))) throw std::invalid_argument("inconsistency: amplitude must be >= 0");
    if (!(blur_sigma >= 0.0)) throw std::invalid_argument("inconsistency: blur_sigma must be >= 0");
}

std::uint64_t view_seed(const CameraPose& cam, std::uint64_t seed) {
    std::uint64_t h = derive_seed(seed, {0x7465616368ULL, cam.image_size});
    for (double v : cam.rotation) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
    for (double v : cam.translation) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
    return mix64(h ^ std::bit_cast<std::uint64_t>(cam.focal));
}

ad::Tensor teacher_image(const OracleScene& scene, const CameraPose& cam, const InconsistencySpec& inc,
                         const OracleOptions& opts) {
    inc.validate();
    auto clean = oracle_render(scene, cam, opts);
    if (inc.mode == InconsistencyMode::kNone || inc.amplitude == 0.0) return clean.image;

    const std::size_t f = cam.image_size, n = f * f;
    const auto src = clean.image.data();
    std::vector<double> out(src.begin(), src.end());
    std::mt19937_64 rng(view_seed(cam, inc.seed));

    if (inc.mode == InconsistencyMode::kTextureJitter) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int ch = 0; ch < 3; ++ch) {
            std::vector<double> noise(n);
            for (auto& v : noise) v = gauss(rng);
            noise = blur(noise, f, f, inc.blur_sigma);
            double mean = 0.0, var = 0.0;
            for (double v : noise) mean += v;
            mean /= double(n);
            for (double v : noise) var += (v - mean) * (v - mean);
            const double scale = inc.amplitude / std::sqrt(var / double(n));
            for (std::size_t i = 0; i < n; ++i) out[3 * i + ch] += clean.alpha[i] * scale * (noise[i] - mean);
        }
    } else {
        // Four random low-frequency sinusoids per displacement component.
        std::uniform_real_distribution<double> freq(0.5, 2.0), phase(0.0, 2.0 * M_PI), amp(-1.0, 1.0);
        std::vector<double> dx(n, 0.0), dy(n, 0.0);
        for (auto* d : {&dx, &dy}) {
            for (int k = 0; k < 4; ++k) {
                const double fu = freq(rng), fv = freq(rng), ph = phase(rng), a = amp(rng);
                for (std::size_t v = 0; v < f; ++v)
                    for (std::size_t u = 0; u < f; ++u)
                        (*d)[v * f + u] += a * std::sin(2.0 * M_PI * (fu * double(u) + fv * double(v)) / double(f) + ph);
            }
        }
        double peak = 0.0;
        for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::hypot(dx[i], dy[i]));
        const double scale = peak > 0.0 ? inc.amplitude * double(f) / peak : 0.0;
        const std::vector<double> img(src.begin(), src.end());
        for (std::size_t v = 0; v < f; ++v) {
            for (std::size_t u = 0; u < f; ++u) {
                const std::size_t i = v * f + u;
                for (int ch = 0; ch < 3; ++ch) {
                    const double warped = bilinear(img, f, f, double(u) + scale * dx[i], double(v) + scale * dy[i], ch);
                    out[3 * i + ch] += clean.alpha[i] * (warped - img[3 * i + ch]);
                }
            }
        }
    }
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return ad::Tensor::from_vector({f, f, 3}, std::move(out));
}

ad::Tensor crop(const ad::Tensor& image, const PatchSpec& patch) {
    patch.validate();
    if (image.shape() != ad::Shape{patch.full, patch.full, 3}) {
        throw std::invalid_argument("crop: image " + ad::to_string(image.shape()) + " is not the patch frame");
    }
    const auto src = image.data();
    std::vector<double> out(patch.size * patch.size * 3);
    for (std::size_t v = 0; v < patch.size; ++v) {
        const auto* row = src.data() + ((patch.v0 + v) * patch.full + patch.u0) * 3;
        std::copy(row, row + patch.size * 3, out.begin() + v * patch.size * 3);
    }
    return ad::Tensor::from_vector({patch.size, patch.size, 3}, std::move(out));
}

}  // namespace mimic
