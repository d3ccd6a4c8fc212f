// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/evalkit.hpp"

#include "mc_tables.hpp"
#include "mimic/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace mimic {

namespace {

void require_image(const ad::Tensor& t, const char* what) {
    if (t.dim() != 3 || t.size(2) != 3) {
        throw std::invalid_argument(std::string(what) + ": expected H x W x 3, got " + ad::to_string(t.shape()));
    }
}

void require_same(const ad::Tensor& a, const ad::Tensor& b, const char* what) {
    require_image(a, what);
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shapes " + ad::to_string(a.shape()) + " and " +
                                    ad::to_string(b.shape()) + " differ");
    }
}

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

void CameraPath::validate() const {
    if (poses.size() < 2) throw std::invalid_argument("camera path: need at least 2 views");
    if (!labels.empty() && labels.size() != poses.size()) throw std::invalid_argument("camera path: label count");
    for (const auto& p : poses) p.validate();
}

CameraPath yaw_sweep(std::size_t views, double yaw_range, double pitch, double radius, double fov_degrees,
                     std::size_t image_size) {
    if (views < 2) throw std::invalid_argument("yaw_sweep: need at least 2 views");
    CameraPath path;
    for (std::size_t v = 0; v < views; ++v) {
        const double yaw = -yaw_range + 2.0 * yaw_range * double(v) / double(views - 1);
        path.poses.push_back(CameraPose::orbit(radius, yaw, pitch, fov_degrees, image_size));
        path.labels.push_back("yaw=" + std::to_string(yaw));
    }
    return path;
}

ad::Tensor spatiotemporal_texture(std::span<const ad::Tensor> images, std::array<double, 2> p0,
                                  std::array<double, 2> p1, std::size_t samples) {
    if (images.size() < 2) throw std::invalid_argument("spatiotemporal_texture: need at least 2 images");
    if (samples < 2) throw std::invalid_argument("spatiotemporal_texture: need at least 2 samples");
    for (const auto& im : images) require_same(images[0], im, "spatiotemporal_texture");
    const std::size_t h = images[0].size(0), w = images[0].size(1);
    for (const auto& p : {p0, p1}) {
        if (!(p[0] >= 0.0 && p[0] <= double(w - 1) && p[1] >= 0.0 && p[1] <= double(h - 1))) {
            throw std::invalid_argument("spatiotemporal_texture: segment endpoint outside the frame");
        }
    }
    std::vector<double> out(images.size() * samples * 3);
    for (std::size_t v = 0; v < images.size(); ++v) {
        const auto img = images[v].data();
        for (std::size_t m = 0; m < samples; ++m) {
            const double s = double(m) / double(samples - 1);
            const double x = p0[0] + s * (p1[0] - p0[0]), y = p0[1] + s * (p1[1] - p0[1]);
            const auto x0 = std::min(static_cast<std::size_t>(x), w - 1), y0 = std::min(static_cast<std::size_t>(y), h - 1);
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double a = x - double(x0), b = y - double(y0);
            for (int c = 0; c < 3; ++c) {
                auto at = [&](std::size_t yy, std::size_t xx) { return img[(yy * w + xx) * 3 + c]; };
                out[(v * samples + m) * 3 + c] =
                    (1 - a) * (1 - b) * at(y0, x0) + a * (1 - b) * at(y0, x1) + (1 - a) * b * at(y1, x0) + a * b * at(y1, x1);
            }
        }
    }
    return ad::Tensor::from_vector({images.size(), samples, 3}, std::move(out));
}

double consistency_score(const ad::Tensor& strip) {
    if (strip.dim() != 3 || strip.size(2) != 3 || strip.size(0) < 2) {
        throw std::invalid_argument("consistency_score: expected V x M x 3 with V >= 2, got " + ad::to_string(strip.shape()));
    }
    const std::size_t row = strip.size(1) * 3, views = strip.size(0);
    const auto s = strip.data();
    double total = 0.0;
    for (std::size_t v = 0; v + 1 < views; ++v) {
        for (std::size_t i = 0; i < row; ++i) {
            const double d = s[(v + 1) * row + i] - s[v * row + i];
            total += d * d;
        }
    }
    return total / double((views - 1) * row);
}

double psnr(const ad::Tensor& a, const ad::Tensor& b) {
    require_same(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= double(a.numel());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const ad::Tensor& a, const ad::Tensor& b) {
    require_same(a, b, "ssim");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::size_t h = a.size(0), w = a.size(1);
    if (h < kWin || w < kWin) throw std::invalid_argument("ssim: images must be at least 11 x 11");
    double g[kWin], total = 0.0;
    for (int i = 0; i < kWin; ++i) total += g[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (kSigma * kSigma));
    for (double& v : g) v /= total;
    const auto pa = a.data(), pb = b.data();
    double sum = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y + kWin <= h; ++y) {
            for (std::size_t x = 0; x + kWin <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < kWin; ++i) {
                    for (int j = 0; j < kWin; ++j) {
                        const double wt = g[i] * g[j];
                        const double va = pa[((y + i) * w + x + j) * 3 + c], vb = pb[((y + i) * w + x + j) * 3 + c];
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return sum / double(count);
}

DensityGrid density_grid(const RadianceField& field, std::size_t resolution) {
    if (resolution < 2) throw std::invalid_argument("density_grid: resolution must be >= 2");
    ad::NoGradGuard guard;
    DensityGrid grid;
    grid.resolution = resolution;
    grid.values.resize(resolution * resolution * resolution);
    const std::size_t slice = resolution * resolution;
    std::vector<double> pts(slice * 3);
    for (std::size_t z = 0; z < resolution; ++z) {
        for (std::size_t y = 0; y < resolution; ++y) {
            for (std::size_t x = 0; x < resolution; ++x) {
                const std::size_t i = y * resolution + x;
                pts[3 * i] = grid.centre(x);
                pts[3 * i + 1] = grid.centre(y);
                pts[3 * i + 2] = grid.centre(z);
            }
        }
        const auto q = field.query(ad::Tensor::from_vector({slice, 3}, pts));
        std::copy(q.sigma.data().begin(), q.sigma.data().end(), grid.values.begin() + z * slice);
    }
    return grid;
}

DensityGrid density_grid(const StudentField& student, std::size_t resolution) {
    if (resolution < 2) throw std::invalid_argument("density_grid: resolution must be >= 2");
    ad::NoGradGuard guard;
    const PreparedStudent field(student);
    return density_grid(field, resolution);
}

void TriMesh::validate() const {
    for (const auto& t : triangles) {
        for (auto i : t) {
            if (i >= vertices.size()) throw std::invalid_argument("mesh: triangle index out of range");
        }
    }
}

TriMesh marching_cubes(const DensityGrid& grid, double iso) {
    const std::size_t g = grid.resolution;
    if (g < 2 || grid.values.size() != g * g * g) throw std::invalid_argument("marching_cubes: grid must be G^3 with G >= 2");
    if (!std::isfinite(iso)) throw std::invalid_argument("marching_cubes: iso must be finite");
    TriMesh mesh;
    // A cell edge is keyed by its lower grid point and axis, so neighbours share it.
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    auto vertex_on = [&](std::size_t x, std::size_t y, std::size_t z, int e) {
        const int* ca = kCorner[kEdge[e][0]];
        const int* cb = kCorner[kEdge[e][1]];
        const std::size_t ax = x + ca[0], ay = y + ca[1], az = z + ca[2];
        const std::size_t bx = x + cb[0], by = y + cb[1], bz = z + cb[2];
        const std::size_t lx = std::min(ax, bx), ly = std::min(ay, by), lz = std::min(az, bz);
        const int axis = ax != bx ? 0 : (ay != by ? 1 : 2);
        const std::uint64_t key = ((std::uint64_t(lz) * g + ly) * g + lx) * 3 + std::uint64_t(axis);
        const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
        if (inserted) {
            const double va = grid.at(ax, ay, az), vb = grid.at(bx, by, bz);
            const double t = (iso - va) / (vb - va);
            const Vec3 pa{grid.centre(ax), grid.centre(ay), grid.centre(az)};
            const Vec3 pb{grid.centre(bx), grid.centre(by), grid.centre(bz)};
            mesh.vertices.push_back({pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]), pa[2] + t * (pb[2] - pa[2])});
        }
        return it->second;
    };
    for (std::size_t z = 0; z + 1 < g; ++z) {
        for (std::size_t y = 0; y + 1 < g; ++y) {
            for (std::size_t x = 0; x + 1 < g; ++x) {
                int index = 0;
                for (int c = 0; c < 8; ++c) {
                    if (grid.at(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]) < iso) index |= 1 << c;
                }
                if (mc::kEdgeTable[index] == 0) continue;
                for (int k = 0; mc::kTriTable[index][k] != -1; k += 3) {
                    const std::array<std::uint32_t, 3> tri{vertex_on(x, y, z, mc::kTriTable[index][k]),
                                                           vertex_on(x, y, z, mc::kTriTable[index][k + 1]),
                                                           vertex_on(x, y, z, mc::kTriTable[index][k + 2])};
                    const auto &p = mesh.vertices[tri[0]], &q = mesh.vertices[tri[1]], &r = mesh.vertices[tri[2]];
                    const Vec3 u{q[0] - p[0], q[1] - p[1], q[2] - p[2]}, v{r[0] - p[0], r[1] - p[1], r[2] - p[2]};
                    const double area = 0.5 * std::hypot(u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                                                         u[0] * v[1] - u[1] * v[0]);
                    if (area > 1e-12) mesh.triangles.push_back(tri);
                }
            }
        }
    }
    return mesh;
}

bool is_watertight(const TriMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
    for (const auto& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            const auto a = t[k], b = t[(k + 1) % 3];
            ++uses[{std::min(a, b), std::max(a, b)}];
        }
    }
    return std::all_of(uses.begin(), uses.end(), [](const auto& kv) { return kv.second == 2; });
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    mesh.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.precision(9);
    for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace mimic
