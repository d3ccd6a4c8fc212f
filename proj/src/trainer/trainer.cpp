// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/trainer.hpp"

#include "mimic/backward.hpp"
#include "mimic/evalkit.hpp"
#include "mimic/io.hpp"
#include "mimic/ops.hpp"
#include "mimic/rng.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace mimic {

namespace {

constexpr std::uint64_t kViewStream = 11;
constexpr std::uint64_t kRealStream = 12;
constexpr std::uint64_t kDiscInitStream = 13;
constexpr std::uint64_t kRenderStream = 14;
constexpr std::uint64_t kStageAStream = 15;

std::string numbered(const std::string& dir, const char* stem, std::size_t step, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06zu.%s", stem, step, ext);
    return dir + "/" + buf;
}

void require_finite(double v, std::size_t step, const char* term) {
    if (!std::isfinite(v)) {
        throw std::runtime_error("fit: non-finite " + std::string(term) + " loss at step " + std::to_string(step));
    }
}

std::string fmt_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::vector<ad::Tensor> gradients_for(const ad::Gradients& g, const std::vector<ad::Tensor>& params) {
    std::vector<ad::Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(g.of(p));
    return out;
}

ad::Tensor frozen(const ad::Tensor& t) { return t.clone(); }

}  // namespace

void FitConfig::validate() const {
    if (patch_size == 0 || patch_size > image_size) throw std::invalid_argument("fit: need 1 <= patch_size <= image_size");
    if (batch == 0) throw std::invalid_argument("fit: batch must be >= 1");
    if (!(orbit_radius > std::sqrt(3.0))) throw std::invalid_argument("fit: orbit radius must place cameras outside the cube");
    if (!(yaw_range >= 0.0) || !(pitch_range >= 0.0 && pitch_range < 1.5)) {
        throw std::invalid_argument("fit: yaw/pitch ranges must be >= 0 and pitch below pi/2");
    }
    for (const auto* h : {&student_opt, &disc_opt}) {
        if (!(h->lr > 0.0) || !(h->beta1 >= 0.0 && h->beta1 < 1.0) || !(h->beta2 >= 0.0 && h->beta2 < 1.0) ||
            !(h->eps > 0.0)) {
            throw std::invalid_argument("fit: invalid optimiser hyper-parameters");
        }
    }
    loss.validate();
    if (!loss.imitation && !loss.adv3d) throw std::invalid_argument("fit: enable at least one loss term");
    if (loss.adv3d && patch_size % 8 != 0) throw std::invalid_argument("fit: adversarial patches need P divisible by 8");
    if (stage_a_steps > 0 && stage_a_resolution < 2) throw std::invalid_argument("fit: stage_a_resolution must be >= 2");
}

CameraPose sample_view(const FitConfig& config, std::mt19937_64& rng) {
    const double yaw = (2.0 * uniform01(rng) - 1.0) * config.yaw_range;
    const double pitch = (2.0 * uniform01(rng) - 1.0) * config.pitch_range;
    return CameraPose::orbit(config.orbit_radius, yaw, pitch, config.fov_degrees, config.image_size);
}

PatchSpec sample_patch(std::size_t full, std::size_t patch, std::mt19937_64& rng) {
    if (patch == 0 || patch > full) throw std::invalid_argument("sample_patch: need 1 <= P <= F");
    // Centre pixel uniform over the frame; top-left = centre - P/2, clamped.
    const auto cu = static_cast<std::size_t>(uniform01(rng) * double(full));
    const auto cv = static_cast<std::size_t>(uniform01(rng) * double(full));
    auto origin = [&](std::size_t c) { return std::min(c > patch / 2 ? c - patch / 2 : 0, full - patch); };
    return {origin(cu), origin(cv), patch, full};
}

void adam_step(std::span<ad::Tensor> params, std::span<const ad::Tensor> grads, AdamState& state,
               const AdamHyper& hyper) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient counts differ");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.beta1, double(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, double(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto x = params[k].mutable_data();
        const auto g = grads[k].data();
        if (g.size() != x.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            x[i] -= hyper.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.eps);
        }
    }
}

std::vector<CameraPose> held_out_views(const FitConfig& config, std::size_t count) {
    std::vector<CameraPose> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double s = (2.0 * double(i) + 1.0) / double(2 * count) * 2.0 - 1.0;  // cell midpoints in (-1, 1)
        out.push_back(CameraPose::orbit(config.orbit_radius, 0.9 * s * config.yaw_range, 0.37 * config.pitch_range,
                                        config.fov_degrees, config.image_size));
    }
    return out;
}

FitResult fit_imitation(const OracleScene& scene, const InconsistencySpec& inc, const StudentField& student,
                        const FitConfig& config) {
    config.validate();
    scene.validate();
    inc.validate();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    if (!config.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(config.out_dir, ec);
        if (ec) throw std::runtime_error("cannot create output directory '" + config.out_dir + "': " + ec.message());
    }

    FitResult res;
    res.student = student.clone();
    auto& s = res.student;
    auto params = s.parameters();
    auto view_rng = make_rng(config.seed, {kViewStream});
    auto real_rng = make_rng(config.seed, {kRealStream});
    if (config.loss.adv3d) {
        auto init_rng = make_rng(config.seed, {kDiscInitStream});
        res.discriminator = PatchDiscriminator::init(config.patch_size, init_rng, config.disc_width, config.disc_hidden);
    }

    // Stage A: coarse planes and decoder only, whole low-resolution frames.
    if (config.stage_a_steps > 0) {
        std::vector<ad::Tensor> coarse_params(s.coarse.planes.begin(), s.coarse.planes.end());
        for (const auto& p : s.decoder.parameters()) coarse_params.push_back(p);
        AdamState opt;
        auto rng = make_rng(config.seed, {kStageAStream});
        FitConfig low = config;
        low.image_size = config.stage_a_resolution;
        for (std::size_t step = 0; step < config.stage_a_steps; ++step) {
            const auto cam = sample_view(low, rng);
            const auto target = teacher_image(scene, cam, inc, config.teacher);
            RenderOptions ro = config.render;
            ro.seed = derive_seed(config.seed, {kStageAStream, step});
            const PreparedStudent field(s, true);
            const auto image = render(field, cam, PatchSpec::whole(low.image_size), ro).image;
            const auto loss = perceptual_proxy(image, target, config.loss);
            require_finite(loss.item(), step, "stage-A imitation");
            const auto g = ad::backward(loss);
            const auto grads = gradients_for(g, coarse_params);
            adam_step(coarse_params, grads, opt, config.student_opt);
        }
    }

    AdamState opt, disc_opt;
    std::vector<ad::Tensor> disc_params;
    if (res.discriminator) disc_params = res.discriminator->parameters();
    for (std::size_t step = 0; step < config.steps; ++step) {
        MetricsRow row;
        row.step = step;
        ad::Tensor imit, adv;
        std::vector<ad::Tensor> fakes;
        double psnr_sum = 0.0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const auto cam = sample_view(config, view_rng);
            const auto patch = sample_patch(config.image_size, config.patch_size, view_rng);
            // The teacher image is a constant: no gradient can reach the teacher.
            const auto target = crop(teacher_image(scene, cam, inc, config.teacher), patch);
            RenderOptions ro = config.render;
            ro.seed = derive_seed(config.seed, {kRenderStream, step, b});
            const auto fake = render_patch(s, cam, patch, ro);
            psnr_sum += psnr(frozen(fake), target);
            if (config.loss.imitation) {
                const auto l = perceptual_proxy(fake, target, config.loss);
                imit = imit.defined() ? ad::add(imit, l) : l;
            }
            if (config.loss.adv3d) {
                const auto l = nonsat_gen_loss(res.discriminator->score(fake));
                adv = adv.defined() ? ad::add(adv, l) : l;
            }
            fakes.push_back(fake);
        }
        const double inv = 1.0 / double(config.batch);
        if (imit.defined()) imit = ad::mul_scalar(imit, inv);
        if (adv.defined()) adv = ad::mul_scalar(adv, inv);
        const auto total = total_loss({imit, adv}, config.loss);
        row.loss_imit = imit.defined() ? imit.item() : 0.0;
        row.loss_adv = adv.defined() ? adv.item() : 0.0;
        row.loss_total = total.item();
        require_finite(row.loss_imit, step, "imitation");
        require_finite(row.loss_adv, step, "adversarial");
        require_finite(row.loss_total, step, "total");
        {
            const auto g = ad::backward(total);
            const auto grads = gradients_for(g, params);
            adam_step(params, grads, opt, config.student_opt);
        }

        // Discriminator on even steps, against fresh clean renders from independent views.
        if (res.discriminator && step % 2 == 0) {
            const auto& disc = *res.discriminator;
            ad::Tensor dl, r1;
            for (const auto& fake : fakes) {
                const auto cam = sample_view(config, real_rng);
                const auto patch = sample_patch(config.image_size, config.patch_size, real_rng);
                const auto real = crop(oracle_render(scene, cam, config.teacher).image, patch);
                const auto l = disc_loss(disc.score(frozen(fake)), disc.score(real));
                const auto r = r1_penalty(disc, real, config.loss.lambda_r1);
                dl = dl.defined() ? ad::add(dl, l) : l;
                r1 = r1.defined() ? ad::add(r1, r) : r;
            }
            const auto dtotal = ad::mul_scalar(ad::add(dl, r1), inv);
            row.loss_r1 = r1.item() * inv;
            require_finite(dtotal.item(), step, "discriminator");
            const auto g = ad::backward(dtotal);
            const auto grads = gradients_for(g, disc_params);
            adam_step(disc_params, grads, disc_opt, config.disc_opt);
        }
        row.psnr_preview = psnr_sum * inv;
        row.wallclock_s = elapsed();
        res.log.push_back(row);
        if (config.on_step) config.on_step(row);

        if (!config.out_dir.empty()) {
            const std::size_t done = step + 1;
            if (config.preview_every > 0 && done % config.preview_every == 0) {
                ad::NoGradGuard guard;
                const auto cam = held_out_views(config, 1).front();
                RenderOptions ro = config.render;
                ro.chunk_rows = ro.chunk_rows ? ro.chunk_rows : 16;
                const PreparedStudent field(s);
                write_png(numbered(config.out_dir, "preview", done, "png"),
                          render(field, cam, PatchSpec::whole(config.image_size), ro).image);
            }
            if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
                save_checkpoint(numbered(config.out_dir, "checkpoint", done, "tpl"), s);
            }
        }
    }
    if (!config.out_dir.empty()) {
        save_checkpoint(config.out_dir + "/student.tpl", s);
        write_metrics_csv(config.out_dir + "/metrics.csv", res.log);
    }
    return res;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "step,loss_total,loss_imit,loss_adv,loss_r1,psnr_preview,wallclock_s\n";
    for (const auto& r : log) {
        out << r.step << ',' << fmt_double(r.loss_total) << ',' << fmt_double(r.loss_imit) << ','
            << fmt_double(r.loss_adv) << ',' << fmt_double(r.loss_r1) << ',' << fmt_double(r.psnr_preview) << ','
            << fmt_double(r.wallclock_s) << '\n';
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace mimic
