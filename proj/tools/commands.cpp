// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include "mimic/evalkit.hpp"
#include "mimic/gradcheck.hpp"
#include "mimic/io.hpp"
#include "mimic/parallel.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace mimic::cli {

namespace {

double to_radians(double degrees) { return degrees * M_PI / 180.0; }

std::string num(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

ad::DType checkpoint_dtype(const RunConfig& c) {
    const auto& s = c.get("checkpoint.dtype");
    if (s == "f64") return ad::DType::kFloat64;
    if (s == "f32") return ad::DType::kFloat32;
    throw ConfigError("key 'checkpoint.dtype': expected f64 or f32, got '" + s + "'");
}

// Index width for numbered files: at least three digits, enough for count - 1.
std::string numbered(std::size_t index, std::size_t count) {
    std::size_t digits = 1;
    for (std::size_t n = count > 0 ? count - 1 : 0; n >= 10; n /= 10) ++digits;
    std::ostringstream s;
    s << std::setw(int(std::max<std::size_t>(3, digits))) << std::setfill('0') << index;
    return s.str();
}

ad::Tensor render_view(const StudentField& student, const CameraPose& cam, const RenderOptions& opts) {
    ad::NoGradGuard no_grad;
    const PreparedStudent field(student);
    return render(field, cam, PatchSpec::whole(cam.image_size), opts).image;
}

}  // namespace

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream&) {
    config.require("out.dir");
    auto fit = fit_from(config);
    const auto scene = scene_from(config);
    const auto inc = inconsistency_from(config);
    const auto dtype = checkpoint_dtype(config);
    const auto student = StudentField::init(student_from(config), config.get_u64("student.init_seed"));
    make_dir(fit.out_dir);
    {
        std::ofstream dump(fit.out_dir + "/config.txt");
        dump << config.dump();
    }
    const std::size_t every = std::max<std::size_t>(1, fit.steps / 20);
    fit.on_step = [&](const MetricsRow& row) {
        if (row.step % every == 0 || row.step + 1 == fit.steps) {
            out << "step " << row.step << "  loss " << num(row.loss_total) << "  psnr " << std::fixed
                << std::setprecision(2) << row.psnr_preview << std::defaultfloat << '\n';
        }
    };
    const auto result = fit_imitation(scene, inc, student, fit);
    if (dtype != ad::DType::kFloat64) save_checkpoint(fit.out_dir + "/student.tpl", result.student, dtype);
    out << "wrote " << fit.out_dir << "/student.tpl and metrics.csv (" << result.log.size() << " steps)\n";
    return kExitOk;
}

int cmd_render(const RunConfig& config, std::ostream& out, std::ostream&) {
    config.require("checkpoint");
    config.require("out.dir");
    const auto& format = config.get("view.format");
    const bool png = format == "png" || format == "both", pfm = format == "pfm" || format == "both";
    if (!png && !pfm) throw ConfigError("key 'view.format': expected png, pfm or both, got '" + format + "'");
    const std::size_t count = config.get_size("view.count"), res = config.get_size("view.resolution");
    if (count == 0 || res == 0) throw ConfigError("keys 'view.count' and 'view.resolution' must be >= 1");
    const double radius = config.get_double("fit.orbit_radius"), fov = config.get_double("fit.fov_degrees");
    const double pitch = to_radians(config.get_double("view.pitch_deg"));

    const auto student = load_checkpoint(config.get("checkpoint"));
    const auto opts = render_options_from(config);
    std::vector<CameraPose> poses;
    if (count == 1) {
        poses.push_back(CameraPose::orbit(radius, to_radians(config.get_double("view.yaw_deg")), pitch, fov, res));
    } else {
        poses = yaw_sweep(count, to_radians(config.get_double("view.yaw_range_deg")), pitch, radius, fov, res).poses;
    }
    const auto dir = config.get("out.dir");
    make_dir(dir);
    for (std::size_t v = 0; v < poses.size(); ++v) {
        const auto image = render_view(student, poses[v], opts);
        const auto stem = dir + "/view_" + numbered(v, count);
        if (png) write_png(stem + ".png", image);
        if (pfm) write_pfm(stem + ".pfm", image);
    }
    out << "rendered " << poses.size() << " view(s) to " << dir << '\n';
    return kExitOk;
}

int cmd_mesh(const RunConfig& config, std::ostream& out, std::ostream& err) {
    config.require("checkpoint");
    config.require("mesh.output");
    const std::size_t g = config.get_size("mesh.resolution");
    if (g < 2) throw ConfigError("key 'mesh.resolution' must be >= 2, got " + std::to_string(g));
    const double iso = config.get_double("mesh.iso");
    const auto student = load_checkpoint(config.get("checkpoint"));
    const auto mesh = marching_cubes(density_grid(student, g), iso);
    if (mesh.triangles.empty()) err << "warning: the level set at iso " << num(iso) << " is empty; writing an empty mesh\n";
    write_obj(config.get("mesh.output"), mesh);
    out << "wrote " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles to "
        << config.get("mesh.output") << (!mesh.triangles.empty() && is_watertight(mesh) ? " (watertight)" : "") << '\n';
    return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream&) {
    config.require("out.dir");
    const auto& subject = config.get("eval.subject");
    if (subject != "student" && subject != "teacher") {
        throw ConfigError("key 'eval.subject': expected student or teacher, got '" + subject + "'");
    }
    if (subject == "student") config.require("checkpoint");
    const std::size_t views = config.get_size("eval.views"), res = config.get_size("eval.resolution");
    const std::size_t samples = config.get_size("eval.strip_samples");
    if (views < 2) throw ConfigError("key 'eval.views' must be >= 2");
    if (res < 11) throw ConfigError("key 'eval.resolution' must be >= 11 (SSIM window)");
    if (samples < 2) throw ConfigError("key 'eval.strip_samples' must be >= 2");
    std::array<double, 2> p0{0.0, std::floor(double(res) / 2.0)}, p1{double(res - 1), std::floor(double(res) / 2.0)};
    if (!config.get("eval.segment").empty()) {
        const auto seg = config.get_list("eval.segment");
        if (seg.size() != 4) throw ConfigError("key 'eval.segment': expected u0,v0,u1,v1");
        p0 = {seg[0], seg[1]};
        p1 = {seg[2], seg[3]};
        for (double c : seg) {
            if (c < 0.0 || c > double(res - 1)) throw ConfigError("key 'eval.segment': endpoint outside the frame");
        }
    }

    const auto scene = scene_from(config);
    const auto inc = inconsistency_from(config);
    const auto oracle = oracle_options_from(config);
    const auto opts = render_options_from(config);
    std::optional<StudentField> student;
    if (subject == "student") student = load_checkpoint(config.get("checkpoint"));
    const auto path = yaw_sweep(views, to_radians(config.get_double("eval.yaw_range_deg")),
                                to_radians(config.get_double("eval.pitch_deg")), config.get_double("fit.orbit_radius"),
                                config.get_double("fit.fov_degrees"), res);
    const auto dir = config.get("out.dir");
    make_dir(dir);
    const bool save = config.get_bool("eval.save_images");

    std::vector<ad::Tensor> subject_images, teacher_images;
    std::vector<double> view_psnr, view_ssim;
    for (std::size_t v = 0; v < views; ++v) {
        const auto& cam = path.poses[v];
        const auto clean = oracle_render(scene, cam, oracle).image;
        auto teacher = teacher_image(scene, cam, inc, oracle);
        auto image = student ? render_view(*student, cam, opts) : teacher;
        view_psnr.push_back(psnr(image, clean));
        view_ssim.push_back(ssim(image, clean));
        if (save) write_png(dir + "/view_" + numbered(v, views) + ".png", image);
        subject_images.push_back(std::move(image));
        teacher_images.push_back(std::move(teacher));
    }
    const auto subject_strip = spatiotemporal_texture(subject_images, p0, p1, samples);
    const auto teacher_strip = spatiotemporal_texture(teacher_images, p0, p1, samples);
    write_png(dir + "/strip_" + subject + ".png", subject_strip);
    write_png(dir + "/strip_teacher_reference.png", teacher_strip);
    const double cs = consistency_score(subject_strip), ct = consistency_score(teacher_strip);
    // Two perfectly still strips are equally consistent.
    const double ratio = ct > 0.0 ? cs / ct : (cs == 0.0 ? 1.0 : INFINITY);

    std::ofstream csv(dir + "/eval.csv");
    if (!csv) throw std::runtime_error("cannot open '" + dir + "/eval.csv' for writing");
    csv << "view,label,psnr,ssim,consistency_subject,consistency_teacher,consistency_ratio\n";
    double mp = 0.0, ms = 0.0;
    for (std::size_t v = 0; v < views; ++v) {
        csv << v << ',' << path.labels[v] << ',' << num(view_psnr[v]) << ',' << num(view_ssim[v]) << ",,,\n";
        mp += view_psnr[v] / double(views);
        ms += view_ssim[v] / double(views);
    }
    csv << "summary,mean," << num(mp) << ',' << num(ms) << ',' << num(cs) << ',' << num(ct) << ',' << num(ratio)
        << '\n';
    if (!csv) throw std::runtime_error("write to '" + dir + "/eval.csv' failed");
    out << "mean psnr " << num(mp) << "  mean ssim " << num(ms) << "  consistency " << num(cs) << " vs teacher "
        << num(ct) << "  ratio " << num(ratio) << '\n';
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, std::ostream& out, std::ostream&) {
    GradcheckOptions opts;
    opts.seed = config.get_u64("seed");
    opts.configs = config.get_size("gradcheck.configs");
    opts.tolerance = config.get_double("gradcheck.tolerance");
    opts.inject_sign_flip = config.get_bool("gradcheck.inject_sign_flip");
    if (opts.configs == 0) throw ConfigError("key 'gradcheck.configs' must be >= 1");
    const auto report = run_gradcheck(opts);
    out << std::left << std::setw(22) << "op" << std::right << std::setw(9) << "configs" << std::setw(14)
        << "max_rel_err" << "  status\n";
    for (const auto& row : report.rows) {
        out << std::left << std::setw(22) << row.op << std::right << std::setw(9) << row.configs << std::setw(14)
            << std::scientific << std::setprecision(3) << row.max_rel_error << std::defaultfloat << "  "
            << (row.passed ? "ok" : "FAIL") << '\n';
    }
    out << (report.passed() ? "all " : "FAILED: not all ") << report.rows.size() << " operations within "
        << num(opts.tolerance) << " (" << std::fixed << std::setprecision(1) << report.seconds << std::defaultfloat
        << " s)\n";
    return report.passed() ? kExitOk : kExitCheckFailed;
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        const auto threads = config.get_size("threads");
        if (threads > 0) parallel::set_num_threads(int(threads));
        if (name == "fit") return cmd_fit(config, out, err);
        if (name == "render") return cmd_render(config, out, err);
        if (name == "mesh") return cmd_mesh(config, out, err);
        if (name == "eval") return cmd_eval(config, out, err);
        if (name == "gradcheck") return cmd_gradcheck(config, out, err);
        throw ConfigError("unknown command '" + name + "'");
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
}

}  // namespace mimic::cli
