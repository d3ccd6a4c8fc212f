// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mimic {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_radians(double degrees) { return degrees * M_PI / 180.0; }

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"seed", "0", "master seed for fitting, rendering and gradcheck"},
        {"threads", "0", "worker threads; 0 uses the OpenMP default, results do not depend on it"},
        {"out.dir", "", "output directory (required by fit, render and eval)"},
        {"checkpoint", "", "TPL1 student checkpoint (required by render, mesh and eval of a student)"},
        {"checkpoint.dtype", "f64", "storage of saved checkpoints: f64 or f32"},

        {"scene.kind", "sphere", "oracle scene: sphere, two_blob or striped_box"},
        {"scene.radius", "0.6", "sphere radius; blob radius is 0.6x, box half-extent 1x"},
        {"scene.sigma_max", "40", "interior density"},
        {"scene.edge_width", "0.01", "half-width of the density ramp at the surface"},
        {"scene.texture_frequency", "6", "albedo texture frequency"},

        {"teacher.samples", "256", "dense samples per ray of the oracle renderer"},
        {"teacher.inconsistency", "none", "per-view perturbation: none, texture_jitter or warp"},
        {"teacher.amplitude", "0", "perturbation amplitude epsilon"},
        {"teacher.seed", "0", "seed of the per-view perturbations"},
        {"teacher.blur_sigma", "1.5", "band limit of the jitter noise, pixels"},

        {"student.channels", "32", "tri-plane channels C"},
        {"student.coarse_resolution", "64", "coarse plane resolution"},
        {"student.factor", "2", "super-resolution factor k (power of two)"},
        {"student.style_dim", "32", "style code dimension"},
        {"student.hidden", "64", "decoder hidden width"},
        {"student.depth", "2", "decoder linear layers including the head"},
        {"student.aware3d", "false", "insert the 3D-aware block on the coarse planes"},
        {"student.plane_init", "0.1", "coarse planes start uniform in +-plane_init"},
        {"student.density_bias", "-1", "initial density bias of the decoder head"},
        {"student.init_seed", "1", "seed of the student initialisation"},

        {"fit.image_size", "128", "teacher frame size F"},
        {"fit.patch_size", "64", "patch size P"},
        {"fit.steps", "5000", "optimisation steps"},
        {"fit.batch", "4", "patches per step"},
        {"fit.orbit_radius", "2.7", "camera distance from the origin"},
        {"fit.fov_degrees", "30", "vertical field of view"},
        {"fit.yaw_range_deg", "35", "yaw drawn uniformly from +-range"},
        {"fit.pitch_range_deg", "15", "pitch drawn uniformly from +-range"},
        {"fit.lr", "0.0025", "student Adam step size"},
        {"fit.beta1", "0.9", "Adam first-moment decay"},
        {"fit.beta2", "0.99", "Adam second-moment decay"},
        {"fit.adam_eps", "1e-8", "Adam epsilon"},
        {"fit.disc_lr", "0.002", "discriminator Adam step size"},
        {"fit.disc_width", "16", "discriminator base width"},
        {"fit.disc_hidden", "64", "discriminator dense width"},
        {"fit.stage_a_steps", "0", "coarse-only warm-up steps on full low-resolution frames"},
        {"fit.stage_a_resolution", "32", "frame size of the warm-up"},
        {"fit.checkpoint_every", "0", "periodic checkpoints; 0 writes the final one only"},
        {"fit.preview_every", "0", "periodic preview renders; 0 disables them"},

        {"loss.imitation", "true", "perceptual imitation term"},
        {"loss.adv3d", "false", "patch-adversarial term"},
        {"loss.imitation_weight", "1", "weight of the imitation term"},
        {"loss.adv_weight", "1", "weight of the adversarial term"},
        {"loss.lambda_r1", "1", "R1 penalty weight"},
        {"loss.level_weights", "1,0.5,0.25,0.125", "pyramid level weights; their count sets the level count"},

        {"render.coarse_samples", "48", "stratified samples per ray"},
        {"render.fine_samples", "48", "importance samples per ray"},
        {"render.background", "1,1,1", "background colour"},
        {"render.importance_floor", "1e-5", "added to every bin weight of the importance PDF"},
        {"render.chunk_rows", "16", "rows per chunk when rendering without gradients"},

        {"view.count", "1", "render: number of views; more than one gives a yaw orbit"},
        {"view.yaw_deg", "0", "render: yaw of a single view"},
        {"view.pitch_deg", "0", "render: pitch of every view"},
        {"view.yaw_range_deg", "35", "render: orbit spans +-range"},
        {"view.resolution", "128", "render: frame size"},
        {"view.format", "png", "render: png, pfm or both"},

        {"mesh.resolution", "128", "density grid size G"},
        {"mesh.iso", "20", "density iso-level"},
        {"mesh.output", "", "OBJ path (required by mesh)"},

        {"eval.subject", "student", "what is evaluated: student (checkpoint) or teacher"},
        {"eval.views", "60", "views of the yaw sweep"},
        {"eval.yaw_range_deg", "35", "sweep spans +-range"},
        {"eval.pitch_deg", "0", "pitch of the sweep"},
        {"eval.resolution", "64", "frame size"},
        {"eval.segment", "", "strip segment u0,v0,u1,v1 in pixels; empty uses the middle row"},
        {"eval.strip_samples", "128", "samples along the strip segment"},
        {"eval.save_images", "false", "also write every rendered view"},

        {"gradcheck.configs", "20", "random configurations per operation"},
        {"gradcheck.tolerance", "1e-4", "maximum relative error"},
        {"gradcheck.inject_sign_flip", "false", "negate analytic gradients (self-test; must fail)"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::string line;
    for (std::size_t number = 1; std::getline(in, line); ++number) {
        const auto hash = line.find('#');
        const auto body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        try {
            apply_override(body);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ConfigError("key '" + key + "': expected a finite number, got '" + s + "'");
    }
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    for (std::string item; std::getline(ss, item, ',');) {
        const auto t = trim(item);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
            throw ConfigError("key '" + key + "': expected comma-separated numbers, got '" + get(key) + "'");
        }
        out.push_back(v);
    }
    return out;
}

void RunConfig::require(const std::string& key) const {
    if (get(key).empty()) throw ConfigError("missing required config key '" + key + "'");
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& k : config_keys()) {
        out += "# " + k.help + "\n";
        out += k.name + " = " + values_.at(k.name) + "\n";
    }
    return out;
}

namespace {

// Library validation errors become configuration errors naming the section.
template <class Fn>
auto build(const char* section, Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(section) + ": " + e.what());
    }
}

Vec3 vec3(const RunConfig& c, const std::string& key) {
    const auto v = c.get_list(key);
    if (v.size() != 3) throw ConfigError("key '" + key + "': expected three comma-separated numbers");
    return {v[0], v[1], v[2]};
}

}  // namespace

OracleScene scene_from(const RunConfig& c) {
    return build("scene", [&] {
        OracleScene s;
        s.kind = parse_scene_kind(c.get("scene.kind"));
        s.radius = c.get_double("scene.radius");
        s.sigma_max = c.get_double("scene.sigma_max");
        s.edge_width = c.get_double("scene.edge_width");
        s.texture_frequency = c.get_double("scene.texture_frequency");
        s.validate();
        return s;
    });
}

InconsistencySpec inconsistency_from(const RunConfig& c) {
    return build("teacher", [&] {
        InconsistencySpec inc;
        inc.mode = parse_inconsistency_mode(c.get("teacher.inconsistency"));
        inc.amplitude = c.get_double("teacher.amplitude");
        inc.seed = c.get_u64("teacher.seed");
        inc.blur_sigma = c.get_double("teacher.blur_sigma");
        inc.validate();
        return inc;
    });
}

OracleOptions oracle_options_from(const RunConfig& c) {
    OracleOptions o;
    o.samples = c.get_size("teacher.samples");
    if (o.samples == 0) throw ConfigError("key 'teacher.samples' must be >= 1");
    o.background = vec3(c, "render.background");
    return o;
}

StudentConfig student_from(const RunConfig& c) {
    StudentConfig s;
    s.channels = c.get_size("student.channels");
    s.coarse_resolution = c.get_size("student.coarse_resolution");
    s.factor = c.get_size("student.factor");
    s.style_dim = c.get_size("student.style_dim");
    s.hidden = c.get_size("student.hidden");
    s.depth = c.get_size("student.depth");
    s.aware3d = c.get_bool("student.aware3d");
    s.plane_init = c.get_double("student.plane_init");
    s.density_bias = c.get_double("student.density_bias");
    if (s.channels == 0 || s.coarse_resolution < 2 || s.style_dim == 0 || s.hidden == 0 || s.depth == 0) {
        throw ConfigError("student: channels, style_dim, hidden, depth must be >= 1 and coarse_resolution >= 2");
    }
    return s;
}

RenderOptions render_options_from(const RunConfig& c) {
    RenderOptions r;
    r.coarse_samples = c.get_size("render.coarse_samples");
    r.fine_samples = c.get_size("render.fine_samples");
    r.background = vec3(c, "render.background");
    r.importance_floor = c.get_double("render.importance_floor");
    r.chunk_rows = c.get_size("render.chunk_rows");
    r.seed = c.get_u64("seed");
    if (r.coarse_samples == 0) throw ConfigError("key 'render.coarse_samples' must be >= 1");
    return r;
}

FitConfig fit_from(const RunConfig& c) {
    FitConfig f;
    f.image_size = c.get_size("fit.image_size");
    f.patch_size = c.get_size("fit.patch_size");
    f.steps = c.get_size("fit.steps");
    f.batch = c.get_size("fit.batch");
    f.orbit_radius = c.get_double("fit.orbit_radius");
    f.fov_degrees = c.get_double("fit.fov_degrees");
    f.yaw_range = to_radians(c.get_double("fit.yaw_range_deg"));
    f.pitch_range = to_radians(c.get_double("fit.pitch_range_deg"));
    f.student_opt = {c.get_double("fit.lr"), c.get_double("fit.beta1"), c.get_double("fit.beta2"),
                     c.get_double("fit.adam_eps")};
    f.disc_opt = {c.get_double("fit.disc_lr"), c.get_double("fit.beta1"), c.get_double("fit.beta2"),
                  c.get_double("fit.adam_eps")};
    f.disc_width = c.get_size("fit.disc_width");
    f.disc_hidden = c.get_size("fit.disc_hidden");
    f.stage_a_steps = c.get_size("fit.stage_a_steps");
    f.stage_a_resolution = c.get_size("fit.stage_a_resolution");
    f.checkpoint_every = c.get_size("fit.checkpoint_every");
    f.preview_every = c.get_size("fit.preview_every");
    f.loss.imitation = c.get_bool("loss.imitation");
    f.loss.adv3d = c.get_bool("loss.adv3d");
    f.loss.imitation_weight = c.get_double("loss.imitation_weight");
    f.loss.adv_weight = c.get_double("loss.adv_weight");
    f.loss.lambda_r1 = c.get_double("loss.lambda_r1");
    f.loss.level_weights = c.get_list("loss.level_weights");
    f.loss.levels = f.loss.level_weights.size();
    f.render = render_options_from(c);
    f.teacher = oracle_options_from(c);
    f.seed = c.get_u64("seed");
    f.out_dir = c.get("out.dir");
    build("fit", [&] {
        f.validate();
        return 0;
    });
    return f;
}

}  // namespace mimic
