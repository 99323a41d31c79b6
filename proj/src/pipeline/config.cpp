#include "edof/pipeline/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include <omp.h>

#include "edof/error.hpp"

namespace edof::pipeline
{

using nlohmann::json;

namespace
{

void reject_unknown(const json &j, const std::set<std::string> &known, const std::string &where)
{
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw DomainError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json &j, const char *key, T &dst)
{
    if (j.contains(key))
        dst = j.at(key).get<T>();
}

Depth depth_from_json(const json &j)
{
    if (j.is_string())
        return parse_depth(j.get<std::string>());
    return Depth::meters(j.get<double>());
}

json depth_to_json(Depth d)
{
    if (d.is_infinite())
        return "inf";
    return d.meters();
}

DepthRange range_from_json(const json &j)
{
    if (j.is_string())
        return parse_depth_range(j.get<std::string>());
    if (!j.is_array() || j.size() != 2)
        throw DomainError("depth_range must be [z_min, z_max] or \"z_min,z_max\"");
    DepthRange r{depth_from_json(j[0]), depth_from_json(j[1])};
    r.validate();
    return r;
}

net::NetConfig net_from_json(const json &j)
{
    reject_unknown(j, {"width", "dilations", "negative_slope"}, "net");
    net::NetConfig c;
    read(j, "width", c.width);
    read(j, "dilations", c.dilations);
    read(j, "negative_slope", c.negative_slope);
    return c;
}

EvalConfig eval_from_json(const json &j, EvalConfig c)
{
    reject_unknown(j, {"depths", "sigma_s", "sigma_d_m", "fabrication_trials", "nsr_grid", "seed"}, "eval");
    if (j.contains("depths")) {
        c.depths.clear();
        for (const auto &d : j.at("depths"))
            c.depths.push_back(depth_from_json(d));
    }
    read(j, "sigma_s", c.sigma_s);
    read(j, "sigma_d_m", c.sigma_d_m);
    read(j, "fabrication_trials", c.fabrication_trials);
    read(j, "nsr_grid", c.nsr_grid);
    read(j, "seed", c.seed);
    return c;
}

json to_json(const EvalConfig &c)
{
    json depths = json::array();
    for (auto d : c.depths)
        depths.push_back(depth_to_json(d));
    return {{"depths", depths},
            {"sigma_s", c.sigma_s},
            {"sigma_d_m", c.sigma_d_m},
            {"fabrication_trials", c.fabrication_trials},
            {"nsr_grid", c.nsr_grid},
            {"seed", c.seed}};
}

json parse_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

} // namespace

void EvalConfig::validate() const
{
    if (sigma_s.empty() || sigma_d_m.empty())
        throw DomainError("eval: sigma_s and sigma_d_m lists must not be empty");
    for (double s : sigma_s)
        if (!(s >= 0.0))
            throw DomainError("eval: sigma_s must be non-negative");
    for (double s : sigma_d_m)
        if (!(s >= 0.0))
            throw DomainError("eval: sigma_d_m must be non-negative");
    if (fabrication_trials == 0)
        throw DomainError("eval: fabrication_trials must be positive");
    for (double n : nsr_grid)
        if (!(n >= 0.0))
            throw DomainError("eval: NSR candidates must be non-negative");
}

std::vector<double> EvalConfig::nsr_candidates() const
{
    if (!nsr_grid.empty())
        return nsr_grid;
    std::vector<double> g;
    for (int e = -25; e <= 0; ++e)
        g.push_back(std::pow(10.0, e / 5.0));
    return g;
}

void TrainConfig::validate() const
{
    geometry.validate();
    spectral.validate();
    net.validate();
    loss.validate();
    adam.validate();
    eval.validate();
    depth_range.validate();
    if (spectral.channels() != net.channels)
        throw DomainError("spectral channel count must match the network's " + std::to_string(net.channels));
    if (patch_size < net.min_side)
        throw DomainError("patch_size below the network minimum of " + std::to_string(net.min_side));
    if (patch_overlap >= patch_size)
        throw DomainError("patch_overlap must be smaller than patch_size");
    if (batch_size == 0)
        throw DomainError("batch_size must be positive");
    if (epochs == 0 && steps == 0)
        throw DomainError("either epochs or steps must be positive");
    if (depth_levels == 0)
        throw DomainError("depth_levels must be positive");
    if (!(sigma_s_lo >= 0.0) || !(sigma_s_lo <= sigma_s_hi))
        throw DomainError("sensor noise range needs 0 <= sigma_lo <= sigma_hi");
    if (!(sigma_d_m >= 0.0))
        throw DomainError("sigma_d_m must be non-negative");
    if (!(phase_lr >= 0.0))
        throw DomainError("phase_lr must be non-negative");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw DomainError("validation_fraction must be in (0, 1)");
    if (!(phase_init_std >= 0.0))
        throw DomainError("phase_init_std must be non-negative");
}

TrainConfig TrainConfig::toy()
{
    TrainConfig c;
    c.geometry = CameraGeometry::toy();
    c.patch_size = 64;
    c.depth_levels = 8;
    c.steps = 2000;
    return c;
}

CameraGeometry geometry_from_json(const json &j)
{
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "reference")
            return CameraGeometry::reference();
        if (name == "toy")
            return CameraGeometry::toy();
        throw DomainError("unknown geometry preset '" + name + "'");
    }
    reject_unknown(j,
                   {"aperture_radius_m", "sensor_distance_m", "lens_radius_of_curvature_m", "lens_center_thickness_m",
                    "pupil_pitch_m", "sensor_pixel_pitch_m", "grid_side", "padding_factor", "psf_size"},
                   "geometry");
    CameraGeometry g = CameraGeometry::reference();
    read(j, "aperture_radius_m", g.aperture_radius_m);
    read(j, "sensor_distance_m", g.sensor_distance_m);
    read(j, "lens_radius_of_curvature_m", g.lens_radius_of_curvature_m);
    read(j, "lens_center_thickness_m", g.lens_center_thickness_m);
    read(j, "pupil_pitch_m", g.pupil_pitch_m);
    read(j, "sensor_pixel_pitch_m", g.sensor_pixel_pitch_m);
    read(j, "padding_factor", g.padding_factor);
    if (!(g.aperture_radius_m > 0.0) || !(g.pupil_pitch_m > 0.0))
        throw DomainError("camera geometry: aperture radius and pupil pitch must be positive");
    g.grid_side = j.contains("grid_side") ? j.at("grid_side").get<std::size_t>()
                                          : grid_side_for(g.aperture_radius_m, g.pupil_pitch_m);
    g.psf_size = j.contains("psf_size") ? j.at("psf_size").get<std::size_t>() : g.field_covering_psf_size(611e-9);
    g.validate();
    return g;
}

json to_json(const CameraGeometry &g)
{
    return {{"aperture_radius_m", g.aperture_radius_m},
            {"sensor_distance_m", g.sensor_distance_m},
            {"lens_radius_of_curvature_m", g.lens_radius_of_curvature_m},
            {"lens_center_thickness_m", g.lens_center_thickness_m},
            {"pupil_pitch_m", g.pupil_pitch_m},
            {"sensor_pixel_pitch_m", g.sensor_pixel_pitch_m},
            {"grid_side", g.grid_side},
            {"padding_factor", g.padding_factor},
            {"psf_size", g.psf_size}};
}

SpectralModel spectral_from_json(const json &j)
{
    if (j.is_string()) {
        if (j.get<std::string>() == "rgb")
            return SpectralModel::rgb();
        throw DomainError("unknown spectral preset '" + j.get<std::string>() + "'");
    }
    reject_unknown(j, {"wavelengths_m", "doe_index", "lens_index", "nominal"}, "spectral");
    SpectralModel s;
    read(j, "wavelengths_m", s.wavelengths_m);
    read(j, "doe_index", s.doe_index);
    read(j, "lens_index", s.lens_index);
    read(j, "nominal", s.nominal);
    s.validate();
    return s;
}

json to_json(const SpectralModel &s)
{
    return {{"wavelengths_m", s.wavelengths_m},
            {"doe_index", s.doe_index},
            {"lens_index", s.lens_index},
            {"nominal", s.nominal}};
}

TrainConfig train_config_from_json(const json &j)
{
    try {
        if (!j.is_object())
            throw DomainError("training configuration must be a JSON object");
        reject_unknown(j,
                       {"preset", "geometry", "spectral", "patch_size", "patch_overlap", "batch_size", "epochs",
                        "steps", "depth_range", "depth_levels", "sigma_s", "sigma_d_m", "lr", "beta1", "beta2",
                        "eps", "weight_decay", "phase_lr", "loss", "net", "validation_fraction", "phase_init_std",
                        "seed", "checkpoint_every", "eval"},
                       "training configuration");
        TrainConfig c;
        if (j.contains("preset")) {
            const auto p = j.at("preset").get<std::string>();
            if (p == "toy")
                c = TrainConfig::toy();
            else if (p != "reference")
                throw DomainError("unknown preset '" + p + "'");
        }
        if (j.contains("geometry"))
            c.geometry = geometry_from_json(j.at("geometry"));
        if (j.contains("spectral"))
            c.spectral = spectral_from_json(j.at("spectral"));
        read(j, "patch_size", c.patch_size);
        read(j, "patch_overlap", c.patch_overlap);
        read(j, "batch_size", c.batch_size);
        read(j, "epochs", c.epochs);
        read(j, "steps", c.steps);
        if (j.contains("depth_range"))
            c.depth_range = range_from_json(j.at("depth_range"));
        read(j, "depth_levels", c.depth_levels);
        if (j.contains("sigma_s")) {
            const auto s = j.at("sigma_s").get<std::vector<double>>();
            if (s.size() != 2)
                throw DomainError("sigma_s must be [lo, hi]");
            c.sigma_s_lo = s[0];
            c.sigma_s_hi = s[1];
        }
        read(j, "sigma_d_m", c.sigma_d_m);
        read(j, "lr", c.adam.lr);
        read(j, "beta1", c.adam.beta1);
        read(j, "beta2", c.adam.beta2);
        read(j, "eps", c.adam.eps);
        read(j, "weight_decay", c.adam.weight_decay);
        read(j, "phase_lr", c.phase_lr);
        if (j.contains("loss")) {
            const auto &l = j.at("loss");
            reject_unknown(l, {"alpha", "beta", "gamma"}, "loss");
            read(l, "alpha", c.loss.alpha);
            read(l, "beta", c.loss.beta);
            read(l, "gamma", c.loss.gamma);
        }
        if (j.contains("net"))
            c.net = net_from_json(j.at("net"));
        read(j, "validation_fraction", c.validation_fraction);
        read(j, "phase_init_std", c.phase_init_std);
        read(j, "seed", c.seed);
        read(j, "checkpoint_every", c.checkpoint_every);
        if (j.contains("eval"))
            c.eval = eval_from_json(j.at("eval"), c.eval);
        c.validate();
        return c;
    } catch (const json::exception &e) {
        throw DomainError(std::string("training configuration: ") + e.what());
    }
}

json to_json(const TrainConfig &c)
{
    return {{"geometry", to_json(c.geometry)},
            {"spectral", to_json(c.spectral)},
            {"patch_size", c.patch_size},
            {"patch_overlap", c.patch_overlap},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"steps", c.steps},
            {"depth_range", {depth_to_json(c.depth_range.near), depth_to_json(c.depth_range.far)}},
            {"depth_levels", c.depth_levels},
            {"sigma_s", {c.sigma_s_lo, c.sigma_s_hi}},
            {"sigma_d_m", c.sigma_d_m},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"weight_decay", c.adam.weight_decay},
            {"phase_lr", c.phase_lr},
            {"loss", {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"gamma", c.loss.gamma}}},
            {"net", {{"width", c.net.width}, {"dilations", c.net.dilations}, {"negative_slope", c.net.negative_slope}}},
            {"validation_fraction", c.validation_fraction},
            {"phase_init_std", c.phase_init_std},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"eval", to_json(c.eval)}};
}

TrainConfig load_train_config(const std::filesystem::path &path)
{
    return train_config_from_json(parse_file(path));
}

CameraGeometry load_geometry(const std::filesystem::path &path)
{
    const json j = parse_file(path);
    try {
        return geometry_from_json(j.is_object() && j.contains("geometry") ? j.at("geometry") : j);
    } catch (const json::exception &e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

std::optional<std::filesystem::path> apply_environment(TrainConfig &config)
{
    if (const char *s = std::getenv("EDOF_SEED"); s && *s) {
        try {
            std::size_t used = 0;
            config.seed = std::stoull(s, &used);
            if (s[used] != '\0')
                throw std::invalid_argument(s);
        } catch (const std::exception &) {
            throw DomainError(std::string("EDOF_SEED is not an unsigned integer: ") + s);
        }
    }
    if (const char *d = std::getenv("EDOF_OUT_DIR"); d && *d)
        return std::filesystem::path(d);
    return std::nullopt;
}

void set_thread_count(int threads)
{
    if (threads < 1)
        throw DomainError("thread count must be positive");
    omp_set_num_threads(threads);
}

} // namespace edof::pipeline
