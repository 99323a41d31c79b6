#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "edof/autodiff.hpp"
#include "edof/error.hpp"
#include "edof/image.hpp"
#include "edof/optics.hpp"
#include "edof/pipeline/camera.hpp"
#include "edof/pipeline/config.hpp"
#include "edof/pipeline/dataset.hpp"
#include "edof/pipeline/evaluate.hpp"
#include "edof/pipeline/export.hpp"
#include "edof/pipeline/train.hpp"
#include "edof/raster_io.hpp"
#include "edof/sensor.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace edof;
using namespace edof::pipeline;
using nlohmann::json;

namespace
{

constexpr int kUsage = 2, kIo = 3, kNumeric = 4;

struct UsageError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

std::string num(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void print_config(const std::string &command, const json &resolved)
{
    std::cout << "# " << command << " config " << resolved.dump() << '\n';
}

std::ofstream open_csv(const fs::path &path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    return out;
}

CameraGeometry geometry_arg(const std::string &text)
{
    if (text == "reference" || text == "toy")
        return geometry_from_json(json(text));
    return load_geometry(text);
}

std::vector<double> number_list(const std::string &text, const char *what)
{
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception &) {
            throw UsageError(std::string("cannot parse ") + what + " list '" + text + "'");
        }
    }
    if (out.empty())
        throw UsageError(std::string("empty ") + what + " list");
    return out;
}

std::vector<Depth> depth_list(const std::string &text)
{
    std::vector<Depth> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        out.push_back(parse_depth(item));
    if (out.empty())
        throw UsageError("empty depth list");
    return out;
}

Image three_channels(Image im)
{
    if (im.channel_count() == 1)
        im.channels.assign(3, im.channels.front());
    return im;
}

// CSV of numbers (inf allowed) or a one-band raster.
RealGrid load_grid(const fs::path &path)
{
    if (path.extension() == ".raster")
        return load_raster(path).band(0);
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    for (std::string line; std::getline(in, line);) {
        if (line.empty())
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string item; std::getline(ss, item, ',');)
            row.push_back(item == "inf" ? std::numeric_limits<double>::infinity() : std::stod(item));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError(path.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw IoError(path.string() + ": empty grid");
    RealGrid g(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            g(r, c) = rows[r][c];
    return g;
}

PhaseMap checked_phase(const fs::path &path, const CameraGeometry &g, const SpectralModel &spectral)
{
    PhaseMap p = load_phase(path);
    if (p.values_rad.rows() != g.grid_side || p.values_rad.cols() != g.grid_side)
        throw ShapeError(path.string() + ": phase grid does not match the geometry (" + std::to_string(g.grid_side) +
                         ")");
    if (std::abs(p.wavelength_m - spectral.nominal_wavelength()) > 1e-12)
        p = phase_transfer(p, spectral.nominal_wavelength(), spectral);
    return p;
}

void write_depth_plot(const RunReport &rep, const fs::path &path)
{
    std::map<double, plot::Series> out, sensor;
    std::map<std::pair<double, std::size_t>, std::pair<double, double>> acc;
    std::map<std::size_t, double> dio;
    for (const auto &r : rep.rows) {
        auto &a = acc[{r.sigma_s, r.depth_index}];
        a.first += r.psnr_output;
        a.second += 1.0;
        dio[r.depth_index] = r.depth.diopters();
    }
    std::vector<plot::Series> series;
    double last = -1.0;
    for (const auto &[k, a] : acc) {
        if (k.first != last) {
            series.emplace_back();
            last = k.first;
        }
        series.back().emplace_back(dio[k.second], a.first / a.second);
    }
    write_png(path, plot::line_plot(series));
}

// ---- analyze --------------------------------------------------------------

int run_analyze(const std::string &geometry_text, const std::string &range_text, const std::string &csv)
{
    const CameraGeometry g = geometry_arg(geometry_text);
    g.validate();
    const DepthRange range = parse_depth_range(range_text);
    const SpectralModel sp = SpectralModel::rgb();
    print_config("analyze", {{"geometry", to_json(g)}, {"spectral", to_json(sp)},
                             {"depth_range", {format_depth(range.near), format_depth(range.far)}}});

    std::ostringstream out;
    out << "channel,wavelength_nm,lens_index,focal_length_mm,focus_distance_m,psi_near,psi_far\n";
    for (std::size_t c = 0; c < sp.channels(); ++c) {
        const double f = lens_focal_length(g, sp.lens_index[c]);
        const auto focus = in_focus_depth(g, f);
        out << c << ',' << num(sp.wavelengths_m[c] * 1e9) << ',' << num(sp.lens_index[c]) << ',' << num(f * 1e3) << ','
            << (focus ? format_depth(*focus) : std::string("none")) << ','
            << num(defocus_coefficient(range.near, sp.wavelengths_m[c], g, f)) << ','
            << num(defocus_coefficient(range.far, sp.wavelengths_m[c], g, f)) << '\n';
    }
    const double psi_max = max_defocus(range, sp, g);
    const double bound = min_sampling_pitch(psi_max, g.aperture_radius_m);
    out << "\nquantity,value\n";
    out << "psi_max," << num(psi_max) << '\n';
    out << "pupil_pitch_bound_um," << num(bound * 1e6) << '\n';
    out << "configured_pupil_pitch_um," << num(g.pupil_pitch_m * 1e6) << '\n';
    out << "implied_grid_side,"
        << (std::isfinite(bound) ? std::to_string(grid_side_for(g.aperture_radius_m, bound)) : std::string("1")) << '\n';
    out << "configured_grid_side," << g.grid_side << '\n';
    out << "padded_side," << g.padded_side() << '\n';
    std::cout << out.str();
    if (!csv.empty())
        open_csv(csv) << out.str();
    return 0;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs
{
    std::string geometry = "reference";
    std::string phase;
    double cubic = std::numeric_limits<double>::quiet_NaN();
    bool clear = false;
    std::string image, depth, depth_map, response, mtf_depths, out;
    bool hyperspectral = false;
    double depth_step = 0.1;
    double sigma_s = 0.0;
    std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs &a)
{
    const CameraGeometry g = geometry_arg(a.geometry);
    const SpectralModel rgb = SpectralModel::rgb();
    const CameraModel camera(g, rgb);
    PhaseMap phase = camera.zero_phase();
    std::string source = "clear";
    if (!a.phase.empty()) {
        phase = checked_phase(a.phase, g, rgb);
        source = "phase:" + a.phase;
    } else if (!std::isnan(a.cubic)) {
        phase = cubic_mask(a.cubic, g, rgb.nominal_wavelength());
        source = "cubic:" + num(a.cubic);
    }
    if (a.depth.empty() && a.depth_map.empty())
        throw UsageError("simulate needs --depth or --depth-map");
    if (a.hyperspectral && (a.response.empty() || a.depth.empty()))
        throw UsageError("--hyperspectral needs --response and --depth");
    if (a.hyperspectral && !a.depth_map.empty())
        throw UsageError("--hyperspectral and --depth-map cannot be combined");

    std::vector<Depth> psf_depths;
    if (!a.depth.empty())
        psf_depths.push_back(parse_depth(a.depth));
    if (!a.mtf_depths.empty())
        for (Depth z : depth_list(a.mtf_depths))
            psf_depths.push_back(z);
    if (psf_depths.empty())
        psf_depths = {Depth::meters(0.5), Depth::meters(1.0), Depth::infinity()};

    print_config("simulate", {{"geometry", to_json(g)},
                              {"optics", source},
                              {"image", a.image},
                              {"depth", a.depth},
                              {"depth_map", a.depth_map},
                              {"depth_step_m", a.depth_step},
                              {"hyperspectral", a.hyperspectral},
                              {"response", a.response},
                              {"sigma_s", a.sigma_s},
                              {"seed", a.seed},
                              {"out", a.out}});
    fs::create_directories(a.out);

    SensorImage sensor;
    std::optional<Image> reference;
    if (a.hyperspectral) {
        const SpectralResponse response = SpectralResponse::load_csv(a.response);
        const Raster cube_raster = load_raster(a.image);
        if (cube_raster.bands != response.bands())
            throw ShapeError(a.image + ": " + std::to_string(cube_raster.bands) + " bands but the response has " +
                             std::to_string(response.bands()));
        std::vector<RealGrid> cube;
        for (std::size_t b = 0; b < cube_raster.bands; ++b)
            cube.push_back(cube_raster.band(b));
        const CameraModel bands(g, SpectralModel::with_bands(rgb, response.wavelengths_m));
        auto all = bands.psfs(phase, psf_depths.front());
        std::vector<Psf> per_band(all.begin() + 1, all.end());
        sensor = render_broadband(cube, response, per_band, a.sigma_s, a.seed);
    } else {
        const Image scene = three_channels(read_png(a.image));
        reference = scene;
        if (!a.depth_map.empty()) {
            const RealGrid dm = load_grid(a.depth_map);
            sensor = render_layered(scene, dm, camera.provider(phase), a.sigma_s, a.depth_step, a.seed);
        } else {
            sensor = render_planar(scene, camera.psfs(phase, psf_depths.front()), a.sigma_s, a.seed);
        }
    }
    write_png(fs::path(a.out) / "sensor.png", sensor.image, 16);
    save_raster(fs::path(a.out) / "sensor.raster",
                Raster::from_bands(sensor.image.channels, g.sensor_pixel_pitch_m, 0.0));

    auto mtf_csv = open_csv(fs::path(a.out) / "mtf.csv");
    mtf_csv << "depth_m,channel,frequency_cyc_per_mm,mtf\n";
    std::vector<plot::Series> green;
    for (std::size_t d = 0; d < psf_depths.size(); ++d) {
        const auto psfs = camera.psfs(phase, psf_depths[d]);
        for (std::size_t c = 0; c < psfs.size(); ++c) {
            const std::string stem = "psf_d" + std::to_string(d) + "_c" + std::to_string(c);
            save_raster(fs::path(a.out) / (stem + ".raster"),
                        Raster::from_grid(psfs[c].values, psfs[c].pitch_m, psfs[c].wavelength_m));
            write_png(fs::path(a.out) / (stem + ".png"), plot::heatmap(psfs[c].values));
            const Mtf m = mtf(psfs[c]);
            const auto prof = mtf_radial_profile(m);
            plot::Series s;
            for (std::size_t k = 0; k < prof.size(); ++k) {
                const double f = static_cast<double>(k) * m.frequency_pitch * 1e-3;
                mtf_csv << format_depth(psf_depths[d]) << ',' << c << ',' << num(f) << ',' << num(prof[k]) << '\n';
                s.emplace_back(f, prof[k]);
            }
            if (c == rgb.nominal)
                green.push_back(std::move(s));
        }
    }
    write_png(fs::path(a.out) / "mtf.png", plot::line_plot(green));

    std::ostringstream summary;
    summary << "quantity,value\n";
    summary << "noise_sigma," << num(sensor.noise_sigma) << '\n';
    if (reference && reference->height() == sensor.image.height() && reference->width() == sensor.image.width())
        summary << "psnr_sensor_db," << num(psnr(*reference, sensor.image)) << '\n';
    std::cout << summary.str();
    open_csv(fs::path(a.out) / "simulate.csv") << summary.str();
    return 0;
}

// ---- train ----------------------------------------------------------------

std::vector<NamedImage> validation_images(const PatchStore &store)
{
    std::vector<NamedImage> out;
    for (const auto &p : store.validation)
        out.push_back({p.source + "@" + std::to_string(p.row) + "_" + std::to_string(p.col), p.image});
    return out;
}

void finish_run(RunReport &rep, const TrainState &state, const TrainConfig &config, const fs::path &out)
{
    rep.write(out);
    write_depth_plot(rep, out / "depth_psnr.png");
    write_png(out / "phase.png", plot::heatmap(state.phase.values_rad));
    std::cout << rep.summary();
    (void)config;
}

int run_train(const std::string &config_path, const std::string &data, std::string out, const std::string &resume,
              const std::string &test_dir, std::optional<std::uint64_t> seed, std::size_t log_every)
{
    TrainConfig config = load_train_config(config_path);
    if (auto env_out = apply_environment(config); env_out && out.empty())
        out = env_out->string();
    if (seed)
        config.seed = *seed;
    if (out.empty())
        throw UsageError("train needs --out or EDOF_OUT_DIR");
    config.validate();
    print_config("train", {{"train", to_json(config)}, {"data", data}, {"out", out}, {"resume", resume}, {"test", test_dir}});

    const auto t0 = std::chrono::steady_clock::now();
    const PatchStore store = ingest_dataset(data, config.patch_size, config.patch_overlap, config.validation_fraction);
    std::cout << "# dataset " << store.dataset_hash << " train " << store.train.size() << " validation "
              << store.validation.size() << '\n';
    TrainState state = initial_state(config);
    if (!resume.empty())
        load_state(resume, state);

    fs::create_directories(out);
    auto log = open_csv(fs::path(out) / "train_log.csv");
    log << "step,loss,data,prior,phase_grad_norm\n";
    plot::Series losses;
    const auto records = train(state, store, config, out, [&](std::int64_t step, const StepResult &r) {
        log << step << ',' << num(r.loss) << ',' << num(r.data) << ',' << num(r.prior) << ',' << num(r.phase_grad_norm)
            << '\n';
        losses.emplace_back(static_cast<double>(step), r.loss);
        if (log_every && (step % static_cast<std::int64_t>(log_every) == 0 || step == 1))
            std::cout << "step " << step << " loss " << num(r.loss) << '\n' << std::flush;
    });
    log.close();
    write_png(fs::path(out) / "loss.png", plot::line_plot({losses}));

    const std::vector<NamedImage> images = test_dir.empty() ? validation_images(store) : load_images(test_dir);
    const CameraModel camera(config.geometry, config.spectral);
    RunReport rep = evaluate(doe_system(camera, state.phase), &state.net, images, evaluation_depths(config), config.eval);
    rep.config = to_json(config);
    rep.dataset_hash = store.dataset_hash;
    rep.epochs = records;
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish_run(rep, state, config, out);
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs
{
    std::string config, checkpoint, phase, data, out, sigma_s, sigma_d, depths;
    double cubic = std::numeric_limits<double>::quiet_NaN();
    bool clear = false, no_net = false;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
};

int run_eval(const EvalArgs &a)
{
    TrainConfig config = !a.config.empty()       ? load_train_config(a.config)
                         : !a.checkpoint.empty() ? checkpoint_config(a.checkpoint)
                                                 : TrainConfig{};
    if (!a.sigma_s.empty())
        config.eval.sigma_s = number_list(a.sigma_s, "sigma_s");
    if (!a.sigma_d.empty())
        config.eval.sigma_d_m = number_list(a.sigma_d, "sigma_d");
    if (!a.depths.empty())
        config.eval.depths = depth_list(a.depths);
    if (a.trials)
        config.eval.fabrication_trials = *a.trials;
    if (a.seed)
        config.eval.seed = *a.seed;
    config.validate();

    TrainState state = initial_state(config);
    const CameraModel camera(config.geometry, config.spectral);
    bool use_net = false;
    std::string source = "clear";
    state.phase = camera.zero_phase();
    if (!a.checkpoint.empty()) {
        load_state(a.checkpoint, state);
        use_net = !a.no_net;
        source = "checkpoint:" + a.checkpoint;
    } else if (!a.phase.empty()) {
        state.phase = checked_phase(a.phase, config.geometry, config.spectral);
        source = "phase:" + a.phase;
    } else if (!std::isnan(a.cubic)) {
        state.phase = cubic_mask(a.cubic, config.geometry, config.spectral.nominal_wavelength());
        source = "cubic:" + num(a.cubic);
    }
    print_config("eval", {{"train", to_json(config)}, {"optics", source}, {"network", use_net}, {"data", a.data},
                          {"out", a.out}});

    const auto t0 = std::chrono::steady_clock::now();
    const auto images = load_images(a.data);
    RunReport rep = evaluate(doe_system(camera, state.phase), use_net ? &state.net : nullptr, images,
                             evaluation_depths(config), config.eval);
    rep.config = to_json(config);
    std::string names;
    for (const auto &im : images)
        names += im.name + ":" + hex64(image_hash(im.image)) + ";";
    rep.dataset_hash = hex64(fnv1a(std::span(reinterpret_cast<const unsigned char *>(names.data()), names.size())));
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish_run(rep, state, config, a.out);
    return 0;
}

// ---- baseline -------------------------------------------------------------

int run_baseline(const std::string &sensor_path, const std::string &psf_path, bool delta, std::optional<double> nsr,
                 const std::string &reference_path, const std::string &out)
{
    print_config("baseline", {{"sensor", sensor_path},
                              {"psf", delta ? std::string("delta") : psf_path},
                              {"nsr", nsr ? json(*nsr) : json("best-of-grid")},
                              {"reference", reference_path},
                              {"out", out}});
    const Image sensor = three_channels(read_png(sensor_path));
    std::vector<Psf> psfs;
    if (delta) {
        psfs = delta_psfs(sensor.channel_count(), 1.0);
    } else {
        const Raster r = load_raster(psf_path);
        for (std::size_t b = 0; b < r.bands; ++b)
            psfs.push_back(Psf{r.band(b), r.pitch_m, r.wavelength_m, std::nullopt});
        if (psfs.size() == 1)
            psfs.resize(sensor.channel_count(), psfs.front());
        if (psfs.size() != sensor.channel_count())
            throw ShapeError(psf_path + ": PSF bands do not match the sensor channels");
    }
    std::optional<Image> reference;
    if (!reference_path.empty())
        reference = three_channels(read_png(reference_path));
    if (!nsr && !reference)
        throw UsageError("baseline needs --nsr or a --reference to choose it");

    double chosen = nsr.value_or(0.0);
    if (!nsr) {
        double best = -std::numeric_limits<double>::infinity();
        for (double c : EvalConfig{}.nsr_candidates()) {
            const double p = psnr(*reference, wiener_deconvolve(sensor, psfs, c));
            if (p > best) {
                best = p;
                chosen = c;
            }
        }
    }
    const Image restored = wiener_deconvolve(sensor, psfs, chosen);
    write_png(out, restored, 16);

    std::ostringstream csv;
    csv << "quantity,value\nnsr," << num(chosen) << '\n';
    if (reference) {
        csv << "psnr_sensor_db," << num(psnr(*reference, sensor)) << '\n';
        csv << "psnr_wiener_db," << num(psnr(*reference, restored)) << '\n';
    }
    std::cout << csv.str();
    open_csv(fs::path(out).replace_extension(".csv")) << csv.str();
    return 0;
}

// ---- export-doe -----------------------------------------------------------

int run_export(const std::string &phase_path, double pitch, std::size_t levels, double max_depth,
               std::optional<double> opt_pitch, const std::string &out)
{
    const Raster r = load_raster(phase_path);
    if (r.bands != 1)
        throw ShapeError(phase_path + ": phase raster must have one band");
    const SpectralModel sp = SpectralModel::rgb();
    PhaseMap phase{r.band(0), r.wavelength_m};
    if (std::abs(phase.wavelength_m - sp.nominal_wavelength()) > 1e-12)
        phase = phase_transfer(phase, sp.nominal_wavelength(), sp);
    const double src_pitch = opt_pitch.value_or(r.pitch_m);
    if (!(src_pitch > 0.0))
        throw UsageError("phase raster has no pitch; pass --optimization-pitch");
    ExportConfig cfg{pitch, max_depth, levels};
    print_config("export-doe", {{"phase", phase_path},
                                {"optimization_pitch_m", src_pitch},
                                {"fabrication_pitch_m", pitch},
                                {"levels", levels},
                                {"max_depth_m", max_depth},
                                {"out", out}});
    const DoeExport e = export_doe(phase, sp, src_pitch, cfg);
    save_raster(out, Raster::from_grid(e.height.values_m, e.height.pitch_m, sp.nominal_wavelength(), SampleType::Float64));
    write_png(fs::path(out).replace_extension(".png"), plot::heatmap(e.height.values_m));

    std::ostringstream csv;
    csv << "quantity,value\n";
    csv << "upsampling," << num(e.upsampling) << '\n';
    csv << "rows," << e.height.values_m.rows() << '\n';
    csv << "cols," << e.height.values_m.cols() << '\n';
    csv << "wrap_period_m," << num(e.wrap_period_m) << '\n';
    csv << "level_step_m," << num(e.level_step_m) << '\n';
    csv << "max_level," << e.max_level << '\n';
    const double f = e.upsampling;
    if (std::abs(f - std::round(f)) < 1e-9 && static_cast<long>(std::round(f)) % 2 == 1) {
        csv << "round_trip_error_rad," << num(export_round_trip_error(e, phase, sp, src_pitch)) << '\n';
        if (e.level_step_m > 0.0)
            csv << "half_level_phase_rad," << num(0.5 * level_phase_step(e, sp)) << '\n';
    }
    std::cout << csv.str();
    open_csv(fs::path(out).replace_extension(".csv")) << csv.str();
    return 0;
}

// ---- check-grad -----------------------------------------------------------

int run_check_grad(std::size_t grid, std::uint64_t seed, std::size_t samples, double step, double tolerance,
                   const std::string &csv_path)
{
    CameraGeometry g = CameraGeometry::reference();
    g.pupil_pitch_m = 2.0 * g.aperture_radius_m / static_cast<double>(grid);
    g.grid_side = grid;
    g.psf_size = 31;
    const SpectralModel sp = SpectralModel::rgb();
    print_config("check-grad", {{"geometry", to_json(g)}, {"spectral", to_json(sp)}, {"seed", seed},
                                {"samples", samples}, {"step", step}, {"tolerance", tolerance}});
    const CameraModel camera(g, sp);

    Rng rng = make_rng(seed, {1});
    std::uniform_real_distribution<double> u(-1.0, 1.0), diopter(0.0, 2.0);
    const RealGrid mask = aperture_mask(g);
    PhaseMap phase = camera.zero_phase();
    for (std::size_t i = 0; i < phase.values_rad.size(); ++i)
        phase.values_rad[i] = mask[i] * 3.0 * u(rng);
    const Depth z = Depth::diopters(diopter(rng));
    std::vector<RealGrid> weights(sp.channels(), RealGrid(g.psf_size, g.psf_size));
    for (auto &w : weights)
        for (auto &v : w)
            v = u(rng);

    const auto loss = [&](const RealGrid &x) {
        double l = 0.0;
        for (std::size_t c = 0; c < sp.channels(); ++c) {
            const RealGrid &h = camera.psf_forward(PhaseMap{x, phase.wavelength_m}, z, c).psf.values;
            for (std::size_t i = 0; i < h.size(); ++i)
                l += weights[c][i] * h[i];
        }
        return l;
    };
    const auto gradient = [&](const RealGrid &x) {
        std::vector<RealGrid> per;
        for (std::size_t c = 0; c < sp.channels(); ++c)
            per.push_back(psf_vjp(camera.psf_forward(PhaseMap{x, phase.wavelength_m}, z, c).tape, weights[c]));
        return wavelength_grad_accumulate(per, sp);
    };
    const GradCheckResult r = finite_diff_check(loss, gradient, phase.values_rad, step, samples, seed, mask);

    std::ostringstream csv;
    csv << "grid,depth_m,samples,step,max_rel_error,worst_index,analytic,numeric,tolerance,pass\n";
    csv << grid << ',' << format_depth(z) << ',' << r.samples << ',' << num(step) << ',' << num(r.max_rel_error) << ','
        << r.worst_index << ',' << num(r.worst_analytic) << ',' << num(r.worst_numeric) << ',' << num(tolerance) << ','
        << (r.max_rel_error <= tolerance ? 1 : 0) << '\n';
    std::cout << csv.str();
    if (!csv_path.empty())
        open_csv(csv_path) << csv.str();
    std::cout << "max relative error " << num(r.max_rel_error) << '\n';
    return r.max_rel_error <= tolerance ? 0 : kNumeric;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Extended depth-of-field camera: optics analysis, simulation, joint training and export"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

    std::string geometry = "reference", range = "0.5,inf", csv;
    auto *analyze = app.add_subcommand("analyze", "Defocus range and pupil sampling bound of a geometry");
    analyze->add_option("--geometry", geometry, "Geometry JSON file or preset (reference, toy)");
    analyze->add_option("--depth-range", range, "z_min,z_max in meters (inf allowed)");
    analyze->add_option("--csv", csv, "Also write the report to this file");

    SimulateArgs sim;
    auto *simulate = app.add_subcommand("simulate", "Render a sensor image, PSFs and MTFs");
    simulate->add_option("--geometry", sim.geometry, "Geometry JSON file or preset");
    auto *optics = simulate->add_option_group("optics");
    optics->add_option("--phase", sim.phase, "DOE phase raster");
    optics->add_option("--cubic", sim.cubic, "Cubic phase plate strength (rad)");
    optics->add_flag("--clear", sim.clear, "No DOE");
    optics->require_option(1);
    simulate->add_option("--image", sim.image, "Scene PNG (or band raster with --hyperspectral)")->required();
    simulate->add_option("--depth", sim.depth, "Scene depth in meters (inf allowed)");
    simulate->add_option("--depth-map", sim.depth_map, "Per-pixel depth map (CSV or raster, meters)");
    simulate->add_option("--depth-step", sim.depth_step, "Layer width for --depth-map (m)")->check(CLI::PositiveNumber);
    simulate->add_flag("--hyperspectral", sim.hyperspectral, "Treat --image as a band raster");
    simulate->add_option("--response", sim.response, "Sensor spectral response CSV");
    simulate->add_option("--mtf-depths", sim.mtf_depths, "Extra depths for PSF/MTF output");
    simulate->add_option("--sigma-s", sim.sigma_s, "Sensor noise std")->check(CLI::NonNegativeNumber);
    simulate->add_option("--seed", sim.seed, "Noise seed");
    simulate->add_option("--out", sim.out, "Output directory")->required();

    std::string config, data, out, resume, test;
    std::optional<std::uint64_t> train_seed;
    std::size_t log_every = 50;
    auto *train_cmd = app.add_subcommand("train", "Jointly optimize the DOE phase and the deblurring network");
    train_cmd->add_option("--config", config, "Training config JSON")->required();
    train_cmd->add_option("--data", data, "Directory of training images")->required();
    train_cmd->add_option("--out", out, "Output directory (or EDOF_OUT_DIR)");
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--test", test, "Directory of test images (default: validation patches)");
    train_cmd->add_option("--seed", train_seed, "Overrides the config seed and EDOF_SEED");
    train_cmd->add_option("--log-every", log_every, "Print the loss every N steps (0: never)");

    EvalArgs ev;
    auto *eval_cmd = app.add_subcommand("eval", "Evaluate a system over depths and noise levels");
    eval_cmd->add_option("--config", ev.config, "Training config JSON (default: from the checkpoint)");
    auto *eval_optics = eval_cmd->add_option_group("optics");
    eval_optics->add_option("--checkpoint", ev.checkpoint, "Trained state (phase and network)");
    eval_optics->add_option("--phase", ev.phase, "DOE phase raster, no network");
    eval_optics->add_option("--cubic", ev.cubic, "Cubic phase plate strength (rad), no network");
    eval_optics->add_flag("--clear", ev.clear, "No DOE, no network");
    eval_optics->require_option(1);
    eval_cmd->add_flag("--no-net", ev.no_net, "Skip the network of the checkpoint");
    eval_cmd->add_option("--data", ev.data, "Directory of test images")->required();
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();
    eval_cmd->add_option("--sigma-s", ev.sigma_s, "Comma-separated sensor noise levels");
    eval_cmd->add_option("--sigma-d", ev.sigma_d, "Comma-separated fabrication noise levels (m)");
    eval_cmd->add_option("--depths", ev.depths, "Comma-separated depths (m, inf allowed)");
    eval_cmd->add_option("--trials", ev.trials, "Fabrication noise realizations per sigma_d");
    eval_cmd->add_option("--seed", ev.seed, "Evaluation seed");

    std::string b_sensor, b_psf, b_reference, b_out;
    bool b_delta = false;
    std::optional<double> b_nsr;
    auto *baseline = app.add_subcommand("baseline", "Wiener deconvolution of a sensor image");
    baseline->add_option("--sensor", b_sensor, "Sensor PNG")->required();
    auto *bpsf = baseline->add_option_group("psf");
    bpsf->add_option("--psf", b_psf, "PSF raster, one band per channel");
    bpsf->add_flag("--delta", b_delta, "Unit impulse PSF");
    bpsf->require_option(1);
    baseline->add_option("--nsr", b_nsr, "Noise-to-signal ratio (default: best on the reference)")
        ->check(CLI::NonNegativeNumber);
    baseline->add_option("--reference", b_reference, "Sharp reference PNG for PSNR");
    baseline->add_option("--out", b_out, "Restored PNG")->required();

    std::string e_phase, e_out;
    double e_pitch = 3e-6, e_max_depth = 1.2e-6;
    std::size_t e_levels = 98;
    std::optional<double> e_opt_pitch;
    auto *export_cmd = app.add_subcommand("export-doe", "Fabrication height map of a DOE phase");
    export_cmd->add_option("--phase", e_phase, "DOE phase raster")->required();
    export_cmd->add_option("--pitch", e_pitch, "Fabrication pitch (m)")->check(CLI::PositiveNumber);
    export_cmd->add_option("--levels", e_levels, "Gray levels (0: no quantization)");
    export_cmd->add_option("--max-depth", e_max_depth, "Maximum feature depth (m)")->check(CLI::PositiveNumber);
    export_cmd->add_option("--optimization-pitch", e_opt_pitch, "Phase pitch (default: from the raster)");
    export_cmd->add_option("--out", e_out, "Height raster")->required();

    std::size_t g_grid = 32, g_samples = 64;
    std::uint64_t g_seed = 1;
    double g_step = 1e-5, g_tol = 1e-4;
    std::string g_csv;
    auto *check = app.add_subcommand("check-grad", "Analytic PSF gradient against finite differences");
    check->add_option("--grid", g_grid, "Pupil grid side")->check(CLI::Range(4, 1024));
    check->add_option("--seed", g_seed, "Seed for phase, depth and upstream");
    check->add_option("--samples", g_samples, "Coordinates checked")->check(CLI::PositiveNumber);
    check->add_option("--step", g_step, "Central difference step (rad)")->check(CLI::PositiveNumber);
    check->add_option("--tolerance", g_tol, "Maximum relative error")->check(CLI::PositiveNumber);
    check->add_option("--csv", g_csv, "Also write the result to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        set_thread_count(threads);
        if (*analyze)
            return run_analyze(geometry, range, csv);
        if (*simulate)
            return run_simulate(sim);
        if (*train_cmd)
            return run_train(config, data, out, resume, test, train_seed, log_every);
        if (*eval_cmd)
            return run_eval(ev);
        if (*baseline)
            return run_baseline(b_sensor, b_psf, b_delta, b_nsr, b_reference, b_out);
        if (*export_cmd)
            return run_export(e_phase, e_pitch, e_levels, e_max_depth, e_opt_pitch, e_out);
        if (*check)
            return run_check_grad(g_grid, g_seed, g_samples, g_step, g_tol, g_csv);
    } catch (const UsageError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const DomainError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError &e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError &e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const NumericError &e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
