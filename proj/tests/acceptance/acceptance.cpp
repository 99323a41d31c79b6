// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Usage: edof_acceptance [--work DIR] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "edof/autodiff.hpp"
#include "edof/pipeline/evaluate.hpp"
#include "edof/pipeline/train.hpp"
#include "edof/raster_io.hpp"
#include "edof/sensor.hpp"
#include "net_gradcheck.hpp"
#include "precise_psf.hpp"
#include "render_oracle.hpp"
#include "support.hpp"

using namespace edof;
using namespace edof::pipeline;
namespace fs = std::filesystem;

namespace
{

constexpr double kPi = std::numbers::pi;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char *f, auto... v)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

// Runs the CLI with stdout captured; returns the exit code.
int cli(const std::string &args, const fs::path &log)
{
    const std::string cmd = "'" EDOF_CLI "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> key_values(const fs::path &file)
{
    std::map<std::string, std::string> out;
    std::ifstream in(file);
    for (std::string line; std::getline(in, line);) {
        const auto comma = line.find(',');
        if (comma != std::string::npos && line.find(',', comma + 1) == std::string::npos)
            out[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return out;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- 1 --------------------------------------------------------------------

Outcome sampling_bound(const fs::path &work)
{
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli("analyze --geometry reference --depth-range 0.5,inf", work / "analyze.txt");
    const double t = seconds_since(t0);
    if (code != 0)
        return {false, fmt("analyze exited with %d", code)};
    const auto kv = key_values(work / "analyze.txt");
    const double psi = std::stod(kv.at("psi_max")), bound = std::stod(kv.at("pupil_pitch_bound_um"));
    return {psi >= 44.0 && psi <= 47.0 && bound >= 21.0 && bound <= 22.5 && t < 1.0,
            fmt("psi_max %.3f in [44,47], bound %.3f um in [21,22.5], %.2f s", psi, bound, t)};
}

// ---- 2 --------------------------------------------------------------------

Outcome gradient_oracle()
{
    const auto t0 = std::chrono::steady_clock::now();
    const SpectralModel sp = SpectralModel::rgb();
    double worst = 0.0;
    std::uint64_t seed = 200;
    for (std::size_t side : {32u, 64u})
        for (std::size_t c = 0; c < sp.channels(); ++c, ++seed) {
            const CameraGeometry g = test::geometry_with_side(side);
            const double wl = sp.wavelengths_m[c];
            const PhaseMap phase{test::random_grid(side, side, seed, -kPi, kPi), wl};
            const PhaseMap lens = lens_aberration_phase(g, wl, sp.lens_index[c]);
            const double psi = 4.0 + 3.0 * static_cast<double>(c);
            const RealGrid up = test::random_grid(g.psf_size, g.psf_size, seed + 50, -1.0, 1.0);
            test::PrecisePsf model(g, true, wl);
            test::Real base = 0.0L;
            const auto loss_raw = [&](const RealGrid &x) {
                const auto h = model(x, lens.values_rad, psi);
                test::Real acc = 0.0L;
                for (std::size_t i = 0; i < h.size(); ++i)
                    acc += static_cast<test::Real>(up[i]) * h[i];
                return acc;
            };
            base = loss_raw(phase.values_rad);
            const auto r = finite_diff_check(
                [&](const RealGrid &x) { return static_cast<double>(loss_raw(x) - base); },
                [&](const RealGrid &x) {
                    return psf_vjp(psf_forward(PhaseMap{x, wl}, lens, psi, g, true).tape, up);
                },
                phase.values_rad, 1e-5, 24, seed, aperture_mask(g));
            worst = std::max(worst, r.max_rel_error);
        }
    const double t = seconds_since(t0);
    return {worst < 1e-4 && t < 30.0, fmt("max relative error %.3g (< 1e-4), %.1f s", worst, t)};
}

// ---- 3 --------------------------------------------------------------------

Outcome energy_nullspace()
{
    const SpectralModel sp = SpectralModel::rgb();
    double sum_err = 0.0, null_err = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const std::size_t side = k % 2 ? 32 : 48;
        const std::size_t c = k % 3;
        const CameraGeometry g = test::geometry_with_side(side);
        const double wl = sp.wavelengths_m[c];
        const PhaseMap phase{test::random_grid(side, side, 300 + k, -3.0 * kPi, 3.0 * kPi), wl};
        const PhaseMap lens = lens_aberration_phase(g, wl, sp.lens_index[c]);
        const double psi = -20.0 + 0.4 * static_cast<double>(k);
        const auto f = psf_forward(phase, lens, psi, g, k % 4 != 0);
        sum_err = std::max(sum_err, std::abs(test::sum(f.psf.values) - 1.0));
        const std::size_t out = f.psf.values.rows();
        null_err = std::max(null_err, std::abs(test::sum(psf_vjp(f.tape, test::random_grid(out, out, 400 + k)))));
    }
    return {sum_err < 1e-6 && null_err < 1e-8,
            fmt("max |sum h - 1| %.3g (< 1e-6), max constant-direction gradient %.3g (< 1e-8)", sum_err, null_err)};
}

// ---- 4 --------------------------------------------------------------------

Outcome mtf_contrast()
{
    const auto t0 = std::chrono::steady_clock::now();
    CameraGeometry g;
    g.pupil_pitch_m = 31.25e-6;
    g.grid_side = 160;
    const double wl = 543e-9;
    const PhaseMap none = zero_phase(g, wl);
    const PhaseMap cubic = cubic_mask(20.0 * kPi, g, wl);
    const double bin = g.pupil_pitch_m / (wl * g.sensor_distance_m);
    const auto cutoff = static_cast<std::size_t>(incoherent_cutoff(g, wl) / bin);
    const auto profile = [&](const PhaseMap &doe, double psi) {
        return mtf_axis_profile(mtf(native_psf(generalized_pupil(doe, none, psi, g), g)));
    };
    const auto dip = [&](const std::vector<double> &p) {
        return *std::min_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(cutoff / 2));
    };
    const auto clear0 = profile(none, 0.0), clear30 = profile(none, 30.0);
    const auto cubic0 = profile(cubic, 0.0), cubic30 = profile(cubic, 30.0);
    const double vc = profile_distance(clear0, clear30, cutoff), vq = profile_distance(cubic0, cubic30, cutoff);
    const double t = seconds_since(t0);
    return {dip(clear30) < 0.01 && dip(cubic30) >= 0.01 && vq < vc && t < 10.0,
            fmt("clear dip %.4f (< 0.01), cubic dip %.4f (>= 0.01), variation cubic %.4g < clear %.4g, %.1f s",
                dip(clear30), dip(cubic30), vq, vc, t)};
}

// ---- 5 --------------------------------------------------------------------

Psf as_psf(const RealGrid &k) { return Psf{k, 6e-6, 543e-9, std::nullopt}; }

Outcome rendering_oracles()
{
    double planar = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        Image scene;
        std::vector<Psf> psfs;
        for (std::size_t c = 0; c < 3; ++c) {
            scene.channels.push_back(test::random_grid(8, 8, 500 + 10 * s + c, 0.0, 0.5));
            RealGrid k = test::random_grid(3, 3, 600 + 10 * s + c);
            const double total = test::sum(k);
            for (auto &v : k)
                v /= total;
            psfs.push_back(as_psf(k));
        }
        const SensorImage out = render_planar(scene, psfs, 0.0, 1);
        for (std::size_t c = 0; c < 3; ++c)
            planar = std::max(planar, test::max_abs_diff(out.image.channels[c],
                                                         test::nested_loop_convolution(scene.channels[c], psfs[c].values)));
    }

    Image scene;
    for (std::size_t c = 0; c < 3; ++c)
        scene.channels.push_back(test::random_grid(24, 24, 700 + c));
    const std::vector<Psf> blur{as_psf(test::gaussian_kernel(7, 1.5)), as_psf(test::gaussian_kernel(7, 1.2)),
                                as_psf(test::gaussian_kernel(7, 1.0))};
    const auto layered = render_layered(scene, RealGrid(24, 24, 2.0), [&](Depth) { return blur; }, 0.01, 1e-3, 9);
    const auto flat = render_planar(scene, blur, 0.01, 9);
    double layer = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        layer = std::max(layer, test::max_abs_diff(layered.image.channels[c], flat.image.channels[c]));

    std::vector<RealGrid> cube;
    std::vector<Psf> psfs;
    for (std::size_t b = 0; b < 4; ++b) {
        cube.push_back(test::random_grid(10, 11, 800 + b, 0.0, 0.8));
        psfs.push_back(as_psf(test::gaussian_kernel(5, 0.6 + 0.3 * static_cast<double>(b))));
    }
    const SpectralResponse resp{{450e-9, 500e-9, 550e-9, 600e-9},
                                {{0.1, 0.2, 0.9}, {0.2, 0.7, 0.5}, {0.5, 0.9, 0.1}, {0.9, 0.3, 0.0}}};
    const auto broad = render_broadband(cube, resp, psfs, 0.0, 1);
    double band = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        double total = 0.0;
        for (std::size_t b = 0; b < 4; ++b)
            total += resp.weights[b][c];
        RealGrid expect(10, 11);
        for (std::size_t b = 0; b < 4; ++b) {
            const RealGrid blurred = test::nested_loop_convolution(cube[b], psfs[b].values);
            for (std::size_t i = 0; i < expect.size(); ++i)
                expect[i] += resp.weights[b][c] / total * blurred[i];
        }
        band = std::max(band, test::max_abs_diff(broad.image.channels[c], expect));
    }
    return {planar < 1e-10 && layer <= 1e-12 && band < 1e-10,
            fmt("planar vs nested loops %.3g (< 1e-10), layered vs planar %.3g (<= 1e-12), broadband vs brute "
                "force %.3g (< 1e-10)",
                planar, layer, band)};
}

// ---- 6 --------------------------------------------------------------------

Outcome network_gradients()
{
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        const auto r = test::miniature_gradcheck(seed, 20, 1e-3);
        worst = std::max(worst, r.worst);
        checked += r.checked;
    }
    return {worst < 1e-3 && checked == 90, fmt("max relative error %.3g over %zu coordinates (< 1e-3)", worst, checked)};
}

// ---- 7, 8, 9 --------------------------------------------------------------

struct ToyRun
{
    TrainConfig config;
    PatchStore data;
    std::vector<NamedImage> test_images;
    std::unique_ptr<TrainState> state;
    RunReport report;
    double seconds = 0.0;
};

TrainConfig toy_config()
{
    TrainConfig c = TrainConfig::toy();
    c.steps = 2000;
    return c;
}

// 18 dead-leaves images: 16 train, 2 validation. 8 held-out test images.
void write_toy_data(const fs::path &work)
{
    write_dead_leaves(work / "train_images", 18, 64, 7);
    write_dead_leaves(work / "test_images", 8, 64, 99);
}

ToyRun toy_run(const fs::path &work, const fs::path &out)
{
    ToyRun r;
    const auto t0 = std::chrono::steady_clock::now();
    r.config = toy_config();
    r.data = ingest_dataset(work / "train_images", r.config.patch_size, 0, r.config.validation_fraction);
    r.test_images = load_images(work / "test_images");
    r.state = std::make_unique<TrainState>(initial_state(r.config));
    const auto epochs = train(*r.state, r.data, r.config, out, {});
    const CameraModel camera(r.config.geometry, r.config.spectral);
    r.report = evaluate(doe_system(camera, r.state->phase), &r.state->net, r.test_images, evaluation_depths(r.config),
                        r.config.eval);
    r.report.config = to_json(r.config);
    r.report.dataset_hash = r.data.dataset_hash;
    r.report.epochs = epochs;
    r.seconds = seconds_since(t0);
    r.report.wall_clock_s = r.seconds;
    r.report.write(out);
    save_state(out / "final.ckpt", *r.state, r.config);
    return r;
}

Outcome end_to_end(const ToyRun &run)
{
    EvalConfig clear_eval = run.config.eval;
    clear_eval.sigma_d_m = {0.0};
    const CameraModel camera(run.config.geometry, run.config.spectral);
    const RunReport clear = evaluate(doe_system(camera, camera.zero_phase()), nullptr, run.test_images,
                                     evaluation_depths(run.config), clear_eval);
    const double ours = run.report.mean_output(), sensor = clear.mean_sensor(), wiener = clear.mean_wiener();
    return {run.data.train.size() == 16 && ours - sensor >= 3.0 && ours - wiener >= 1.0 && run.seconds < 1800.0,
            fmt("%zu training images; learned %.2f dB vs clear sensor %.2f dB (%+.2f, >= +3) and clear + Wiener "
                "%.2f dB (%+.2f, >= +1); %.0f s",
                run.data.train.size(), ours, sensor, ours - sensor, wiener, ours - wiener, run.seconds)};
}

Outcome noise_trend(ToyRun &run)
{
    const CameraModel camera(run.config.geometry, run.config.spectral);
    const auto depths = evaluation_depths(run.config);
    const auto sweep = [&](std::vector<double> sigma_s, std::vector<double> sigma_d) {
        EvalConfig e = run.config.eval;
        e.sigma_s = sigma_s;
        e.sigma_d_m = sigma_d;
        e.fabrication_trials = 2;
        return evaluate(doe_system(camera, run.state->phase), &run.state->net, run.test_images, depths, e);
    };
    const std::vector<double> ss{0.005, 0.009, 0.015, 0.020}, sd{20e-9, 30e-9, 40e-9, 50e-9};
    const RunReport a = sweep(ss, {30e-9}), b = sweep({0.005}, sd);
    bool ok = true;
    std::string text = "sigma_s:";
    for (std::size_t i = 0; i < ss.size(); ++i) {
        const double v = a.mean_output(ss[i], -1);
        ok = ok && (i == 0 || v <= a.mean_output(ss[i - 1], -1));
        text += fmt(" %.3f", v);
    }
    text += " dB; sigma_d:";
    for (std::size_t i = 0; i < sd.size(); ++i) {
        const double v = b.mean_output(-1, sd[i]);
        ok = ok && (i == 0 || v <= b.mean_output(-1, sd[i - 1]));
        text += fmt(" %.3f", v);
    }
    return {ok, text + " dB (non-increasing)"};
}

Outcome reproducibility(const ToyRun &first, const fs::path &work)
{
    const ToyRun second = toy_run(work, work / "run_b");
    std::vector<std::string> differing;
    for (const char *f : {"report.csv", "epochs.csv", "depth_psnr.csv", "summary.txt", "config.json"}) {
        const std::string a = slurp(work / "run_a" / f), b = slurp(work / "run_b" / f);
        if (a.empty() || a != b)
            differing.emplace_back(f);
    }

    TrainState restored = initial_state(first.config);
    load_state(work / "run_a" / "final.ckpt", restored);
    const CameraModel camera(first.config.geometry, first.config.spectral);
    const RunReport again = evaluate(doe_system(camera, restored.phase), &restored.net, first.test_images,
                                     evaluation_depths(first.config), first.config.eval);
    bool same = again.rows.size() == first.report.rows.size();
    for (std::size_t i = 0; same && i < again.rows.size(); ++i)
        same = again.rows[i].psnr_sensor == first.report.rows[i].psnr_sensor &&
               again.rows[i].psnr_output == first.report.rows[i].psnr_output &&
               again.rows[i].psnr_wiener == first.report.rows[i].psnr_wiener;

    std::string text = differing.empty() ? "reports bitwise identical" : "differing:";
    for (const auto &f : differing)
        text += " " + f;
    text += same ? "; checkpoint round trip reproduces every metric" : "; checkpoint round trip changed metrics";
    return {differing.empty() && same, text};
}

// ---- 10 -------------------------------------------------------------------

Outcome export_fidelity(const fs::path &work)
{
    const CameraGeometry g = CameraGeometry::reference();
    const SpectralModel sp = SpectralModel::rgb();
    const std::size_t n = g.grid_side;
    RealGrid v(n, n);
    const double c = 0.5 * static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double y = (static_cast<double>(i) - c) / c, x = (static_cast<double>(j) - c) / c;
            v(i, j) = 12.0 * kPi * (x * x + 0.7 * y * y) + 3.0 * std::sin(5.0 * x) * std::cos(4.0 * y);
        }
    save_phase(work / "doe_phase.raster", PhaseMap{v, sp.nominal_wavelength()}, g);
    const int code = cli("export-doe --phase '" + (work / "doe_phase.raster").string() +
                             "' --pitch 3e-6 --levels 98 --max-depth 1.2e-6 --out '" + (work / "doe.raster").string() + "'",
                         work / "export.txt");
    if (code != 0)
        return {false, fmt("export-doe exited with %d", code)};
    const auto kv = key_values(work / "doe.csv");
    const double up = std::stod(kv.at("upsampling")), step = std::stod(kv.at("level_step_m"));
    const double err = std::stod(kv.at("round_trip_error_rad")), half = std::stod(kv.at("half_level_phase_rad"));
    const RealGrid h = load_raster(work / "doe.raster").band(0);
    const double lattice = 1.2e-6 / 97.0;
    double off = 0.0;
    long top = 0;
    for (double x : h) {
        const double k = x / lattice;
        off = std::max(off, std::abs(k - std::round(k)));
        top = std::max(top, std::lround(k));
    }
    const bool ok = std::abs(up - 7.0) < 1e-12 && h.rows() == 7 * n && std::abs(step / lattice - 1.0) < 1e-9 &&
                    off < 1e-9 && top <= 97 && err <= half;
    return {ok, fmt("upsampling %.0fx, %zux%zu heights, lattice offset %.2g steps, top level %ld of 97, round trip "
                    "%.6f rad <= half step %.6f rad",
                    up, h.rows(), h.cols(), off, top, err, half)};
}

} // namespace

int main(int argc, char **argv)
{
    fs::path work = fs::temp_directory_path() / "edof_acceptance";
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc)
            work = argv[++i];
        else
            wanted.push_back(std::atoi(a.c_str()));
    }
    if (wanted.empty())
        wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto want = [&](int k) { return std::find(wanted.begin(), wanted.end(), k) != wanted.end(); };
    fs::remove_all(work);
    fs::create_directories(work);

    int failures = 0;
    const auto report = [&](int k, const char *name, const std::function<Outcome()> &run) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str());
        std::fflush(stdout);
    };

    if (want(1))
        report(1, "sampling bound", [&] { return sampling_bound(work); });
    if (want(2))
        report(2, "PSF gradient oracle", gradient_oracle);
    if (want(3))
        report(3, "energy and nullspace", energy_nullspace);
    if (want(4))
        report(4, "MTF contrast", mtf_contrast);
    if (want(5))
        report(5, "rendering oracles", rendering_oracles);
    if (want(6))
        report(6, "network gradient oracle", network_gradients);
    if (want(7) || want(8) || want(9)) {
        std::optional<ToyRun> run;
        const auto ensure = [&]() -> ToyRun & {
            if (!run) {
                write_toy_data(work);
                run = toy_run(work, work / "run_a");
            }
            return *run;
        };
        if (want(7))
            report(7, "end-to-end toy optimization", [&] { return end_to_end(ensure()); });
        if (want(8))
            report(8, "noise robustness trend", [&] { return noise_trend(ensure()); });
        if (want(9))
            report(9, "reproducibility", [&] { return reproducibility(ensure(), work); });
    }
    if (want(10))
        report(10, "export fidelity", [&] { return export_fidelity(work); });
    return failures == 0 ? 0 : 1;
}
