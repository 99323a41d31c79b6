#include <catch_amalgamated.hpp>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>
#include <type_traits>

#include "edof/checkpoint.hpp"
#include "edof/error.hpp"
#include "edof/pipeline/config.hpp"
#include "edof/pipeline/dataset.hpp"
#include "edof/pipeline/evaluate.hpp"
#include "edof/pipeline/export.hpp"
#include "edof/pipeline/train.hpp"
#include "support.hpp"

using namespace edof;
using namespace edof::pipeline;
using Catch::Matchers::WithinAbs;

namespace
{

Image random_image(std::size_t side, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    Image im;
    for (std::uint64_t c = 0; c < 3; ++c)
        im.channels.push_back(test::random_grid(side, side, seed * 3 + c, lo, hi));
    return im;
}

// Toy optics with a small network, sized for unit tests.
TrainConfig small_config()
{
    TrainConfig c = TrainConfig::toy();
    c.patch_size = 32;
    c.batch_size = 2;
    c.net.width = 8;
    c.net.dilations = {1, 2};
    c.seed = 5;
    return c;
}

std::vector<Patch> patches_of(std::size_t count, std::size_t side, std::uint64_t seed)
{
    std::vector<Patch> out;
    for (std::size_t i = 0; i < count; ++i) {
        Patch p;
        p.image = dead_leaves(side, seed + i);
        p.hash = image_hash(p.image);
        p.source = "p" + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::vector<float>> parameter_values(TrainState &s)
{
    std::vector<std::vector<float>> v;
    for (auto *p : s.net.parameters())
        v.push_back(p->value);
    return v;
}

} // namespace

TEST_CASE("600x600 image tiles into four 300 patches", "[pipeline][dataset]")
{
    const Image im = random_image(600, 1);
    const auto tiles = tile_image(im, 300, 0, "a");
    REQUIRE(tiles.size() == 4);
    CHECK(tiles[1].row == 0);
    CHECK(tiles[1].col == 300);
    CHECK(tiles[2].row == 300);
    CHECK(tiles[3].image.channels[2](299, 299) == im.channels[2](599, 599));
    CHECK(tile_image(im, 300, 100, "a").size() == 4);
    CHECK(tile_image(im, 200, 100, "a").size() == 25);
    CHECK(tile_image(random_image(250, 2), 300, 0, "b").empty());
}

TEST_CASE("validation split is disjoint and sized", "[pipeline][dataset]")
{
    const PatchStore s = split_patches(patches_of(100, 16, 10), 0.10);
    REQUIRE(s.train.size() == 90);
    REQUIRE(s.validation.size() == 10);
    std::set<std::uint64_t> train;
    for (const auto &p : s.train)
        train.insert(p.hash);
    for (const auto &p : s.validation)
        CHECK(train.count(p.hash) == 0);
    // Training keeps tiling order.
    for (std::size_t i = 1; i < s.train.size(); ++i)
        CHECK(std::stoi(s.train[i - 1].source.substr(1)) < std::stoi(s.train[i].source.substr(1)));

    CHECK(split_patches(patches_of(3, 16, 1), 0.01).validation.size() == 1);
    CHECK(split_patches(patches_of(3, 16, 1), 0.99).train.size() == 1);
}

TEST_CASE("re-ingestion of an unchanged directory is identical", "[pipeline][dataset]")
{
    test::TempDir dir("ingest");
    write_dead_leaves(dir.path(), 5, 64, 3);
    const PatchStore a = ingest_dataset(dir.path(), 32, 0, 0.2);
    const PatchStore b = ingest_dataset(dir.path(), 32, 0, 0.2);
    REQUIRE(a.train.size() + a.validation.size() == 20);
    CHECK(a.validation.size() == 4);
    CHECK(a.dataset_hash == b.dataset_hash);
    CHECK(a.dataset_hash.size() == 16);
    for (std::size_t i = 0; i < a.validation.size(); ++i)
        CHECK(a.validation[i].hash == b.validation[i].hash);
    for (std::size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train[i].hash == b.train[i].hash);

    write_dead_leaves(dir.path(), 6, 64, 3);
    CHECK(ingest_dataset(dir.path(), 32, 0, 0.2).dataset_hash != a.dataset_hash);
}

TEST_CASE("ingestion without images is an error", "[pipeline][dataset]")
{
    test::TempDir dir("empty");
    std::ofstream(dir.path() / "notes.txt") << "x";
    CHECK_THROWS_AS(ingest_dataset(dir.path(), 32, 0, 0.1), IoError);
    CHECK_THROWS_AS(ingest_dataset(dir.path() / "missing", 32, 0, 0.1), IoError);
}

TEST_CASE("degenerate depth range always samples its depth", "[pipeline][depth]")
{
    DepthRange r{Depth::meters(1.0), Depth::meters(1.0)};
    Rng rng(1);
    for (int i = 0; i < 100; ++i)
        CHECK(sample_depth(r, rng).meters() == 1.0);
}

TEST_CASE("depth samples are uniform in diopters", "[pipeline][depth]")
{
    const DepthRange r;
    Rng rng(2024);
    constexpr int n = 100000, bins = 20;
    std::vector<int> hist(bins, 0);
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) {
        d[i] = sample_depth(r, rng).diopters();
        REQUIRE(d[i] >= 0.0);
        REQUIRE(d[i] <= 2.0);
        ++hist[std::min(bins - 1, static_cast<int>(d[i] / 2.0 * bins))];
    }
    const double expected = static_cast<double>(n) / bins;
    double chi2 = 0.0;
    for (int h : hist)
        chi2 += (h - expected) * (h - expected) / expected;
    // 19 degrees of freedom: the 0.999 quantile is 43.8.
    CHECK(chi2 < 43.8);

    std::nth_element(d.begin(), d.begin() + n / 2, d.end());
    CHECK_THAT(d[n / 2], WithinAbs(1.0, 0.02));
}

TEST_CASE("depth levels span the range in even diopter steps", "[pipeline][depth]")
{
    const auto lv = depth_levels(DepthRange{}, 8);
    REQUIRE(lv.size() == 8);
    CHECK(lv.front().diopters() == 2.0);
    CHECK(lv.back().is_infinite());
    for (std::size_t i = 1; i < lv.size(); ++i)
        CHECK_THAT(lv[i - 1].diopters() - lv[i].diopters(), WithinAbs(2.0 / 7.0, 1e-12));
    CHECK(nearest_level(lv, Depth::meters(1.0)) == 3);
    CHECK(nearest_level(lv, Depth::infinity()) == 7);
}

TEST_CASE("batches depend only on seed and step", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const auto train = patches_of(7, 32, 100);
    const Batch a = make_batch(train, c, 11), b = make_batch(train, c, 11), other = make_batch(train, c, 12);
    CHECK(a.images == b.images);
    CHECK(a.depths == b.depths);
    CHECK(a.sigma_s == b.sigma_s);
    CHECK(a.noise_seed == b.noise_seed);
    CHECK(a.noise_seed != other.noise_seed);

    // Every sampled depth is a configured level inside the range.
    const auto lv = depth_levels(c.depth_range, c.depth_levels);
    for (std::int64_t t = 0; t < 200; ++t) {
        const Batch bt = make_batch(train, c, t);
        REQUIRE(bt.images.size() == c.batch_size);
        for (std::size_t i = 0; i < bt.depths.size(); ++i) {
            CHECK(std::find(lv.begin(), lv.end(), bt.depths[i]) != lv.end());
            CHECK(bt.sigma_s[i] >= c.sigma_s_lo);
            CHECK(bt.sigma_s[i] <= c.sigma_s_hi);
        }
    }
}

TEST_CASE("every training PSF lies within the configured defocus", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const double psi_max = camera.max_defocus(c.depth_range);
    for (Depth z : depth_levels(c.depth_range, c.depth_levels))
        for (std::size_t ch = 0; ch < camera.channels(); ++ch)
            CHECK(std::abs(camera.defocus(z, ch)) <= psi_max * (1 + 1e-12));

    Batch bad;
    const Image im = random_image(32, 3);
    bad.images = {&im};
    bad.depths = {Depth::meters(0.2)};
    bad.sigma_s = {0.01};
    CHECK_THROWS_AS(render_batch(bad, camera.zero_phase(), camera, c.depth_range), StateError);
}

TEST_CASE("the network has no depth input", "[pipeline][train]")
{
    static_assert(std::is_same_v<decltype(&net::DeblurNet::forward), net::Tensor4 (net::DeblurNet::*)(const net::Tensor4 &, bool)>);
    const TrainConfig c = small_config();
    TrainState s = initial_state(c);
    CHECK(s.net.config().channels == c.spectral.channels());
}

TEST_CASE("phase gradient of the rendering chain matches finite differences", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const Image im0 = random_image(32, 7, 0.25, 0.75), im1 = random_image(32, 8, 0.25, 0.75);
    Batch batch;
    batch.images = {&im0, &im1};
    batch.depths = {Depth::meters(0.7), Depth::meters(3.0)};
    batch.sigma_s = {0.0, 0.0};

    PhaseMap phase = camera.zero_phase();
    const RealGrid init = test::random_grid(phase.values_rad.rows(), phase.values_rad.cols(), 41, -2.0, 2.0);
    phase.values_rad = init;

    const BatchRender r = render_batch(batch, phase, camera, c.depth_range);
    net::Tensor4 up(r.sensor.n, r.sensor.c, r.sensor.h, r.sensor.w);
    Rng rng(9);
    std::uniform_int_distribution<int> level(-8, 8);
    for (auto &v : up.values)
        v = static_cast<float>(level(rng)) / 8.0f; // exact in both precisions
    const RealGrid analytic = phase_gradient(r, up, camera);

    // Independent path: double-precision PSFs and direct planar blur.
    const auto loss = [&](const PhaseMap &p) {
        double l = 0.0;
        for (std::size_t b = 0; b < 2; ++b) {
            const Image s = blur_planar(*batch.images[b], camera.psfs(p, batch.depths[b]));
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t i = 0; i < s.channels[ch].size(); ++i)
                    l += static_cast<double>(up.channel(b, ch)[i]) * s.channels[ch][i];
        }
        return l;
    };

    double scale = 0.0;
    for (double g : analytic)
        scale = std::max(scale, std::abs(g));
    REQUIRE(scale > 0.0);
    const double h = 1e-5;
    std::uniform_int_distribution<std::size_t> pick(0, init.size() - 1);
    double worst = 0.0;
    for (int k = 0; k < 12; ++k) {
        const std::size_t i = pick(rng);
        PhaseMap plus = phase, minus = phase;
        plus.values_rad[i] += h;
        minus.values_rad[i] -= h;
        const double numeric = (loss(plus) - loss(minus)) / (2 * h);
        worst = std::max(worst, std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-2 * scale}));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("identical seeds give identical training steps", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const auto train = patches_of(6, 32, 200);
    test::TempDir dump("det");
    TrainState a = initial_state(c), b = initial_state(c);
    for (std::int64_t t = 0; t < 2; ++t) {
        const StepResult ra = train_step(a, make_batch(train, c, t), camera, c, dump.path());
        const StepResult rb = train_step(b, make_batch(train, c, t), camera, c, dump.path());
        CHECK(ra.loss == rb.loss);
    }
    CHECK(parameter_values(a) == parameter_values(b));
    CHECK(test::max_abs_diff(a.phase.values_rad, b.phase.values_rad) == 0.0);
    CHECK(a.step == 2);
}

TEST_CASE("thread count does not change a training step", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const auto train = patches_of(6, 32, 300);
    test::TempDir dump("threads");
    TrainState a = initial_state(c), b = initial_state(c);
    set_thread_count(1);
    train_step(a, make_batch(train, c, 0), camera, c, dump.path());
    set_thread_count(3);
    train_step(b, make_batch(train, c, 0), camera, c, dump.path());
    set_thread_count(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    CHECK(parameter_values(a) == parameter_values(b));
    CHECK(test::max_abs_diff(a.phase.values_rad, b.phase.values_rad) == 0.0);
}

TEST_CASE("zero learning rates leave parameters unchanged", "[pipeline][train]")
{
    TrainConfig c = small_config();
    c.adam.lr = 0.0;
    c.phase_lr = 0.0;
    const CameraModel camera(c.geometry, c.spectral);
    const auto train = patches_of(6, 32, 400);
    test::TempDir dump("lr0");
    TrainState s = initial_state(c);
    const auto before = parameter_values(s);
    const RealGrid phase_before = s.phase.values_rad;
    const Batch batch = make_batch(train, c, 0);
    const double l1 = train_step(s, batch, camera, c, dump.path()).loss;
    const double l2 = train_step(s, batch, camera, c, dump.path()).loss;
    CHECK(l1 == l2);
    CHECK(parameter_values(s) == before);
    CHECK(test::max_abs_diff(s.phase.values_rad, phase_before) == 0.0);
}

TEST_CASE("non-finite loss aborts with a diagnostic dump", "[pipeline][train]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const auto train = patches_of(4, 32, 500);
    test::TempDir dump("nan");
    TrainState s = initial_state(c);
    s.net.parameters().front()->value[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(train_step(s, make_batch(train, c, 0), camera, c, dump.path()), NumericError);
    CHECK(std::filesystem::exists(dump.path() / "diagnostic_step_1" / "state.ckpt"));
    CHECK(std::filesystem::exists(dump.path() / "diagnostic_step_1" / "phase.raster"));
    CHECK(s.step == 0);
}

TEST_CASE("200 toy steps reduce the training loss by 30 percent", "[pipeline][train][slow]")
{
    TrainConfig c = TrainConfig::toy();
    test::TempDir data("smoke");
    write_dead_leaves(data.path(), 16, 64, 21);
    const PatchStore store = ingest_dataset(data.path(), c.patch_size, 0, c.validation_fraction);
    const CameraModel camera(c.geometry, c.spectral);
    TrainState s = initial_state(c);
    std::vector<double> losses;
    for (std::int64_t t = 0; t < 200; ++t)
        losses.push_back(train_step(s, make_batch(store.train, c, t), camera, c, data.path()).loss);
    const double tail = std::accumulate(losses.end() - 20, losses.end(), 0.0) / 20.0;
    INFO("first " << losses.front() << " last-20 mean " << tail);
    CHECK(tail <= 0.7 * losses.front());
}

TEST_CASE("delta PSF evaluation is limited only by noise", "[pipeline][evaluate]")
{
    std::vector<NamedImage> images;
    for (std::uint64_t i = 0; i < 3; ++i)
        images.push_back({"im" + std::to_string(i), random_image(32, 50 + i, 0.2, 0.8)});
    const auto depths = depth_levels(DepthRange{}, 4);
    EvalConfig ec;
    ec.sigma_s = {0.01};
    ec.sigma_d_m = {0.0};
    net::DeblurNet net(net::NetConfig::miniature(), 3);
    net.set_pass_through();
    const RunReport rep = evaluate(fixed_system(delta_psfs(3, 5e-6)), &net, images, depths, ec);
    REQUIRE(rep.rows.size() == 12);
    const double noise_limit = -20.0 * std::log10(0.01);
    CHECK_THAT(rep.mean_sensor(), WithinAbs(noise_limit, 0.1));
    for (const auto &row : rep.rows)
        CHECK(row.psnr_output >= row.psnr_sensor - 0.5);
}

TEST_CASE("evaluation sweeps have one row per combination", "[pipeline][evaluate]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    std::vector<NamedImage> images;
    for (std::uint64_t i = 0; i < 2; ++i)
        images.push_back({"im" + std::to_string(i), dead_leaves(32, 60 + i)});
    const auto depths = depth_levels(c.depth_range, 3);
    const PhaseMap phase = initial_state(c).phase;

    EvalConfig noise;
    noise.sigma_s = {0.005, 0.009, 0.015, 0.020};
    noise.sigma_d_m = {0.0};
    const RunReport a = evaluate(doe_system(camera, phase), nullptr, images, depths, noise);
    CHECK(a.rows.size() == 2 * 3 * 4);
    CHECK(a.wiener_nsr.size() == 4);
    for (const auto &row : a.rows)
        CHECK(row.psnr_output == row.psnr_sensor);
    CHECK(a.mean_sensor(0.005) > a.mean_sensor(0.020));

    EvalConfig fab;
    fab.sigma_s = {0.005};
    fab.sigma_d_m = {20e-9, 30e-9, 40e-9, 50e-9};
    fab.fabrication_trials = 2;
    const RunReport b = evaluate(doe_system(camera, phase), nullptr, images, depths, fab);
    CHECK(b.rows.size() == 2 * 3 * 4 * 2);
    std::set<double> sd;
    for (const auto &row : b.rows)
        sd.insert(row.sigma_d_m);
    CHECK(sd.size() == 4);

    test::TempDir out("report");
    b.write(out.path());
    for (const char *f : {"report.csv", "depth_psnr.csv", "epochs.csv", "summary.txt", "config.json", "timing.txt"})
        CHECK(std::filesystem::exists(out.path() / f));
    std::ifstream in(out.path() / "report.csv");
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);)
        ++lines;
    CHECK(lines == b.rows.size() + 1);
}

TEST_CASE("checkpoint round trip preserves evaluation metrics", "[pipeline][checkpoint]")
{
    const TrainConfig c = small_config();
    const CameraModel camera(c.geometry, c.spectral);
    const auto train = patches_of(6, 32, 600);
    test::TempDir dir("ckpt");
    TrainState s = initial_state(c);
    for (std::int64_t t = 0; t < 3; ++t)
        train_step(s, make_batch(train, c, t), camera, c, dir.path());
    save_state(dir.path() / "s.ckpt", s, c);

    TrainConfig other = c;
    other.seed = 99;
    TrainState loaded = initial_state(other);
    load_state(dir.path() / "s.ckpt", loaded);
    CHECK(loaded.step == 3);
    CHECK(test::max_abs_diff(loaded.phase.values_rad, s.phase.values_rad) == 0.0);
    CHECK(loaded.phase_m == s.phase_m);
    CHECK(loaded.phase_v == s.phase_v);

    std::vector<NamedImage> images{{"a", dead_leaves(32, 70)}};
    EvalConfig ec;
    const auto depths = depth_levels(c.depth_range, 2);
    const RunReport before = evaluate(doe_system(camera, s.phase), &s.net, images, depths, ec);
    const RunReport after = evaluate(doe_system(camera, loaded.phase), &loaded.net, images, depths, ec);
    REQUIRE(before.rows.size() == after.rows.size());
    for (std::size_t i = 0; i < before.rows.size(); ++i) {
        CHECK(before.rows[i].psnr_output == after.rows[i].psnr_output);
        CHECK(before.rows[i].psnr_sensor == after.rows[i].psnr_sensor);
    }

    // Training continues identically from the loaded state.
    train_step(s, make_batch(train, c, 3), camera, c, dir.path());
    train_step(loaded, make_batch(train, c, 3), camera, c, dir.path());
    CHECK(parameter_values(s) == parameter_values(loaded));
}

TEST_CASE("phase raster round trip is exact", "[pipeline][checkpoint]")
{
    const TrainConfig c = small_config();
    PhaseMap p = initial_state(c).phase;
    test::TempDir dir("phase");
    save_phase(dir.path() / "p.raster", p, c.geometry);
    const PhaseMap q = load_phase(dir.path() / "p.raster");
    CHECK(q.wavelength_m == p.wavelength_m);
    CHECK(test::max_abs_diff(q.values_rad, p.values_rad) == 0.0);
}

TEST_CASE("config round trips through JSON and rejects unknown keys", "[pipeline][config]")
{
    TrainConfig c = TrainConfig::toy();
    c.seed = 17;
    c.eval.sigma_s = {0.005, 0.02};
    const nlohmann::json j = to_json(c);
    CHECK(to_json(train_config_from_json(j)) == j);

    nlohmann::json bad = j;
    bad["learning_rate"] = 1.0;
    CHECK_THROWS_AS(train_config_from_json(bad), DomainError);
    nlohmann::json invalid = j;
    invalid["validation_fraction"] = 1.0;
    CHECK_THROWS_AS(train_config_from_json(invalid), DomainError);
    nlohmann::json swapped = j;
    swapped["sigma_s_lo"] = 0.02;
    CHECK_THROWS_AS(train_config_from_json(swapped), DomainError);

    const TrainConfig t = train_config_from_json(nlohmann::json{{"preset", "toy"}, {"steps", 10}});
    CHECK(t.patch_size == 64);
    CHECK(t.steps == 10);
    const TrainConfig d = train_config_from_json(nlohmann::json::object());
    CHECK(d.patch_size == 300);
    CHECK(d.batch_size == 4);
    CHECK(d.epochs == 73);
}

TEST_CASE("environment overrides seed and output directory", "[pipeline][config]")
{
    TrainConfig c;
    ::setenv("EDOF_SEED", "123", 1);
    ::setenv("EDOF_OUT_DIR", "/tmp/somewhere", 1);
    const auto out = apply_environment(c);
    ::unsetenv("EDOF_SEED");
    ::unsetenv("EDOF_OUT_DIR");
    CHECK(c.seed == 123);
    REQUIRE(out.has_value());
    CHECK(*out == "/tmp/somewhere");

    TrainConfig untouched;
    CHECK_FALSE(apply_environment(untouched).has_value());
    CHECK(untouched.seed == 0);

    ::setenv("EDOF_SEED", "abc", 1);
    CHECK_THROWS_AS(apply_environment(untouched), DomainError);
    ::unsetenv("EDOF_SEED");
}

TEST_CASE("export upsamples 21 um to 3 um by 7 per axis", "[pipeline][export]")
{
    const CameraGeometry g = CameraGeometry::reference();
    const SpectralModel sp = SpectralModel::rgb();
    PhaseMap p{test::random_grid(g.grid_side, g.grid_side, 3, -20.0, 20.0), sp.nominal_wavelength()};
    const DoeExport e = export_doe(p, sp, g.pupil_pitch_m, ExportConfig{});
    CHECK_THAT(e.upsampling, WithinAbs(7.0, 1e-12));
    CHECK(e.height.values_m.rows() == 7 * g.grid_side);
    CHECK(e.height.pitch_m == 3e-6);
}

TEST_CASE("98-level export lies on the lattice and round trips within half a step", "[pipeline][export]")
{
    const SpectralModel sp = SpectralModel::rgb();
    const double pitch = 21e-6;
    // Smooth phase spanning several wraps.
    RealGrid v(40, 40);
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t c = 0; c < 40; ++c)
            v(r, c) = 0.02 * (static_cast<double>(r * r) + 0.5 * static_cast<double>(c * c)) - 10.0;
    const PhaseMap p{v, sp.nominal_wavelength()};
    const ExportConfig cfg;
    const DoeExport e = export_doe(p, sp, pitch, cfg);
    REQUIRE(e.level_step_m > 0.0);
    CHECK_THAT(e.level_step_m, WithinAbs(1.2e-6 / 97.0, 1e-18));
    for (double h : e.height.values_m) {
        const double k = h / e.level_step_m;
        CHECK(std::abs(k - std::round(k)) < 1e-9);
        CHECK(h >= 0.0);
        CHECK(h <= 1.2e-6 * (1 + 1e-12));
    }
    CHECK(export_round_trip_error(e, p, sp, pitch) <= 0.5 * level_phase_step(e, sp) + 1e-12);
}

TEST_CASE("unquantized export at the same pitch is lossless", "[pipeline][export]")
{
    const SpectralModel sp = SpectralModel::rgb();
    const PhaseMap p{test::random_grid(24, 24, 5, 0.0, 3.0), sp.nominal_wavelength()};
    ExportConfig cfg;
    cfg.fabrication_pitch_m = 21e-6;
    cfg.max_depth_m = 10e-6;
    cfg.levels = 0;
    const DoeExport e = export_doe(p, sp, 21e-6, cfg);
    CHECK(e.upsampling == 1.0);
    CHECK(export_round_trip_error(e, p, sp, 21e-6) < 1e-9);

    cfg.fabrication_pitch_m = 30e-6;
    CHECK_THROWS_AS(export_doe(p, sp, 21e-6, cfg), DomainError);
}

TEST_CASE("bicubic upsampling reproduces linear ramps in the interior", "[pipeline][export]")
{
    RealGrid g(10, 10);
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t c = 0; c < 10; ++c)
            g(r, c) = 2.0 * static_cast<double>(r) - 0.5 * static_cast<double>(c);
    const RealGrid up = bicubic_resample(g, 3.0, 30, 30, 1.0);
    for (std::size_t i = 6; i < 24; ++i)
        for (std::size_t j = 6; j < 24; ++j) {
            const double y = (static_cast<double>(i) + 0.5) / 3.0 - 0.5, x = (static_cast<double>(j) + 0.5) / 3.0 - 0.5;
            CHECK_THAT(up(i, j), WithinAbs(2.0 * y - 0.5 * x, 1e-12));
        }
}
