#include "edof/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edof/checkpoint.hpp"
#include "edof/error.hpp"
#include "edof/raster_io.hpp"
#include "edof/sensor.hpp"

namespace edof::pipeline
{

namespace fs = std::filesystem;

TrainState::TrainState(PhaseMap p, net::DeblurNet n)
    : phase(std::move(p)), phase_m(phase.values_rad.size(), 0.0), phase_v(phase.values_rad.size(), 0.0),
      net(std::move(n))
{
}

TrainState initial_state(const TrainConfig &config)
{
    config.validate();
    PhaseMap phase = zero_phase(config.geometry, config.spectral.nominal_wavelength());
    const RealGrid mask = aperture_mask(config.geometry);
    Rng rng = make_rng(config.seed, {1});
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double z = n(rng);
        if (mask[i] > 0.0)
            phase.values_rad[i] = config.phase_init_std * z;
    }
    return TrainState(std::move(phase), net::DeblurNet(config.net, derive_seed(config.seed, {2})));
}

std::size_t steps_per_epoch(std::size_t train_patches, std::size_t batch_size)
{
    if (train_patches == 0)
        throw DomainError("no training patches");
    return (train_patches + batch_size - 1) / batch_size;
}

std::int64_t total_steps(const TrainConfig &config, std::size_t train_patches)
{
    if (config.steps > 0)
        return static_cast<std::int64_t>(config.steps);
    return static_cast<std::int64_t>(config.epochs * steps_per_epoch(train_patches, config.batch_size));
}

Batch make_batch(const std::vector<Patch> &train, const TrainConfig &config, std::int64_t step)
{
    const std::size_t n = train.size();
    const std::size_t spe = steps_per_epoch(n, config.batch_size);
    const auto t = static_cast<std::uint64_t>(step);
    const std::uint64_t epoch = t / spe, slot = t % spe;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle = make_rng(config.seed, {10, epoch});
    std::shuffle(perm.begin(), perm.end(), shuffle);

    const auto levels = depth_levels(config.depth_range, config.depth_levels);
    Batch b;
    for (std::size_t i = 0; i < config.batch_size; ++i) {
        b.images.push_back(&train[perm[(slot * config.batch_size + i) % n]].image);
        Rng rng = make_rng(config.seed, {11, t, i});
        b.depths.push_back(levels[nearest_level(levels, sample_depth(config.depth_range, rng))]);
        std::uniform_real_distribution<double> s(config.sigma_s_lo, config.sigma_s_hi);
        b.sigma_s.push_back(config.sigma_s_lo == config.sigma_s_hi ? config.sigma_s_lo : s(rng));
    }
    b.noise_seed = derive_seed(config.seed, {12, t});
    b.fabrication_seed = derive_seed(config.seed, {13, t});
    return b;
}

net::Tensor4 to_tensor(const std::vector<const Image *> &images)
{
    if (images.empty())
        throw ShapeError("to_tensor: no images");
    const Image &first = *images.front();
    net::Tensor4 t(images.size(), first.channel_count(), first.height(), first.width());
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Image &im = *images[b];
        if (im.channel_count() != t.c || im.height() != t.h || im.width() != t.w)
            throw ShapeError("to_tensor: images differ in shape");
        for (std::size_t c = 0; c < t.c; ++c)
            std::transform(im.channels[c].begin(), im.channels[c].end(), t.channel(b, c),
                           [](double v) { return static_cast<float>(v); });
    }
    return t;
}

Image from_tensor(const net::Tensor4 &t, std::size_t item)
{
    Image im = Image::zeros(t.c, t.h, t.w);
    for (std::size_t c = 0; c < t.c; ++c)
        std::copy_n(t.channel(item, c), t.h * t.w, im.channels[c].data());
    return im;
}

namespace
{

bool all_finite(const std::vector<float> &v)
{
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

bool all_finite(const RealGrid &g)
{
    return std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); });
}

void dump_diagnostics(const fs::path &dir, TrainState &state, const net::Tensor4 &sensor, const TrainConfig &config)
{
    fs::create_directories(dir);
    save_phase(dir / "phase.raster", state.phase, config.geometry);
    std::vector<RealGrid> bands;
    for (std::size_t b = 0; b < sensor.n; ++b)
        for (auto &ch : from_tensor(sensor, b).channels)
            bands.push_back(std::move(ch));
    save_raster(dir / "sensor.raster", Raster::from_bands(bands, config.geometry.sensor_pixel_pitch_m, 0.0));
    save_state(dir / "state.ckpt", state, config);
}

} // namespace

BatchRender render_batch(const Batch &batch, const PhaseMap &phase, const CameraModel &camera, const DepthRange &range)
{
    const std::size_t B = batch.images.size(), C = camera.channels();
    if (B == 0 || batch.depths.size() != B || batch.sigma_s.size() != B)
        throw ShapeError("render_batch: inconsistent batch");
    const double psi_max = camera.max_defocus(range);
    BatchRender r;
    for (Depth z : batch.depths) {
        auto it = std::find(r.levels.begin(), r.levels.end(), z);
        r.level_of.push_back(static_cast<std::size_t>(it - r.levels.begin()));
        if (it == r.levels.end())
            r.levels.push_back(z);
    }
    for (Depth z : r.levels) {
        if (z.diopters() > range.max_diopters() * (1 + 1e-12) || z.diopters() < range.min_diopters() * (1 - 1e-12))
            throw StateError("training depth " + format_depth(z) + " m outside the configured range");
        for (std::size_t c = 0; c < C; ++c)
            if (std::abs(camera.defocus(z, c)) > psi_max * (1 + 1e-9))
                throw StateError("training PSF defocus exceeds the range maximum");
    }

    const std::size_t L = r.levels.size();
    r.psfs.resize(L * C);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < L * C; ++k)
        r.psfs[k] = camera.psf_forward(phase, r.levels[k / C], k % C);

    r.reference = to_tensor(batch.images);
    r.sensor = net::Tensor4(r.reference.n, r.reference.c, r.reference.h, r.reference.w);
    r.convolvers.reserve(B * C);
    for (std::size_t k = 0; k < B * C; ++k)
        r.convolvers.emplace_back(batch.images[k / C]->channels[k % C]);
    std::vector<Image> blurred(B, Image::zeros(C, r.reference.h, r.reference.w));
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < B * C; ++k) {
        const std::size_t b = k / C, c = k % C;
        blurred[b].channels[c] = r.convolvers[k].convolve(r.psfs[r.level_of[b] * C + c].psf.values);
    }
    for (std::size_t b = 0; b < B; ++b) {
        add_noise_and_clamp(blurred[b], batch.sigma_s[b], batch.noise_seed, b);
        for (std::size_t c = 0; c < C; ++c)
            std::transform(blurred[b].channels[c].begin(), blurred[b].channels[c].end(), r.sensor.channel(b, c),
                           [](double v) { return static_cast<float>(v); });
    }
    return r;
}

RealGrid phase_gradient(const BatchRender &r, const net::Tensor4 &dsensor, const CameraModel &camera)
{
    const std::size_t B = r.sensor.n, C = camera.channels();
    if (!dsensor.same_shape(r.sensor))
        throw ShapeError("phase_gradient: upstream " + dsensor.shape_string() + " vs sensor " + r.sensor.shape_string());
    const std::size_t K = r.psfs.front().psf.values.rows();
    std::vector<RealGrid> kgrad(B * C);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < B * C; ++k) {
        const std::size_t b = k / C, c = k % C;
        RealGrid up(r.sensor.h, r.sensor.w);
        const float *s = r.sensor.channel(b, c);
        const float *g = dsensor.channel(b, c);
        for (std::size_t i = 0; i < up.size(); ++i)
            up[i] = (s[i] > 0.0f && s[i] < 1.0f) ? static_cast<double>(g[i]) : 0.0;
        kgrad[k] = r.convolvers[k].kernel_grad(up, K, K);
    }
    const std::size_t L = r.levels.size();
    std::vector<RealGrid> dh(L * C, RealGrid(K, K));
    for (std::size_t k = 0; k < B * C; ++k) {
        auto &dst = dh[r.level_of[k / C] * C + k % C];
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] += kgrad[k][i];
    }
    std::vector<RealGrid> dphi(L * C);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < L * C; ++k)
        dphi[k] = psf_vjp(r.psfs[k].tape, dh[k]);
    const auto &shape = r.psfs.front().tape.pupil.values;
    std::vector<RealGrid> per_channel(C, RealGrid(shape.rows(), shape.cols()));
    for (std::size_t k = 0; k < L * C; ++k)
        for (std::size_t i = 0; i < dphi[k].size(); ++i)
            per_channel[k % C][i] += dphi[k][i];
    return wavelength_grad_accumulate(per_channel, camera.spectral());
}

StepResult train_step(TrainState &state, const Batch &batch, const CameraModel &camera, const TrainConfig &config,
                      const fs::path &dump_dir)
{
    const PhaseMap noisy = inject_phase_noise(state.phase, config.sigma_d_m, camera.spectral(), batch.fabrication_seed);
    BatchRender r = render_batch(batch, noisy, camera, config.depth_range);

    const auto fail = [&](const std::string &what) {
        const fs::path dir = dump_dir / ("diagnostic_step_" + std::to_string(state.step + 1));
        dump_diagnostics(dir, state, r.sensor, config);
        throw NumericError(what + " at step " + std::to_string(state.step + 1) + "; diagnostics in " + dir.string());
    };

    state.net.zero_grad();
    const net::Tensor4 y = state.net.forward(r.sensor, true);
    const net::LossResult loss = net::deblur_loss(y, r.reference, config.loss);
    if (!std::isfinite(loss.value))
        fail("non-finite loss");
    const net::Tensor4 dx = state.net.backward(loss.grad);

    // Fabrication noise is additive, so the gradient passes through it unchanged.
    const RealGrid dphi = phase_gradient(r, dx, camera);

    if (!all_finite(dphi))
        fail("non-finite phase gradient");
    for (auto *p : state.net.parameters())
        if (!all_finite(p->grad))
            fail("non-finite gradient in " + p->name);

    const std::int64_t t = state.step + 1;
    net::adam_step(state.net.parameters(), config.adam, t);
    net::AdamConfig pc = config.adam;
    pc.lr = config.phase_lr;
    net::adam_update(state.phase.values_rad.data(), dphi.data(), state.phase_m.data(), state.phase_v.data(),
                     dphi.size(), pc, t);
    state.step = t;

    StepResult res;
    res.loss = loss.value;
    res.data = loss.data;
    res.prior = loss.prior;
    res.phase_grad_norm = std::sqrt(std::inner_product(dphi.begin(), dphi.end(), dphi.begin(), 0.0));
    return res;
}

double validation_loss(TrainState &state, const std::vector<Patch> &patches, const CameraModel &camera,
                       const TrainConfig &config)
{
    if (patches.empty())
        return std::nan("");
    const auto levels = depth_levels(config.depth_range, config.depth_levels);
    const PhaseMap noisy =
        inject_phase_noise(state.phase, config.sigma_d_m, camera.spectral(), derive_seed(config.seed, {21}));
    const double sigma = 0.5 * (config.sigma_s_lo + config.sigma_s_hi);
    double total = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Depth z = levels[i % levels.size()];
        SensorImage s = render_planar(patches[i].image, camera.psfs(noisy, z), sigma, derive_seed(config.seed, {20, i}));
        const net::Tensor4 x = to_tensor({&s.image});
        const net::Tensor4 y = state.net.forward(x, false);
        total += net::deblur_loss(y, to_tensor({&patches[i].image}), config.loss).value;
    }
    return total / static_cast<double>(patches.size());
}

std::vector<EpochRecord> train(TrainState &state, const PatchStore &data, const TrainConfig &config,
                               const fs::path &out_dir, const StepCallback &on_step)
{
    config.validate();
    const CameraModel camera(config.geometry, config.spectral);
    const std::int64_t total = total_steps(config, data.train.size());
    const auto spe = static_cast<std::int64_t>(steps_per_epoch(data.train.size(), config.batch_size));
    fs::create_directories(out_dir);

    std::vector<EpochRecord> records;
    double epoch_sum = 0.0;
    std::size_t epoch_count = 0;
    while (state.step < total) {
        const std::int64_t t = state.step;
        const StepResult r = train_step(state, make_batch(data.train, config, t), camera, config, out_dir);
        if (on_step)
            on_step(state.step, r);
        epoch_sum += r.loss;
        ++epoch_count;
        if (state.step % spe == 0 || state.step == total) {
            EpochRecord rec;
            rec.epoch = static_cast<std::size_t>(t / spe);
            rec.last_step = state.step;
            rec.train_loss = epoch_sum / static_cast<double>(epoch_count);
            rec.validation_loss = validation_loss(state, data.validation, camera, config);
            records.push_back(rec);
            epoch_sum = 0.0;
            epoch_count = 0;
        }
        if (config.checkpoint_every > 0 && state.step % static_cast<std::int64_t>(config.checkpoint_every) == 0 &&
            state.step != total)
            save_state(out_dir / ("step_" + std::to_string(state.step) + ".ckpt"), state, config);
    }
    save_state(out_dir / "final.ckpt", state, config);
    save_phase(out_dir / "phase.raster", state.phase, config.geometry);
    return records;
}

void save_state(const fs::path &path, TrainState &state, const TrainConfig &config)
{
    Checkpoint ckpt;
    state.net.save_state(ckpt);
    const std::vector<std::size_t> shape{state.phase.values_rad.rows(), state.phase.values_rad.cols()};
    const std::vector<double> values(state.phase.values_rad.begin(), state.phase.values_rad.end());
    ckpt.add_values("phase", shape, values, SampleType::Float64);
    ckpt.add_values("phase.m", shape, state.phase_m, SampleType::Float64);
    ckpt.add_values("phase.v", shape, state.phase_v, SampleType::Float64);
    ckpt.meta["step"] = std::to_string(state.step);
    ckpt.meta["phase.wavelength_m"] = std::to_string(state.phase.wavelength_m);
    ckpt.meta["config"] = to_json(config).dump();
    save_checkpoint(path, ckpt);
}

void load_state(const fs::path &path, TrainState &state)
{
    const Checkpoint ckpt = load_checkpoint(path);
    state.net.load_state(ckpt);
    const auto &p = ckpt.get("phase");
    const auto &m = ckpt.get("phase.m");
    const auto &v = ckpt.get("phase.v");
    if (p.shape.size() != 2 || p.shape[0] != state.phase.values_rad.rows() || p.shape[1] != state.phase.values_rad.cols() ||
        m.values.size() != p.values.size() || v.values.size() != p.values.size())
        throw ShapeError("checkpoint phase does not match the configured pupil grid");
    std::copy(p.values.begin(), p.values.end(), state.phase.values_rad.begin());
    state.phase_m = m.values;
    state.phase_v = v.values;
    try {
        state.step = std::stoll(ckpt.meta_value("step"));
    } catch (const std::invalid_argument &) {
        throw IoError(path.string() + ": malformed step counter");
    }
}

TrainConfig checkpoint_config(const fs::path &path)
{
    const Checkpoint ckpt = load_checkpoint(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ckpt.meta_value("config"));
    } catch (const nlohmann::json::exception &e) {
        throw IoError(path.string() + ": malformed config record: " + e.what());
    }
    return train_config_from_json(j);
}

void save_phase(const fs::path &path, const PhaseMap &phase, const CameraGeometry &geometry)
{
    save_raster(path, Raster::from_grid(phase.values_rad, geometry.pupil_pitch_m, phase.wavelength_m, SampleType::Float64));
}

PhaseMap load_phase(const fs::path &path)
{
    const Raster r = load_raster(path);
    if (r.bands != 1)
        throw ShapeError(path.string() + ": phase raster must have one band");
    return PhaseMap{r.band(0), r.wavelength_m};
}

} // namespace edof::pipeline
