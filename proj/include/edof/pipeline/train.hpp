#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "edof/net/deblur_net.hpp"
#include "edof/pipeline/camera.hpp"
#include "edof/pipeline/config.hpp"
#include "edof/pipeline/dataset.hpp"

namespace edof::pipeline
{

struct TrainState
{
    PhaseMap phase; // DOE phase at the nominal wavelength
    std::vector<double> phase_m, phase_v;
    net::DeblurNet net;
    std::int64_t step = 0; // completed steps

    TrainState(PhaseMap phase, net::DeblurNet net);
};

// Phase 0 plus N(0, phase_init_std^2) inside the aperture; network from the config seed.
TrainState initial_state(const TrainConfig &config);

struct Batch
{
    std::vector<const Image *> images;
    std::vector<Depth> depths;
    std::vector<double> sigma_s;
    std::uint64_t noise_seed = 0;
    std::uint64_t fabrication_seed = 0;
};

// Batch for step t (0-based): patches from the epoch's permutation, a depth per
// patch drawn uniformly in diopters and snapped to the depth levels, sigma_s
// uniform in its range. Depends only on (config.seed, t).
Batch make_batch(const std::vector<Patch> &train, const TrainConfig &config, std::int64_t step);

struct StepResult
{
    double loss = 0.0;
    double data = 0.0;
    double prior = 0.0;
    double phase_grad_norm = 0.0;
};

// Forward rendering of a batch, keeping what the backward pass needs.
struct BatchRender
{
    std::vector<Depth> levels;                // distinct depths of the batch
    std::vector<std::size_t> level_of;        // level index per item
    std::vector<PsfForward> psfs;             // [level * channels + c]
    std::vector<ReflectConvolver> convolvers; // [item * channels + c]
    net::Tensor4 sensor;
    net::Tensor4 reference;
};

// PSFs of the batch's depths for the given nominal phase, then convolution,
// noise and clamp. Depths outside the range or PSFs whose defocus exceeds the
// range maximum are rejected.
BatchRender render_batch(const Batch &batch, const PhaseMap &nominal_phase, const CameraModel &camera,
                         const DepthRange &range);

// dL/dPhi_0 from dL/dsensor: clamp mask, rendering kernel gradients, PSF
// backward per (depth, channel) and wavelength accumulation.
RealGrid phase_gradient(const BatchRender &render, const net::Tensor4 &dsensor, const CameraModel &camera);

// One joint update. Non-finite loss or gradients throw NumericError naming a
// diagnostic directory written under dump_dir.
StepResult train_step(TrainState &state, const Batch &batch, const CameraModel &camera, const TrainConfig &config,
                      const std::filesystem::path &dump_dir);

// Eval-mode loss over the validation patches, each at a fixed depth level and sigma_s.
double validation_loss(TrainState &state, const std::vector<Patch> &patches, const CameraModel &camera,
                       const TrainConfig &config);

struct EpochRecord
{
    std::size_t epoch = 0;
    std::int64_t last_step = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

std::size_t steps_per_epoch(std::size_t train_patches, std::size_t batch_size);
std::int64_t total_steps(const TrainConfig &config, std::size_t train_patches);

using StepCallback = std::function<void(std::int64_t step, const StepResult &)>;

// Runs from state.step to total_steps. Checkpoints (and the phase raster) go to
// out_dir every checkpoint_every steps and at the end.
std::vector<EpochRecord> train(TrainState &state, const PatchStore &data, const TrainConfig &config,
                               const std::filesystem::path &out_dir, const StepCallback &on_step = {});

void save_state(const std::filesystem::path &path, TrainState &state, const TrainConfig &config);
// Loads into a state built from the same config.
void load_state(const std::filesystem::path &path, TrainState &state);
// The training config recorded in a checkpoint.
TrainConfig checkpoint_config(const std::filesystem::path &path);
void save_phase(const std::filesystem::path &path, const PhaseMap &phase, const CameraGeometry &geometry);
PhaseMap load_phase(const std::filesystem::path &path);

net::Tensor4 to_tensor(const std::vector<const Image *> &images);
Image from_tensor(const net::Tensor4 &t, std::size_t item);

} // namespace edof::pipeline
