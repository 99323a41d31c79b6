#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "edof/depth.hpp"
#include "edof/net/deblur_net.hpp"
#include "edof/optics.hpp"

namespace edof::pipeline
{

struct EvalConfig
{
    std::vector<Depth> depths;        // empty: the training depth levels
    std::vector<double> sigma_s{0.005};
    std::vector<double> sigma_d_m{30e-9};
    std::size_t fabrication_trials = 1; // phase-noise realizations per sigma_d
    std::vector<double> nsr_grid;     // Wiener baseline candidates; empty: default log grid
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<double> nsr_candidates() const;
};

struct TrainConfig
{
    CameraGeometry geometry = CameraGeometry::reference();
    SpectralModel spectral = SpectralModel::rgb();
    std::size_t patch_size = 300;
    std::size_t patch_overlap = 0;
    std::size_t batch_size = 4;
    std::size_t epochs = 73;
    std::size_t steps = 0; // > 0 replaces the epoch count with a fixed number of steps
    DepthRange depth_range;
    std::size_t depth_levels = 64; // diopter grid the sampled depths snap to
    double sigma_s_lo = 0.001;
    double sigma_s_hi = 0.015;
    double sigma_d_m = 40e-9;
    net::AdamConfig adam;
    double phase_lr = 1e-3;
    net::LossConfig loss;
    net::NetConfig net;
    double validation_fraction = 0.10;
    double phase_init_std = 0.01; // radians, inside the aperture
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0; // steps; 0 writes only the final checkpoint
    EvalConfig eval;

    void validate() const;

    // Desk-scale setup: 64x64 pupil, 64x64 patches, 8 depth levels.
    static TrainConfig toy();
};

// Geometry from a preset name ("reference", "toy") or an object of CameraGeometry
// fields on top of the reference camera. grid_side and psf_size are derived when absent.
CameraGeometry geometry_from_json(const nlohmann::json &j);
nlohmann::json to_json(const CameraGeometry &g);
SpectralModel spectral_from_json(const nlohmann::json &j);
nlohmann::json to_json(const SpectralModel &s);

// Keys not listed in to_json(TrainConfig) are rejected. A "preset": "toy" key
// starts from TrainConfig::toy() instead of the defaults.
TrainConfig train_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const TrainConfig &c);
TrainConfig load_train_config(const std::filesystem::path &path);
CameraGeometry load_geometry(const std::filesystem::path &path);

// EDOF_SEED replaces config.seed; EDOF_OUT_DIR, when set, is returned.
std::optional<std::filesystem::path> apply_environment(TrainConfig &config);

// Threads for OpenMP regions. Results do not depend on the count.
void set_thread_count(int threads);

} // namespace edof::pipeline
