#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "edof/net/deblur_net.hpp"
#include "edof/pipeline/camera.hpp"
#include "edof/pipeline/config.hpp"
#include "edof/pipeline/dataset.hpp"
#include "edof/pipeline/train.hpp"

namespace edof::pipeline
{

// Per-channel PSFs of the imaging system at one depth, for one fabrication
// noise realization (sigma_d = 0 gives the nominal design).
using SystemPsfs = std::function<std::vector<Psf>(Depth z, double sigma_d_m, std::uint64_t fabrication_seed)>;

SystemPsfs doe_system(const CameraModel &camera, PhaseMap nominal_phase);
SystemPsfs fixed_system(std::vector<Psf> psfs);

struct EvalRow
{
    std::string image;
    std::size_t depth_index = 0;
    Depth depth = Depth::infinity();
    double sigma_s = 0.0;
    double sigma_d_m = 0.0;
    std::size_t trial = 0;
    double psnr_sensor = 0.0;
    double psnr_output = 0.0; // network output; equals the sensor value without a network
    double psnr_wiener = 0.0;
};

struct RunReport
{
    nlohmann::json config;
    std::string dataset_hash;
    std::vector<EpochRecord> epochs;
    std::vector<EvalRow> rows;
    std::vector<std::pair<double, double>> wiener_nsr; // (sigma_s, chosen nsr)
    double wall_clock_s = 0.0;

    // Means over rows matching sigma_s / sigma_d (negative: any).
    double mean_sensor(double sigma_s = -1, double sigma_d_m = -1) const;
    double mean_output(double sigma_s = -1, double sigma_d_m = -1) const;
    double mean_wiener(double sigma_s = -1, double sigma_d_m = -1) const;

    // report.csv, epochs.csv, depth_psnr.csv, summary.txt and config.json are
    // functions of (config, seed, data); wall-clock time goes to timing.txt.
    void write(const std::filesystem::path &dir) const;
    std::string summary() const;
};

// Renders each image at each (depth, sigma_s, sigma_d, trial), runs the network
// (eval mode) when given, and the Wiener baseline with the nominal PSF averaged
// over the depths. The Wiener NSR is the candidate with the best mean PSNR per sigma_s.
RunReport evaluate(const SystemPsfs &system, net::DeblurNet *net, const std::vector<NamedImage> &images,
                   const std::vector<Depth> &depths, const EvalConfig &config);

// Depths of an EvalConfig resolved against the training levels.
std::vector<Depth> evaluation_depths(const TrainConfig &config);

} // namespace edof::pipeline
