#include "edof/pipeline/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "edof/error.hpp"
#include "edof/sensor.hpp"

namespace edof::pipeline
{

namespace fs = std::filesystem;

SystemPsfs doe_system(const CameraModel &camera, PhaseMap nominal_phase)
{
    return [camera, phase = std::move(nominal_phase)](Depth z, double sigma_d_m, std::uint64_t seed) {
        if (sigma_d_m == 0.0)
            return camera.psfs(phase, z);
        return camera.psfs(inject_phase_noise(phase, sigma_d_m, camera.spectral(), seed), z);
    };
}

SystemPsfs fixed_system(std::vector<Psf> psfs)
{
    return [psfs = std::move(psfs)](Depth, double, std::uint64_t) { return psfs; };
}

std::vector<Depth> evaluation_depths(const TrainConfig &config)
{
    if (!config.eval.depths.empty())
        return config.eval.depths;
    return depth_levels(config.depth_range, config.depth_levels);
}

namespace
{

// Per-channel mean of the PSFs over depths; all must share a kernel size.
std::vector<Psf> depth_average(const std::vector<std::vector<Psf>> &per_depth)
{
    std::vector<Psf> avg = per_depth.front();
    for (std::size_t c = 0; c < avg.size(); ++c) {
        avg[c].depth.reset();
        for (std::size_t j = 1; j < per_depth.size(); ++j) {
            require_same_shape(avg[c].values, per_depth[j][c].values, "depth-averaged PSF");
            for (std::size_t i = 0; i < avg[c].values.size(); ++i)
                avg[c].values[i] += per_depth[j][c].values[i];
        }
        for (auto &v : avg[c].values)
            v /= static_cast<double>(per_depth.size());
    }
    return avg;
}

template <typename F>
double mean_if(const std::vector<EvalRow> &rows, double s, double d, F field)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto &r : rows)
        if ((s < 0 || r.sigma_s == s) && (d < 0 || r.sigma_d_m == d)) {
            sum += field(r);
            ++n;
        }
    return n ? sum / static_cast<double>(n) : std::nan("");
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path &path)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    return out;
}

} // namespace

double RunReport::mean_sensor(double s, double d) const
{
    return mean_if(rows, s, d, [](const EvalRow &r) { return r.psnr_sensor; });
}

double RunReport::mean_output(double s, double d) const
{
    return mean_if(rows, s, d, [](const EvalRow &r) { return r.psnr_output; });
}

double RunReport::mean_wiener(double s, double d) const
{
    return mean_if(rows, s, d, [](const EvalRow &r) { return r.psnr_wiener; });
}

RunReport evaluate(const SystemPsfs &system, net::DeblurNet *net, const std::vector<NamedImage> &images,
                   const std::vector<Depth> &depths, const EvalConfig &config)
{
    config.validate();
    if (images.empty() || depths.empty())
        throw DomainError("evaluate: need at least one image and one depth");
    const auto nsr = config.nsr_candidates();
    const std::size_t I = images.size(), J = depths.size();

    std::vector<std::vector<Psf>> nominal;
    for (Depth z : depths)
        nominal.push_back(system(z, 0.0, 0));
    const std::vector<Psf> wiener_psf = depth_average(nominal);

    RunReport report;
    // Wiener PSNR for every NSR candidate, parallel to report.rows.
    std::vector<std::vector<double>> candidates;
    for (double sigma_s : config.sigma_s)
        for (double sigma_d : config.sigma_d_m)
            for (std::size_t trial = 0; trial < config.fabrication_trials; ++trial) {
                // The same fabrication and sensor noise draws, scaled, across all sigma values.
                const std::uint64_t fab_seed = derive_seed(config.seed, {30, trial});
                std::vector<std::vector<Psf>> psfs(J);
                for (std::size_t j = 0; j < J; ++j)
                    psfs[j] = sigma_d == 0.0 ? nominal[j] : system(depths[j], sigma_d, fab_seed);

                std::vector<SensorImage> sensors(I * J);
                std::vector<std::vector<double>> wiener(I * J, std::vector<double>(nsr.size()));
#pragma omp parallel for schedule(dynamic)
                for (std::size_t k = 0; k < I * J; ++k) {
                    const std::size_t i = k / J, j = k % J;
                    sensors[k] = render_planar(images[i].image, psfs[j], sigma_s,
                                               derive_seed(config.seed, {31, i, j, trial}));
                    for (std::size_t q = 0; q < nsr.size(); ++q)
                        wiener[k][q] = psnr(images[i].image, wiener_deconvolve(sensors[k].image, wiener_psf, nsr[q]));
                }
                for (std::size_t k = 0; k < I * J; ++k) {
                    const std::size_t i = k / J, j = k % J;
                    EvalRow row;
                    row.image = images[i].name;
                    row.depth_index = j;
                    row.depth = depths[j];
                    row.sigma_s = sigma_s;
                    row.sigma_d_m = sigma_d;
                    row.trial = trial;
                    row.psnr_sensor = psnr(images[i].image, sensors[k].image);
                    if (net) {
                        const net::Tensor4 y = net->forward(to_tensor({&sensors[k].image}), false);
                        row.psnr_output = psnr(images[i].image, from_tensor(y, 0));
                    } else {
                        row.psnr_output = row.psnr_sensor;
                    }
                    report.rows.push_back(row);
                    candidates.push_back(std::move(wiener[k]));
                }
            }

    for (double sigma_s : config.sigma_s) {
        std::size_t best = 0;
        double best_mean = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < nsr.size(); ++q) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < report.rows.size(); ++r)
                if (report.rows[r].sigma_s == sigma_s) {
                    sum += candidates[r][q];
                    ++n;
                }
            if (sum / static_cast<double>(n) > best_mean) {
                best_mean = sum / static_cast<double>(n);
                best = q;
            }
        }
        report.wiener_nsr.emplace_back(sigma_s, nsr[best]);
        for (std::size_t r = 0; r < report.rows.size(); ++r)
            if (report.rows[r].sigma_s == sigma_s)
                report.rows[r].psnr_wiener = candidates[r][best];
    }
    return report;
}

std::string RunReport::summary() const
{
    std::ostringstream s;
    s << "dataset hash: " << (dataset_hash.empty() ? "-" : dataset_hash) << '\n';
    if (!epochs.empty())
    {
        char line[160];
        std::snprintf(line, sizeof line, "epochs: %zu, final training loss %.6g, final validation loss %.6g\n",
                      epochs.size(), epochs.back().train_loss, epochs.back().validation_loss);
        s << line;
    }
    std::map<std::pair<double, double>, int> settings;
    for (const auto &r : rows)
        settings[{r.sigma_s, r.sigma_d_m}] = 1;
    for (const auto &[key, _] : settings) {
        const auto [ss, sd] = key;
        char line[200];
        std::snprintf(line, sizeof line,
                      "sigma_s %.4g sigma_d %.3g nm: sensor %.3f dB, output %.3f dB, wiener %.3f dB\n", ss, sd * 1e9,
                      mean_sensor(ss, sd), mean_output(ss, sd), mean_wiener(ss, sd));
        s << line;
    }
    for (const auto &[ss, n] : wiener_nsr) {
        char line[100];
        std::snprintf(line, sizeof line, "wiener nsr at sigma_s %.4g: %.4g\n", ss, n);
        s << line;
    }
    return s.str();
}

void RunReport::write(const fs::path &dir) const
{
    fs::create_directories(dir);
    {
        auto out = open_out(dir / "report.csv");
        out << "image,depth_index,depth_m,sigma_s,sigma_d_m,trial,psnr_sensor,psnr_output,psnr_wiener\n";
        for (const auto &r : rows)
            out << r.image << ',' << r.depth_index << ',' << format_depth(r.depth) << ',' << num(r.sigma_s) << ','
                << num(r.sigma_d_m) << ',' << r.trial << ',' << num(r.psnr_sensor) << ',' << num(r.psnr_output) << ','
                << num(r.psnr_wiener) << '\n';
    }
    {
        // Mean over images and trials per (depth, sigma_s, sigma_d).
        std::map<std::tuple<double, double, std::size_t>, std::array<double, 4>> acc;
        std::map<std::size_t, Depth> depth_of;
        for (const auto &r : rows) {
            auto &a = acc[{r.sigma_s, r.sigma_d_m, r.depth_index}];
            a[0] += r.psnr_sensor;
            a[1] += r.psnr_output;
            a[2] += r.psnr_wiener;
            a[3] += 1.0;
            depth_of.emplace(r.depth_index, r.depth);
        }
        auto out = open_out(dir / "depth_psnr.csv");
        out << "sigma_s,sigma_d_m,depth_index,depth_m,psnr_sensor,psnr_output,psnr_wiener\n";
        for (const auto &[k, a] : acc)
            out << num(std::get<0>(k)) << ',' << num(std::get<1>(k)) << ',' << std::get<2>(k) << ','
                << format_depth(depth_of.at(std::get<2>(k))) << ',' << num(a[0] / a[3]) << ',' << num(a[1] / a[3])
                << ',' << num(a[2] / a[3]) << '\n';
    }
    {
        auto out = open_out(dir / "epochs.csv");
        out << "epoch,last_step,train_loss,validation_loss\n";
        for (const auto &e : epochs)
            out << e.epoch << ',' << e.last_step << ',' << num(e.train_loss) << ',' << num(e.validation_loss) << '\n';
    }
    {
        auto out = open_out(dir / "wiener_nsr.csv");
        out << "sigma_s,nsr\n";
        for (const auto &[s, n] : wiener_nsr)
            out << num(s) << ',' << num(n) << '\n';
    }
    open_out(dir / "summary.txt") << summary();
    nlohmann::json meta{{"config", config}, {"dataset_hash", dataset_hash}};
    open_out(dir / "config.json") << meta.dump(2) << '\n';
    open_out(dir / "timing.txt") << "wall_clock_s " << wall_clock_s << '\n';
}

} // namespace edof::pipeline
