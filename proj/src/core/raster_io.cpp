#include "edof/raster_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "edof/error.hpp"

namespace edof
{

static_assert(std::endian::native == std::endian::little, "raster I/O assumes a little-endian host");

namespace
{
constexpr char kMagic[] = "EDOFRAST";
constexpr std::size_t kMaxDim = 1u << 20;

std::size_t sample_bytes(SampleType t) { return t == SampleType::Float32 ? 4 : 8; }
} // namespace

RealGrid Raster::band(std::size_t b) const
{
    if (b >= bands)
        throw ShapeError("raster band index out of range");
    RealGrid g(rows, cols);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(b * rows * cols), rows * cols, g.begin());
    return g;
}

Raster Raster::from_grid(const RealGrid &grid, double pitch_m, double wavelength_m, SampleType type)
{
    return from_bands({grid}, pitch_m, wavelength_m, type);
}

Raster Raster::from_bands(const std::vector<RealGrid> &bands, double pitch_m, double wavelength_m, SampleType type)
{
    if (bands.empty())
        throw ShapeError("raster needs at least one band");
    Raster r;
    r.rows = bands.front().rows();
    r.cols = bands.front().cols();
    r.bands = bands.size();
    r.pitch_m = pitch_m;
    r.wavelength_m = wavelength_m;
    r.type = type;
    r.values.reserve(r.rows * r.cols * r.bands);
    for (const auto &b : bands) {
        require_same_shape(b, bands.front(), "raster bands");
        r.values.insert(r.values.end(), b.begin(), b.end());
    }
    return r;
}

void write_raster(std::ostream &out, const Raster &raster)
{
    if (raster.values.size() != raster.rows * raster.cols * raster.bands)
        throw ShapeError("raster value count does not match its dimensions");
    char header[kRasterHeaderBytes];
    std::memset(header, ' ', sizeof header);
    const int n = std::snprintf(header, sizeof header, "%s %s %zu %zu %zu %.9e %.9e", kMagic,
                                raster.type == SampleType::Float32 ? "f32" : "f64", raster.rows, raster.cols,
                                raster.bands, raster.pitch_m, raster.wavelength_m);
    if (n < 0 || static_cast<std::size_t>(n) >= kRasterHeaderBytes - 1)
        throw IoError("raster header does not fit in 64 bytes");
    header[n] = ' ';
    header[kRasterHeaderBytes - 1] = '\n';
    out.write(header, sizeof header);

    if (raster.type == SampleType::Float32) {
        std::vector<float> buf(raster.values.begin(), raster.values.end());
        out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    } else {
        out.write(reinterpret_cast<const char *>(raster.values.data()),
                  static_cast<std::streamsize>(raster.values.size() * 8));
    }
    if (!out)
        throw IoError("failed writing raster data");
}

Raster read_raster(std::istream &in)
{
    char header[kRasterHeaderBytes + 1] = {};
    in.read(header, kRasterHeaderBytes);
    if (in.gcount() != static_cast<std::streamsize>(kRasterHeaderBytes))
        throw IoError("raster: truncated header");
    std::istringstream hs{std::string(header, kRasterHeaderBytes)};
    std::string magic, type;
    Raster r;
    hs >> magic >> type >> r.rows >> r.cols >> r.bands >> r.pitch_m >> r.wavelength_m;
    if (!hs || magic != kMagic)
        throw IoError("raster: bad header");
    if (type == "f32")
        r.type = SampleType::Float32;
    else if (type == "f64")
        r.type = SampleType::Float64;
    else
        throw IoError("raster: unknown sample type '" + type + "'");
    if (r.rows == 0 || r.cols == 0 || r.bands == 0 || r.rows > kMaxDim || r.cols > kMaxDim || r.bands > 4096)
        throw IoError("raster: implausible dimensions");

    const std::size_t count = r.rows * r.cols * r.bands;
    r.values.resize(count);
    if (r.type == SampleType::Float32) {
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(count * 4));
        std::copy(buf.begin(), buf.end(), r.values.begin());
    } else {
        in.read(reinterpret_cast<char *>(r.values.data()), static_cast<std::streamsize>(count * 8));
    }
    if (in.gcount() != static_cast<std::streamsize>(count * sample_bytes(r.type)))
        throw IoError("raster: truncated data");
    return r;
}

void save_raster(const std::filesystem::path &path, const Raster &raster)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    write_raster(out, raster);
}

Raster load_raster(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return read_raster(in);
    } catch (const IoError &e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_grid_csv(std::ostream &out, const RealGrid &grid)
{
    char buf[40];
    for (std::size_t i = 0; i < grid.rows(); ++i) {
        for (std::size_t j = 0; j < grid.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", grid(i, j));
            if (j)
                out << ',';
            out << buf;
        }
        out << '\n';
    }
}

void save_grid_csv(const std::filesystem::path &path, const RealGrid &grid)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    write_grid_csv(out, grid);
}

} // namespace edof
