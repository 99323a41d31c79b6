#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edof/depth.hpp"
#include "edof/image.hpp"
#include "edof/random.hpp"

namespace edof::pipeline
{

struct NamedImage
{
    std::string name;
    Image image;
};

struct Patch
{
    Image image;
    std::uint64_t hash = 0;
    std::string source;
    std::size_t row = 0, col = 0;
};

struct PatchStore
{
    std::vector<Patch> train;
    std::vector<Patch> validation;
    std::string dataset_hash; // 16 hex digits over file names and contents
};

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t image_hash(const Image &image);
std::string hex64(std::uint64_t v);

// PNG files of a directory in name order, as three-channel images (gray is replicated).
std::vector<NamedImage> load_images(const std::filesystem::path &dir);

// Row-major tiles with stride size - overlap; partial tiles at the border are dropped.
std::vector<Patch> tile_image(const Image &image, std::size_t size, std::size_t overlap, const std::string &source);

// round(fraction * n) patches (at least one, at most n - 1 when n >= 2) go to
// validation, chosen as the smallest content hashes. Training keeps tiling order.
PatchStore split_patches(std::vector<Patch> patches, double validation_fraction);

PatchStore ingest_dataset(const std::filesystem::path &dir, std::size_t patch_size, std::size_t overlap,
                          double validation_fraction);

// Uniform in inverse depth over the range.
Depth sample_depth(const DepthRange &range, Rng &rng);
// count depths evenly spaced in diopters, near to far, endpoints included.
std::vector<Depth> depth_levels(const DepthRange &range, std::size_t count);
std::size_t nearest_level(const std::vector<Depth> &levels, Depth z);

// Occluding disks with power-law radii and random colours, a standard
// scale-invariant synthetic scene.
Image dead_leaves(std::size_t side, std::uint64_t seed);
// Writes dead_leaves_<i>.png for i in [0, count).
void write_dead_leaves(const std::filesystem::path &dir, std::size_t count, std::size_t side, std::uint64_t seed);

} // namespace edof::pipeline
