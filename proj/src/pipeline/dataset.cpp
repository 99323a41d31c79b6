#include "edof/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "edof/error.hpp"

namespace edof::pipeline
{

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h)
{
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t image_hash(const Image &image)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto &ch : image.channels) {
        const auto *p = reinterpret_cast<const unsigned char *>(ch.data());
        h = fnv1a({p, ch.size() * sizeof(double)}, h);
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<NamedImage> load_images(const std::filesystem::path &dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw IoError("dataset directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto &e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".png")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<NamedImage> out;
    for (const auto &f : files) {
        Image img = read_png(f);
        if (img.channel_count() == 1)
            img.channels.resize(3, img.channels.front());
        out.push_back({f.filename().string(), std::move(img)});
    }
    if (out.empty())
        throw IoError("no readable images in " + dir.string());
    return out;
}

std::vector<Patch> tile_image(const Image &image, std::size_t size, std::size_t overlap, const std::string &source)
{
    if (size == 0 || overlap >= size)
        throw DomainError("tiling needs 0 <= overlap < size");
    const std::size_t stride = size - overlap;
    std::vector<Patch> out;
    for (std::size_t r = 0; r + size <= image.height(); r += stride)
        for (std::size_t c = 0; c + size <= image.width(); c += stride) {
            Patch p;
            p.source = source;
            p.row = r;
            p.col = c;
            for (const auto &ch : image.channels) {
                RealGrid g(size, size);
                for (std::size_t y = 0; y < size; ++y)
                    std::copy_n(&ch(r + y, c), size, &g(y, 0));
                p.image.channels.push_back(std::move(g));
            }
            p.hash = image_hash(p.image);
            out.push_back(std::move(p));
        }
    return out;
}

PatchStore split_patches(std::vector<Patch> patches, double validation_fraction)
{
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw DomainError("validation fraction must be in (0, 1)");
    const std::size_t n = patches.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    if (n >= 2)
        n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    else
        n_val = 0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return patches[a].hash < patches[b].hash; });
    std::vector<bool> is_val(n, false);
    for (std::size_t i = 0; i < n_val; ++i)
        is_val[order[i]] = true;

    PatchStore store;
    for (std::size_t i = 0; i < n; ++i)
        (is_val[i] ? store.validation : store.train).push_back(std::move(patches[i]));
    std::sort(store.validation.begin(), store.validation.end(),
              [](const Patch &a, const Patch &b) { return a.hash < b.hash; });
    return store;
}

PatchStore ingest_dataset(const std::filesystem::path &dir, std::size_t patch_size, std::size_t overlap,
                          double validation_fraction)
{
    const auto images = load_images(dir);
    std::vector<Patch> patches;
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto &im : images) {
        h = fnv1a({reinterpret_cast<const unsigned char *>(im.name.data()), im.name.size()}, h);
        const std::uint64_t ih = image_hash(im.image);
        h = fnv1a({reinterpret_cast<const unsigned char *>(&ih), sizeof ih}, h);
        auto tiles = tile_image(im.image, patch_size, overlap, im.name);
        std::move(tiles.begin(), tiles.end(), std::back_inserter(patches));
    }
    if (patches.empty())
        throw IoError("images in " + dir.string() + " are all smaller than the patch size " +
                      std::to_string(patch_size));
    PatchStore store = split_patches(std::move(patches), validation_fraction);
    store.dataset_hash = hex64(h);
    return store;
}

Depth sample_depth(const DepthRange &range, Rng &rng)
{
    range.validate();
    const double lo = range.min_diopters(), hi = range.max_diopters();
    if (lo == hi)
        return range.near;
    std::uniform_real_distribution<double> u(lo, hi);
    return Depth::diopters(u(rng));
}

std::vector<Depth> depth_levels(const DepthRange &range, std::size_t count)
{
    range.validate();
    if (count == 0)
        throw DomainError("depth level count must be positive");
    if (count == 1)
        return {Depth::diopters(0.5 * (range.min_diopters() + range.max_diopters()))};
    std::vector<Depth> out;
    const double lo = range.min_diopters(), hi = range.max_diopters();
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(i + 1 == count ? range.far : i == 0 ? range.near : Depth::diopters(hi + t * (lo - hi)));
    }
    return out;
}

std::size_t nearest_level(const std::vector<Depth> &levels, Depth z)
{
    if (levels.empty())
        throw DomainError("no depth levels");
    std::size_t best = 0;
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (std::abs(levels[i].diopters() - z.diopters()) < std::abs(levels[best].diopters() - z.diopters()))
            best = i;
    return best;
}

Image dead_leaves(std::size_t side, std::uint64_t seed)
{
    Rng rng = make_rng(seed, {0xD1});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rmin = 1.5, rmax = std::max(2.0, static_cast<double>(side) / 3.0);
    const double a = std::pow(rmin, -2.0), b = std::pow(rmax, -2.0);

    Image img = Image::zeros(3, side, side);
    std::vector<bool> covered(side * side, false);
    std::size_t remaining = side * side;
    // Front to back: each disk only paints pixels no earlier disk has covered.
    for (int disk = 0; disk < 20000 && remaining > 0; ++disk) {
        const double r = 1.0 / std::sqrt(a - u(rng) * (a - b)); // density ~ r^-3
        const double cy = u(rng) * static_cast<double>(side), cx = u(rng) * static_cast<double>(side);
        const double gray = 0.1 + 0.8 * u(rng);
        double color[3];
        for (double &c : color)
            c = std::clamp(gray + 0.3 * (u(rng) - 0.5), 0.0, 1.0);
        const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - r)), y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + r));
        const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - r)), x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + r));
        for (auto y = std::max<std::ptrdiff_t>(y0, 0); y <= std::min<std::ptrdiff_t>(y1, side - 1); ++y)
            for (auto x = std::max<std::ptrdiff_t>(x0, 0); x <= std::min<std::ptrdiff_t>(x1, side - 1); ++x) {
                const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
                const auto i = static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x);
                if (covered[i] || dy * dy + dx * dx > r * r)
                    continue;
                covered[i] = true;
                --remaining;
                for (std::size_t c = 0; c < 3; ++c)
                    img.channels[c][i] = color[c];
            }
    }
    return img;
}

void write_dead_leaves(const std::filesystem::path &dir, std::size_t count, std::size_t side, std::uint64_t seed)
{
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i) {
        char name[40];
        std::snprintf(name, sizeof name, "dead_leaves_%03zu.png", i);
        write_png(dir / name, dead_leaves(side, derive_seed(seed, {i})), 16);
    }
}

} // namespace edof::pipeline
