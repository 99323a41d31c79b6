#include "edof/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "edof/error.hpp"

namespace edof
{

namespace
{
constexpr char kMagic[] = "EDOFCKPT";

bool is_token(const std::string &s)
{
    return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}
} // namespace

void Checkpoint::add(std::string name, std::vector<std::size_t> shape, std::vector<double> values, SampleType type)
{
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    if (n != values.size() || values.empty())
        throw ShapeError("checkpoint tensor " + name + ": shape does not match value count");
    if (!is_token(name))
        throw DomainError("checkpoint tensor name must be a non-empty token without spaces");
    if (has(name))
        throw DomainError("checkpoint tensor " + name + " added twice");
    tensors.push_back({std::move(name), std::move(shape), type, std::move(values)});
}

bool Checkpoint::has(const std::string &name) const
{
    for (const auto &t : tensors)
        if (t.name == name)
            return true;
    return false;
}

const CheckpointTensor &Checkpoint::get(const std::string &name) const
{
    for (const auto &t : tensors)
        if (t.name == name)
            return t;
    throw IoError("checkpoint has no tensor named " + name);
}

const std::string &Checkpoint::meta_value(const std::string &key) const
{
    const auto it = meta.find(key);
    if (it == meta.end())
        throw IoError("checkpoint has no metadata key " + key);
    return it->second;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt)
{
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out << kMagic << ' ' << Checkpoint::kVersion << '\n';
        for (const auto &[k, v] : ckpt.meta) {
            if (!is_token(k) || v.find('\n') != std::string::npos)
                throw DomainError("checkpoint metadata key/value not representable: " + k);
            out << "meta " << k << ' ' << v << '\n';
        }
        for (const auto &t : ckpt.tensors) {
            out << "tensor " << t.name << ' ' << (t.type == SampleType::Float32 ? "f32" : "f64") << ' '
                << t.shape.size();
            for (auto d : t.shape)
                out << ' ' << d;
            out << '\n';
        }
        out << "end\n";
        for (const auto &t : ckpt.tensors) {
            Raster r;
            r.rows = 1;
            r.cols = t.values.size();
            r.type = t.type;
            r.values = t.values;
            write_raster(out, r);
        }
        if (!out)
            throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    const auto fail = [&](const std::string &what) { return IoError(path.string() + ": " + what); };

    std::string line;
    if (!std::getline(in, line))
        throw fail("empty file");
    {
        std::istringstream ls(line);
        std::string magic;
        int version = 0;
        ls >> magic >> version;
        if (magic != kMagic)
            throw fail("not a checkpoint");
        if (version != Checkpoint::kVersion)
            throw fail("unsupported checkpoint version " + std::to_string(version));
    }

    Checkpoint ckpt;
    bool ended = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "end") {
            ended = true;
            break;
        }
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls >> std::ws, value);
            ckpt.meta[key] = value;
        } else if (kind == "tensor") {
            CheckpointTensor t;
            std::string type;
            std::size_t rank = 0;
            ls >> t.name >> type >> rank;
            if (!ls || (type != "f32" && type != "f64") || rank > 8)
                throw fail("bad tensor line '" + line + "'");
            t.type = type == "f32" ? SampleType::Float32 : SampleType::Float64;
            t.shape.resize(rank);
            for (auto &d : t.shape)
                ls >> d;
            if (!ls)
                throw fail("bad tensor line '" + line + "'");
            ckpt.tensors.push_back(std::move(t));
        } else {
            throw fail("unexpected manifest line '" + line + "'");
        }
    }
    if (!ended)
        throw fail("manifest is not terminated");

    for (auto &t : ckpt.tensors) {
        Raster r;
        try {
            r = read_raster(in);
        } catch (const IoError &e) {
            throw fail("tensor " + t.name + ": " + e.what());
        }
        std::size_t n = 1;
        for (auto d : t.shape)
            n *= d;
        if (r.values.size() != n || r.type != t.type)
            throw fail("tensor " + t.name + " does not match its manifest entry");
        t.values = std::move(r.values);
    }
    return ckpt;
}

} // namespace edof
