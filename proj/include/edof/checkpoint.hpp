#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "edof/raster_io.hpp"

// Single-file checkpoint: a text manifest followed by one float raster per
// tensor, in manifest order.
//
//   EDOFCKPT 1
//   meta <key> <value>
//   tensor <name> <f32|f64> <rank> <dim>...
//   end
//   <raster>...
//
// f32 tensors hold single-precision values and f64 tensors double-precision
// ones, so a save/load round trip is bit-exact.
namespace edof
{

struct CheckpointTensor
{
    std::string name;
    std::vector<std::size_t> shape;
    SampleType type = SampleType::Float32;
    std::vector<double> values;
};

struct Checkpoint
{
    static constexpr int kVersion = 1;

    std::map<std::string, std::string> meta;
    std::vector<CheckpointTensor> tensors;

    void add(std::string name, std::vector<std::size_t> shape, std::vector<double> values, SampleType type);
    template <typename T>
    void add_values(std::string name, std::vector<std::size_t> shape, const std::vector<T> &values, SampleType type)
    {
        add(std::move(name), std::move(shape), std::vector<double>(values.begin(), values.end()), type);
    }
    const CheckpointTensor &get(const std::string &name) const;
    bool has(const std::string &name) const;
    const std::string &meta_value(const std::string &key) const;
};

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace edof
