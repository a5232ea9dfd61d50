#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "emotok/params.hpp"
#include "emotok/tensor.hpp"

namespace emotok {

// Versioned text container for named tensors plus string metadata. Values
// are written as C hexfloats so a save/load cycle is bit-exact.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> tensors;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    // Copy all parameters (values + trainable flags encoded in meta).
    static Checkpoint from_store(const ParameterStore& params);
    void restore_into(ParameterStore& params) const;
};

}  // namespace emotok
