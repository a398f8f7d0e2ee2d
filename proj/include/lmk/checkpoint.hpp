#pragma once

#include <string>
#include <vector>

#include "lmk/config.hpp"
#include "lmk/equivariant.hpp"
#include "lmk/invariant.hpp"

namespace lmk {

inline constexpr const char* kCheckpointVersion = "lmk-ckpt-v1";

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string version;
    Config config;  // snapshot of the settings the arrays were produced under
    std::vector<NamedArray> arrays;

    const NamedArray& array(const std::string& name) const;
};

// Single file: magic, JSON manifest (version, config, array index with
// shapes/offsets), then one little-endian float32 blob per array.
void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays,
                     const Config& config_snapshot);
Checkpoint load_checkpoint(const std::string& path);

// encoder <-> checkpoint adapters
void save_encoder_checkpoint(EncoderState& state, const std::string& path, Config extra = {});
EncoderState load_encoder_checkpoint(const std::string& path);
EncoderState encoder_from_checkpoint(const Checkpoint& ckpt);

void save_projector_checkpoint(const Projector& proj, const std::string& path, Config extra = {});
Projector load_projector_checkpoint(const std::string& path);

}  // namespace lmk
