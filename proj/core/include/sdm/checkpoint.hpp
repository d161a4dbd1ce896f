#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/hybrid_model.hpp"

namespace sdm {

// Everything a checkpoint carries besides the parameters themselves. The
// config echo is free-form JSON text (at minimum "{}") so callers can stash
// their full run configuration without this layer knowing its schema.
struct CheckpointMeta {
    std::vector<std::string> vocab;  // species index -> id, predictor order
    std::uint64_t seed = 0;
    std::string config_echo = "{}";
};

// Binary container: a magic line, a length-prefixed JSON header (format
// version, capacity plan, grid config, hash constants, species vocab, seed,
// config echo, named block shapes), the parameter blocks as row-major
// little-endian 32-bit floats, and a whole-file CRC-32 trailer.
//
// Parameters are down-cast to 32-bit on save; a model that has been loaded
// once round-trips bitwise from then on.
void save_checkpoint(const HybridModel& model, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
    HybridModel model;
    CheckpointMeta meta;
};

// Verifies magic, version, digest, and per-block name/shape consistency
// before any parameter is accepted; failures throw IoError naming the
// offending block. The vocab size must equal the stored species count.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace sdm
