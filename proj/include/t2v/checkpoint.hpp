#pragma once

#include <cstddef>
#include <string>

#include "t2v/model.hpp"
#include "t2v/trainer.hpp"

namespace t2v {

struct LoadedCheckpoint {
    Model model;
    AdamState adam;
    std::size_t step = 0;
    std::string manifest_hash;
};

// Single file: one JSON header line {format_version, config, manifest_hash,
// step, raw_width, vocab, arrays}, then raw little-endian f64 blocks in the
// header's array order. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const AdamState& adam, std::size_t step,
                     const std::string& manifest_hash, const std::string& path);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace t2v
