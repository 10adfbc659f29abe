#pragma once

#include <string>

#include "patchlab/model/weights.hpp"

namespace patchlab {

inline constexpr int kCheckpointFormat = 1;

// JSON container: {"format", "config", "params": {name: {"shape", "data"}}}.
// Doubles are written with round-trip precision, so load(save(w)) == w bitwise.
std::string checkpoint_to_json(const Weights& w);
Weights checkpoint_from_json(const std::string& text);

void save_checkpoint(const Weights& w, const std::string& path);
Weights load_checkpoint(const std::string& path);

}  // namespace patchlab
