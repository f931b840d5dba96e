#pragma once

// Plain-text model checkpoints: a versioned header, the architecture as
// key/value lines, then one "tensor <name> <dims...>" line per parameter
// followed by its values at full precision.

#include <iosfwd>
#include <string>

#include "leap/training.hpp"

namespace leap {

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const ModelParams& params, std::ostream& out);
void save_checkpoint(const ModelParams& params, const std::string& path);

// Rebuilds the model from the stored architecture. Throws ParseError for a
// malformed file and DataError when names or shapes disagree with it.
ModelParams read_checkpoint(std::istream& in);
ModelParams load_checkpoint(const std::string& path);

}  // namespace leap
