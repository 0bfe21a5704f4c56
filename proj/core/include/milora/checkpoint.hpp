#pragma once

#include <string>
#include <utility>
#include <vector>

#include "milora/config.hpp"
#include "milora/model.hpp"

namespace milora {

// On-disk model snapshot: a text manifest (format tag, the full run
// configuration, a tensor directory of name/shape/offset/length) followed by
// the raw parameter payload — every tensor as little-endian 64-bit floats,
// concatenated in directory order with no padding.  save -> load -> save is
// byte-identical, and two identical models serialize to identical bytes.
struct Checkpoint {
  RunConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;  // directory order
};

// Captures every parameter of the model, in enumeration order.
Checkpoint snapshot(const RunConfig& rc, Model& m);

void save_checkpoint(const std::string& path, const Checkpoint& ck);  // IoError

// Parses the manifest and validates every directory entry against the
// payload (offsets contiguous, lengths match shapes, total length exact)
// before materializing any tensor.  Errors name the offending tensor.
Checkpoint load_checkpoint(const std::string& path);  // IoError / ConfigError

// Rebuilds the architecture described by ck.config and overwrites every
// parameter from the payload.  A directory that does not match the
// architecture's parameters one-for-one (names and shapes) is an IoError
// naming the first offending tensor.
Model restore_model(const Checkpoint& ck);

// Convenience: load + restore.
Model load_model(const std::string& path);

}  // namespace milora
