#pragma once

#include <string>

#include "gnnlab/models.hpp"

namespace gnnlab {

// Flat binary model container, little-endian regardless of host:
//   magic "GNNM", format version, the model config and task shape,
//   then per layer / per head the shape-tagged double-precision W and
//   a arrays (an undefined a, as in GCN layers, is tagged 0 x 0).
// Gradients, optimizer state, and prune state are not part of the
// container; loading reconstructs the same wiring as init_model and
// fills in the stored values.

// Throws std::runtime_error on I/O failure.
void save_model(const GnnModel& m, const std::string& path);

// Throws std::runtime_error on I/O failure, bad magic, unsupported
// version, or a malformed/truncated payload.
GnnModel load_model(const std::string& path);

}  // namespace gnnlab
