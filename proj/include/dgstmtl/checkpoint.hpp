#pragma once

#include <string>

#include "dgstmtl/model.hpp"

namespace dgstmtl {

// Self-describing container: 8-byte magic, little-endian u64 header length,
// JSON header (dims, config, scalers, tensor directory), then the raw doubles
// of every named tensor in directory order. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace dgstmtl
