#pragma once

#include <string>

#include "srl/autodiff.hpp"

namespace srl::checkpoint {

/// Versioned checkpoint ("SRLC1"): named parameter manifest (name, shape,
/// byte offset) followed by raw little-endian float64 buffers. The config
/// digest is stored in the header so evaluation can refuse mismatched pairs.
void save(const std::string& path, const ad::ParameterSet& params, const std::string& digest);

struct Loaded {
  ad::ParameterSet params;
  std::string digest;
};
Loaded load(const std::string& path);

/// Copies loaded values into an existing parameter set; manifests must match.
void restore_into(ad::ParameterSet& params, const Loaded& loaded);

}  // namespace srl::checkpoint
