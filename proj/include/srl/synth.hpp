#pragma once

#include <cstdint>
#include <string>

#include "srl/config.hpp"

namespace srl::synth {

/// Generates a synthetic clickstream with a planted Markov next-item rule:
/// each item has a fixed set of click successors and one purchase successor,
/// plus a uniform-noise branch. Output is the standard 4-column event text,
/// so it flows through the ordinary preprocess path.
std::string generate_log(const config::RunConfig& cfg);

void write_log(const std::string& path, const config::RunConfig& cfg);

}  // namespace srl::synth
