#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace selfpath::runio {

// Compile-time code identity (git revision when available).
std::string code_version();

// Content hash naming a run directory: config snapshot + seed + code version.
std::string run_hash_hex(const std::string& canonical_config, uint64_t seed);

// Creates <out_root>/<hash> (parents included) and returns the path.
std::string prepare_run_dir(const std::string& out_root, const std::string& hash);

// runrecord.json: config snapshot, seed, code version, outputs, wall clock.
void write_run_record(const std::string& run_dir, const std::string& config_snapshot,
                      uint64_t seed, const std::vector<std::string>& outputs);

}  // namespace selfpath::runio
