#pragma once

// Checkpoint files: a version tag, a flat string config, and named parameter
// matrices stored row-major as 64-bit little-endian doubles. Loading
// validates shapes against the expectation supplied by the caller.

#include <map>
#include <string>

#include "ehd/optimizer.hpp"

namespace ehd {

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::map<std::string, ad::Mat> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies matching entries into the store; throws on missing names or shape
// mismatches.
void load_into_store(const Checkpoint& ckpt, ParamStore& store);
Checkpoint snapshot_store(const ParamStore& store,
                          std::map<std::string, std::string> config);

}  // namespace ehd
