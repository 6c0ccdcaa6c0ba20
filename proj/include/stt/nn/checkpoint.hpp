#pragma once

#include <map>
#include <string>
#include <vector>

#include "stt/nn/graph.hpp"

namespace stt::nn {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary checkpoint: magic, a flat key=value config block, then named
// parameter records (name, shape, raw little-endian f64 values).
void save_checkpoint(const std::string& path, const std::map<std::string, std::string>& config,
                     const std::vector<const Param*>& params);

// Loads into pre-built parameters; every stored record must match an
// existing parameter's name and shape exactly, and vice versa.
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   const std::vector<Param*>& params);

// Reads only the config block (for manifest inspection / model rebuild).
std::map<std::string, std::string> read_checkpoint_config(const std::string& path);

} // namespace stt::nn
