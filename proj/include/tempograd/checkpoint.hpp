#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tempograd/autodiff.hpp"

namespace tempograd {

inline constexpr const char* kCheckpointMagic = "tempograd-ckpt v1";

struct CheckpointData {
  std::string config_line;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

// Text records with raw little-endian doubles between them:
//   tempograd-ckpt v1
//   config <single line>
//   tensor <name> <ndim> <dims...> <nbytes>
//   <nbytes of payload>
void save_checkpoint(const std::filesystem::path& file, const std::string& config_line,
                     const std::vector<std::pair<std::string, Var>>& params);

CheckpointData load_checkpoint(const std::filesystem::path& file);

// Copies checkpoint tensors into the given parameters by name. The two name
// sets must match exactly and every shape must agree.
void restore_parameters(const CheckpointData& data,
                        const std::vector<std::pair<std::string, Var>>& params);

}  // namespace tempograd
