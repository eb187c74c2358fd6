#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "abda/nn.hpp"
#include "abda/tensor.hpp"

namespace abda::ckpt {

// Self-describing binary archive of named parameter tensors plus a stage tag
// and a config snapshot. load(save(x)) is bitwise.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  int stage = 0;  // 0 = untagged (e.g. standalone decomposer)
  std::string config_text;
  std::map<std::string, Tensor> arrays;

  void put(const std::string& net, const nn::ParamSet& ps);
  // throws if any expected parameter is missing or shaped differently
  void get(const std::string& net, nn::ParamSet& ps) const;
  bool has_net(const std::string& net) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace abda::ckpt
