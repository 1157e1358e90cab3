#pragma once

#include <map>
#include <string>
#include <vector>

namespace ecgseg::ckpt {

// Single-file checkpoint: a text manifest (magic line, config lines,
// tensor entries with name/shape/dtype/offset) followed by one raw
// little-endian float32 blob. Offsets are relative to the blob start.

inline constexpr const char* kMagic = "ECGSEG1";

struct Entry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<Entry> tensors;

  const Entry* find(const std::string& name) const;
  void add(const std::string& name, std::vector<int> shape, std::vector<float> data);
};

void save(const std::string& path, const Checkpoint& c);
Checkpoint load(const std::string& path);

}  // namespace ecgseg::ckpt
