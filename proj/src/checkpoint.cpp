#include "ecgseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ecgseg/errors.hpp"
#include "ecgseg/tensor.hpp"

namespace ecgseg::ckpt {

const Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return &e;
  return nullptr;
}

void Checkpoint::add(const std::string& name, std::vector<int> shape, std::vector<float> data) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  if (n != data.size()) throw CheckpointError("tensor '" + name + "': shape/data mismatch");
  tensors.push_back({name, std::move(shape), std::move(data)});
}

void save(const std::string& path, const Checkpoint& c) {
  std::ostringstream manifest;
  manifest << kMagic << '\n';
  for (const auto& [k, v] : c.config) manifest << "config " << k << ' ' << v << '\n';
  size_t offset = 0;
  for (const auto& e : c.tensors) {
    manifest << "tensor " << e.name << " f32 " << e.shape.size();
    for (int d : e.shape) manifest << ' ' << d;
    manifest << ' ' << offset << '\n';
    offset += e.data.size() * sizeof(float);
  }
  manifest << "blob " << offset << '\n';

  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint: " + path);
  f << manifest.str();
  for (const auto& e : c.tensors)
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(float)));
  if (!f) throw CheckpointError("short write to checkpoint: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);

  std::string magic;
  if (!std::getline(f, magic)) throw CheckpointError("empty checkpoint: " + path);
  if (magic != kMagic)
    throw CheckpointError("checkpoint version mismatch: expected '" + std::string(kMagic) +
                          "', found '" + magic.substr(0, 16) + "'");

  Checkpoint c;
  struct Pending {
    std::string name;
    std::vector<int> shape;
    size_t offset;
    size_t count;
  };
  std::vector<Pending> pending;
  size_t blob_bytes = 0;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "config") {
      std::string key;
      is >> key;
      std::string value;
      std::getline(is, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      c.config[key] = value;
    } else if (tag == "tensor") {
      Pending p;
      std::string dtype;
      size_t ndim = 0;
      is >> p.name >> dtype >> ndim;
      if (dtype != "f32") throw CheckpointError("unsupported dtype '" + dtype + "' in " + path);
      p.count = 1;
      for (size_t i = 0; i < ndim; ++i) {
        int d;
        if (!(is >> d) || d < 0) throw CheckpointError("bad tensor shape in " + path);
        p.shape.push_back(d);
        p.count *= static_cast<size_t>(d);
      }
      if (!(is >> p.offset)) throw CheckpointError("missing tensor offset in " + path);
      pending.push_back(std::move(p));
    } else if (tag == "blob") {
      if (!(is >> blob_bytes)) throw CheckpointError("bad blob size in " + path);
      break;
    } else {
      throw CheckpointError("unknown manifest entry '" + tag + "' in " + path);
    }
  }

  std::vector<char> blob(blob_bytes);
  f.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
  if (static_cast<size_t>(f.gcount()) != blob_bytes)
    throw CheckpointError("truncated checkpoint blob in " + path);

  for (auto& p : pending) {
    const size_t bytes = p.count * sizeof(float);
    if (p.offset + bytes > blob_bytes)
      throw CheckpointError("tensor '" + p.name + "' extends past blob end in " + path);
    Entry e;
    e.name = std::move(p.name);
    e.shape = std::move(p.shape);
    e.data.resize(p.count);
    std::memcpy(e.data.data(), blob.data() + p.offset, bytes);
    c.tensors.push_back(std::move(e));
  }
  return c;
}

}  // namespace ecgseg::ckpt
