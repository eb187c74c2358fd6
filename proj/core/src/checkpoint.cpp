#include "abda/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "abda/types.hpp"

namespace abda::ckpt {

namespace {
constexpr char kMagic[8] = {'A', 'B', 'D', 'A', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& s, std::uint32_t v) {
  s.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::istream& s) {
  std::uint32_t v = 0;
  s.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
void write_str(std::ostream& s, const std::string& v) {
  write_u32(s, static_cast<std::uint32_t>(v.size()));
  s.write(v.data(), static_cast<std::streamsize>(v.size()));
}
std::string read_str(std::istream& s) {
  std::uint32_t n = read_u32(s);
  std::string v(n, '\0');
  s.read(v.data(), n);
  return v;
}
}  // namespace

void Checkpoint::put(const std::string& net, const nn::ParamSet& ps) {
  for (const auto& [name, v] : ps.items()) arrays[net + "/" + name] = v->val;
}

void Checkpoint::get(const std::string& net, nn::ParamSet& ps) const {
  for (auto& [name, v] : ps.items()) {
    auto it = arrays.find(net + "/" + name);
    if (it == arrays.end())
      throw IoError("checkpoint: missing parameter " + net + "/" + name);
    if (!it->second.same_shape(v->val))
      throw IoError("checkpoint: shape mismatch for " + net + "/" + name);
    v->val = it->second;
  }
}

bool Checkpoint::has_net(const std::string& net) const {
  std::string prefix = net + "/";
  for (const auto& [k, t] : arrays)
    if (k.rfind(prefix, 0) == 0) return true;
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path.string());
  f.write(kMagic, 8);
  write_u32(f, kVersion);
  write_u32(f, static_cast<std::uint32_t>(stage));
  write_str(f, config_text);
  write_u32(f, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    write_str(f, name);
    write_u32(f, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      write_u32(f, static_cast<std::uint32_t>(t.dim(i)));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!f) throw IoError("checkpoint: write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: bad magic: " + path.string());
  std::uint32_t version = read_u32(f);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) +
                  ": " + path.string());
  Checkpoint c;
  c.stage = static_cast<int>(read_u32(f));
  c.config_text = read_str(f);
  std::uint32_t count = read_u32(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_str(f);
    std::uint32_t rank = read_u32(f);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int>(read_u32(f)));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    c.arrays[name] = std::move(t);
  }
  if (!f) throw IoError("checkpoint: truncated: " + path.string());
  return c;
}

}  // namespace abda::ckpt
