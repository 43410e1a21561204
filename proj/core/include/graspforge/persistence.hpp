#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graspforge/tensor.hpp"

namespace gf {

// Named-tensor container with stable (insertion) order; names are unique.
class NamedTensors {
 public:
  void add(const std::string& name, Tensor32 t);
  const Tensor32& get(const std::string& name) const;        // throws if missing
  const Tensor32* find(const std::string& name) const;       // nullptr if missing
  Tensor32* find(const std::string& name);
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  std::size_t size() const { return items_.size(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor32>> items_;
};

// Tensor blob file: magic "GFTB", u32 version, u32 record count, then per
// record u32 name length, name bytes, u8 dtype (0 = fp32), u32 rank,
// u32 dims[rank], raw little-endian data. Round-trips bitwise.
inline constexpr std::uint32_t kBlobVersion = 1;

void write_blob(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors read_blob(const std::filesystem::path& path);

/// FNV-1a 64-bit over raw bytes; used for checkpoint lineage identities.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

// Checkpoint = directory with manifest.json + tensors.blob, published
// atomically (staged in a sibling temp dir, then renamed).
struct Checkpoint {
  nlohmann::json manifest;
  NamedTensors tensors;
};

/// `extra` (optional) may drop additional files into the staging directory
/// before it is atomically renamed into place.
void write_checkpoint(const nlohmann::json& manifest, const NamedTensors& tensors,
                      const std::filesystem::path& dir,
                      const std::function<void(const std::filesystem::path&)>& extra = {});
Checkpoint read_checkpoint(const std::filesystem::path& dir);

/// Content hash of a checkpoint directory (its tensor blob).
std::uint64_t checkpoint_hash(const std::filesystem::path& dir);

/// True when `manifest["lineage"][key]` exists and differs from `expected`.
bool lineage_mismatch(const nlohmann::json& manifest, const std::string& key,
                      const std::string& expected);

}  // namespace gf
