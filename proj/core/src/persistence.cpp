#include "graspforge/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts are not supported");

namespace gf {

namespace fs = std::filesystem;

void NamedTensors::add(const std::string& name, Tensor32 t) {
  if (contains(name)) throw std::invalid_argument("duplicate tensor name: " + name);
  items_.emplace_back(name, std::move(t));
}

const Tensor32& NamedTensors::get(const std::string& name) const {
  const Tensor32* t = find(name);
  if (!t) throw std::out_of_range("missing tensor: " + name);
  return *t;
}

const Tensor32* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

Tensor32* NamedTensors::find(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'G', 'F', 'T', 'B'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u8(std::ostream& out, std::uint8_t v) {
  out.write(reinterpret_cast<const char*>(&v), 1);
}

struct Reader {
  std::ifstream in;
  fs::path path;

  void read_raw(void* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw std::runtime_error(path.string() + ": unexpected end of blob");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read_raw(&v, 4);
    return v;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    read_raw(&v, 1);
    return v;
  }
};

}  // namespace

void write_blob(const NamedTensors& tensors, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kBlobVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u8(out, 0);  // fp32
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

NamedTensors read_blob(const fs::path& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) throw std::runtime_error(path.string() + ": cannot open");
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path.string() + ": bad blob magic");
  std::uint32_t version = r.u32();
  if (version != kBlobVersion)
    throw std::runtime_error(path.string() + ": unsupported blob version " +
                             std::to_string(version));
  std::uint32_t count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = r.u32();
    std::string name(name_len, '\0');
    r.read_raw(name.data(), name_len);
    std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw std::runtime_error(path.string() + ": unknown dtype code " + std::to_string(dtype));
    std::uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape[k] = static_cast<int>(r.u32());
      numel *= shape[k];
    }
    Tensor32 t;
    t.shape = std::move(shape);
    t.data.resize(static_cast<std::size_t>(numel));
    r.read_raw(t.data.data(), t.data.size() * sizeof(float));
    out.add(name, std::move(t));
  }
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_checkpoint(const nlohmann::json& manifest, const NamedTensors& tensors,
                      const fs::path& dir,
                      const std::function<void(const fs::path&)>& extra) {
  if (fs::exists(dir)) throw std::runtime_error(dir.string() + ": already exists");
  fs::path parent = dir.parent_path().empty() ? "." : dir.parent_path();
  fs::create_directories(parent);
  fs::path stage = dir;
  stage += ".staging";
  fs::remove_all(stage);
  fs::create_directories(stage);
  write_blob(tensors, stage / "tensors.blob");
  {
    std::ofstream out(stage / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error((stage / "manifest.json").string() + ": write failed");
  }
  if (extra) extra(stage);
  fs::rename(stage, dir);
}

Checkpoint read_checkpoint(const fs::path& dir) {
  fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw std::runtime_error(mpath.string() + ": cannot open (not a checkpoint dir?)");
  Checkpoint ck;
  in >> ck.manifest;
  fs::path bpath = dir / "tensors.blob";
  if (!fs::exists(bpath)) throw std::runtime_error(bpath.string() + ": missing tensor blob");
  ck.tensors = read_blob(bpath);
  return ck;
}

std::uint64_t checkpoint_hash(const fs::path& dir) { return fnv1a_file(dir / "tensors.blob"); }

bool lineage_mismatch(const nlohmann::json& manifest, const std::string& key,
                      const std::string& expected) {
  if (!manifest.contains("lineage")) return false;
  const auto& lin = manifest["lineage"];
  if (!lin.contains(key)) return false;
  return lin[key].get<std::string>() != expected;
}

}  // namespace gf
