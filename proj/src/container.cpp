#include "sta/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sta {

static_assert(std::endian::native == std::endian::little, "STAT container assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'A', 'T'};

void write_u32(std::ofstream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::ifstream& is) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("STAT: truncated file");
  return v;
}

uint64_t read_u64(std::ifstream& is) {
  uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("STAT: truncated file");
  return v;
}

}  // namespace

const NamedArray* Container::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& Container::at(const std::string& name) const {
  if (const NamedArray* a = find(name)) return *a;
  throw FormatError("STAT: missing tensor '" + name + "'");
}

void Container::add(std::string name, Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("container: shape/data mismatch for '" + name + "'");
  arrays.push_back({std::move(name), std::move(shape), std::move(data)});
}

void save_container(const std::string& path, const Container& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kContainerVersion);
  write_u32(os, static_cast<uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    write_u32(os, static_cast<uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    write_u32(os, static_cast<uint32_t>(a.shape.size()));
    for (int64_t d : a.shape) write_u64(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(a.data.data()),
             static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  write_u32(os, static_cast<uint32_t>(c.metadata.size()));
  os.write(c.metadata.data(), static_cast<std::streamsize>(c.metadata.size()));
  if (!os) throw IoError("write failed: " + path);
}

Container load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("STAT: truncated file");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("STAT: bad magic bytes");
  const uint32_t version = read_u32(is);
  if (version != kContainerVersion)
    throw FormatError("STAT: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kContainerVersion) + ")");
  const uint32_t count = read_u32(is);
  Container c;
  c.arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const uint32_t name_len = read_u32(is);
    a.name.resize(name_len);
    if (!is.read(a.name.data(), name_len)) throw FormatError("STAT: truncated file");
    const uint32_t rank = read_u32(is);
    if (rank > 16) throw FormatError("STAT: implausible rank " + std::to_string(rank));
    a.shape.resize(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint64_t d = read_u64(is);
      if (d == 0 || d > (1ULL << 40)) throw FormatError("STAT: implausible dimension");
      a.shape[r] = static_cast<int64_t>(d);
      numel *= a.shape[r];
    }
    a.data.resize(static_cast<size_t>(numel));
    if (!is.read(reinterpret_cast<char*>(a.data.data()),
                 static_cast<std::streamsize>(a.data.size() * sizeof(double))))
      throw FormatError("STAT: truncated file");
    c.arrays.push_back(std::move(a));
  }
  const uint32_t meta_len = read_u32(is);
  c.metadata.resize(meta_len);
  if (meta_len > 0 && !is.read(c.metadata.data(), meta_len)) throw FormatError("STAT: truncated file");
  return c;
}

}  // namespace sta
