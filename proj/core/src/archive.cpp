#include "odetex/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace odetex::io {

ArchiveEntry ArchiveEntry::tensor(std::string name, const ad::Tensor& t) {
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = Dtype::kF32;
  e.shape = t.shape();
  e.f32 = t.values();
  return e;
}

ArchiveEntry ArchiveEntry::words(std::string name,
                                 std::vector<std::uint64_t> w) {
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = Dtype::kU64;
  e.shape = {static_cast<int>(w.size())};
  e.u64 = std::move(w);
  return e;
}

ArchiveEntry ArchiveEntry::word(std::string name, std::uint64_t w) {
  return words(std::move(name), {w});
}

ad::Tensor ArchiveEntry::to_tensor() const {
  if (dtype != Dtype::kF32)
    throw std::runtime_error("archive: entry " + name + " is not f32");
  return ad::Tensor::constant(shape, f32);
}

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));  // little-endian host assumed
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size())
    throw std::runtime_error("archive: truncated file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::size_t payload_bytes(const ArchiveEntry& e) {
  return e.dtype == Dtype::kF32 ? e.f32.size() * 4 : e.u64.size() * 8;
}

}  // namespace

void save_archive(const std::string& path,
                  const std::vector<ArchiveEntry>& entries) {
  std::string manifest;
  put<std::uint32_t>(manifest, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    put<std::uint32_t>(manifest, static_cast<std::uint32_t>(e.name.size()));
    manifest.append(e.name);
    put<std::uint8_t>(manifest, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(manifest, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) put<std::int32_t>(manifest, d);
    put<std::uint64_t>(manifest, offset);
    put<std::uint64_t>(manifest, payload_bytes(e));
    offset += payload_bytes(e);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("archive: cannot write " + path);
  f.write(kArchiveMagic, 8);
  std::string header;
  put<std::uint32_t>(header, kArchiveVersion);
  put<std::uint64_t>(header, manifest.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& e : entries) {
    if (e.dtype == Dtype::kF32)
      f.write(reinterpret_cast<const char*>(e.f32.data()),
              static_cast<std::streamsize>(e.f32.size() * 4));
    else
      f.write(reinterpret_cast<const char*>(e.u64.data()),
              static_cast<std::streamsize>(e.u64.size() * 8));
  }
  if (!f) throw std::runtime_error("archive: write failed for " + path);
}

std::vector<ArchiveEntry> load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("archive: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 4 + 8 || std::memcmp(buf.data(), kArchiveMagic, 8) != 0)
    throw std::runtime_error("archive: bad magic in " + path);
  std::size_t pos = 8;
  const auto version = take<std::uint32_t>(buf, pos);
  if (version > kArchiveVersion)
    throw std::runtime_error("archive: unsupported format version " +
                             std::to_string(version));
  const auto manifest_len = take<std::uint64_t>(buf, pos);
  const std::size_t manifest_end = pos + manifest_len;
  if (manifest_end > buf.size())
    throw std::runtime_error("archive: truncated file");
  const std::size_t payload_base = manifest_end;

  const auto n = take<std::uint32_t>(buf, pos);
  std::vector<ArchiveEntry> entries;
  entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ArchiveEntry e;
    const auto name_len = take<std::uint32_t>(buf, pos);
    if (pos + name_len > manifest_end)
      throw std::runtime_error("archive: truncated manifest");
    e.name.assign(buf, pos, name_len);
    pos += name_len;
    e.dtype = static_cast<Dtype>(take<std::uint8_t>(buf, pos));
    if (e.dtype != Dtype::kF32 && e.dtype != Dtype::kU64)
      throw std::runtime_error("archive: unknown dtype for " + e.name);
    const auto ndim = take<std::uint32_t>(buf, pos);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = take<std::int32_t>(buf, pos);
      if (dim < 0) throw std::runtime_error("archive: negative dimension");
      e.shape.push_back(dim);
      count *= static_cast<std::size_t>(dim);
    }
    const auto off = take<std::uint64_t>(buf, pos);
    const auto bytes = take<std::uint64_t>(buf, pos);
    const std::size_t elem = e.dtype == Dtype::kF32 ? 4 : 8;
    if (bytes != count * elem)
      throw std::runtime_error("archive: shape/payload mismatch for " + e.name);
    if (payload_base + off + bytes > buf.size())
      throw std::runtime_error("archive: truncated payload for " + e.name);
    if (e.dtype == Dtype::kF32) {
      e.f32.resize(count);
      std::memcpy(e.f32.data(), buf.data() + payload_base + off, bytes);
    } else {
      e.u64.resize(count);
      std::memcpy(e.u64.data(), buf.data() + payload_base + off, bytes);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

const ArchiveEntry* find_entry_opt(const std::vector<ArchiveEntry>& entries,
                                   const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const ArchiveEntry& find_entry(const std::vector<ArchiveEntry>& entries,
                               const std::string& name) {
  const ArchiveEntry* e = find_entry_opt(entries, name);
  if (!e) throw std::runtime_error("archive: missing entry " + name);
  return *e;
}

}  // namespace odetex::io
