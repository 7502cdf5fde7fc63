#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odetex/tensor.hpp"

namespace odetex::io {

// Single-file tensor archive: magic "NODEAPP1", little-endian u32 format
// version, length-prefixed manifest (names, dtypes, shapes, payload offsets),
// then the raw payloads. Serves checkpoints, map dumps, and external
// descriptor-bank weights alike.
constexpr char kArchiveMagic[8] = {'N', 'O', 'D', 'E', 'A', 'P', 'P', '1'};
constexpr std::uint32_t kArchiveVersion = 1;

enum class Dtype : std::uint8_t { kF32 = 0, kU64 = 1 };

struct ArchiveEntry {
  std::string name;
  Dtype dtype = Dtype::kF32;
  ad::Shape shape;
  std::vector<float> f32;
  std::vector<std::uint64_t> u64;

  static ArchiveEntry tensor(std::string name, const ad::Tensor& t);
  static ArchiveEntry words(std::string name, std::vector<std::uint64_t> w);
  static ArchiveEntry word(std::string name, std::uint64_t w);

  ad::Tensor to_tensor() const;  // f32 entries only
};

void save_archive(const std::string& path,
                  const std::vector<ArchiveEntry>& entries);
// Throws on bad magic, unsupported (newer) version, or truncation.
std::vector<ArchiveEntry> load_archive(const std::string& path);

const ArchiveEntry& find_entry(const std::vector<ArchiveEntry>& entries,
                               const std::string& name);
const ArchiveEntry* find_entry_opt(const std::vector<ArchiveEntry>& entries,
                                   const std::string& name);

}  // namespace odetex::io
