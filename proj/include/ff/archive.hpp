#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ff/tensor.hpp"

namespace ff {

// Named-tensor container used for backbone weights and head checkpoints.
//
// File layout (little-endian):
//   bytes 0..3   magic "FFTA"
//   bytes 4..7   format version (u32)
//   bytes 8..15  manifest length in bytes (u64)
//   manifest     JSON: {"tensors":[{"name","dtype","shape","offset"},...]}
//   payload      raw tensor data; offset is relative to payload start
//
// dtype is "f32" or "f64". Offsets are byte offsets, tensors may appear in
// any order, and readers ignore tensors they do not ask for.

struct ArchiveEntry {
  std::string name;
  std::string dtype;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;

  std::int64_t numel() const { return Tensor::numel_of(shape); }
};

class ArchiveWriter {
 public:
  explicit ArchiveWriter(std::filesystem::path path);

  void add_f32(const std::string& name, const std::vector<std::int64_t>& shape,
               const float* data);
  void add_f64(const std::string& name, const std::vector<std::int64_t>& shape,
               const double* data);
  // Writes the file (temp + rename). No further adds afterwards.
  void finish();

 private:
  std::filesystem::path path_;
  std::vector<ArchiveEntry> entries_;
  std::vector<char> payload_;
  bool finished_ = false;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(std::filesystem::path path);

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  bool contains(const std::string& name) const;
  // Throws MissingTensor / ShapeMismatch. expected_shape may be empty to
  // accept whatever the archive holds.
  Tensor read_f32(const std::string& name,
                  const std::vector<std::int64_t>& expected_shape = {}) const;
  std::vector<double> read_f64(const std::string& name,
                               const std::vector<std::int64_t>& expected_shape = {}) const;
  const ArchiveEntry& entry(const std::string& name) const;

 private:
  std::filesystem::path path_;
  std::vector<ArchiveEntry> entries_;
  std::uint64_t payload_start_ = 0;
  mutable std::ifstream file_;

  void read_raw(const ArchiveEntry& e, void* dst, std::size_t bytes) const;
};

}  // namespace ff
