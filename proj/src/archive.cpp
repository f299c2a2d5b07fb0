#include "ff/archive.hpp"

#include <cstring>

#include "ff/errors.hpp"
#include "json.hpp"

namespace ff {

namespace {

constexpr char kMagic[4] = {'F', 'F', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw IOFailure("archive: unknown dtype '" + dtype + "'");
}

}  // namespace

ArchiveWriter::ArchiveWriter(std::filesystem::path path) : path_(std::move(path)) {}

void ArchiveWriter::add_f32(const std::string& name,
                            const std::vector<std::int64_t>& shape, const float* data) {
  ArchiveEntry e{name, "f32", shape, payload_.size()};
  const std::size_t bytes = static_cast<std::size_t>(e.numel()) * 4;
  payload_.insert(payload_.end(), reinterpret_cast<const char*>(data),
                  reinterpret_cast<const char*>(data) + bytes);
  entries_.push_back(std::move(e));
}

void ArchiveWriter::add_f64(const std::string& name,
                            const std::vector<std::int64_t>& shape, const double* data) {
  ArchiveEntry e{name, "f64", shape, payload_.size()};
  const std::size_t bytes = static_cast<std::size_t>(e.numel()) * 8;
  payload_.insert(payload_.end(), reinterpret_cast<const char*>(data),
                  reinterpret_cast<const char*>(data) + bytes);
  entries_.push_back(std::move(e));
}

void ArchiveWriter::finish() {
  if (finished_) throw IOFailure("archive: finish called twice");
  finished_ = true;

  nlohmann::json manifest;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    manifest["tensors"].push_back(
        {{"name", e.name}, {"dtype", e.dtype}, {"shape", e.shape}, {"offset", e.offset}});
  }
  const std::string mjson = manifest.dump();

  const auto tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IOFailure("archive: cannot open " + tmp + " for writing");
    out.write(kMagic, 4);
    std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    std::uint64_t mlen = mjson.size();
    out.write(reinterpret_cast<const char*>(&mlen), 8);
    out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    out.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
    if (!out) throw IOFailure("archive: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path_);
}

ArchiveReader::ArchiveReader(std::filesystem::path path) : path_(std::move(path)) {
  file_.open(path_, std::ios::binary);
  if (!file_) throw IOFailure("archive: cannot open " + path_.string());

  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t mlen = 0;
  file_.read(magic, 4);
  file_.read(reinterpret_cast<char*>(&version), 4);
  file_.read(reinterpret_cast<char*>(&mlen), 8);
  if (!file_ || std::memcmp(magic, kMagic, 4) != 0) {
    throw IOFailure("archive: bad magic in " + path_.string());
  }
  if (version != kVersion) {
    throw IOFailure("archive: unsupported version in " + path_.string());
  }

  std::string mjson(mlen, '\0');
  file_.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!file_) throw IOFailure("archive: truncated manifest in " + path_.string());
  payload_start_ = 16 + mlen;

  nlohmann::json manifest = nlohmann::json::parse(mjson);
  for (const auto& t : manifest.at("tensors")) {
    ArchiveEntry e;
    e.name = t.at("name").get<std::string>();
    e.dtype = t.at("dtype").get<std::string>();
    e.shape = t.at("shape").get<std::vector<std::int64_t>>();
    e.offset = t.at("offset").get<std::uint64_t>();
    entries_.push_back(std::move(e));
  }
}

bool ArchiveReader::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const ArchiveEntry& ArchiveReader::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw MissingTensor("archive " + path_.string() + " lacks tensor '" + name + "'");
}

void ArchiveReader::read_raw(const ArchiveEntry& e, void* dst, std::size_t bytes) const {
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(payload_start_ + e.offset));
  file_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (!file_) {
    throw IOFailure("archive: truncated payload reading '" + e.name + "' from " +
                    path_.string());
  }
}

Tensor ArchiveReader::read_f32(const std::string& name,
                               const std::vector<std::int64_t>& expected_shape) const {
  const ArchiveEntry& e = entry(name);
  if (e.dtype != "f32") {
    throw ShapeMismatch("tensor '" + name + "' has dtype " + e.dtype + ", expected f32");
  }
  if (!expected_shape.empty() && e.shape != expected_shape) {
    throw ShapeMismatch("tensor '" + name + "' has shape " + shape_str(e.shape) +
                        ", expected " + shape_str(expected_shape));
  }
  Tensor t(e.shape);
  read_raw(e, t.data.data(), t.data.size() * 4);
  return t;
}

std::vector<double> ArchiveReader::read_f64(
    const std::string& name, const std::vector<std::int64_t>& expected_shape) const {
  const ArchiveEntry& e = entry(name);
  if (e.dtype != "f64") {
    throw ShapeMismatch("tensor '" + name + "' has dtype " + e.dtype + ", expected f64");
  }
  if (!expected_shape.empty() && e.shape != expected_shape) {
    throw ShapeMismatch("tensor '" + name + "' has shape " + shape_str(e.shape) +
                        ", expected " + shape_str(expected_shape));
  }
  std::vector<double> out(static_cast<std::size_t>(e.numel()));
  read_raw(e, out.data(), out.size() * 8);
  return out;
}

}  // namespace ff
