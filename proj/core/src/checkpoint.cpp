#include "milora/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "milora/build.hpp"
#include "milora/errors.hpp"

namespace milora {

namespace {

constexpr const char* kFormatTag = "milora-checkpoint-v1";
constexpr int64_t kF64Bytes = 8;

void put_le64(std::string& out, uint64_t bits) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

uint64_t get_le64(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  return bits;
}

int64_t parse_field(const std::string& tensor, const std::string& field) {
  int64_t out = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  if (ec != std::errc{} || ptr != field.data() + field.size() || out < 0)
    throw IoError("checkpoint: bad directory field '" + field + "' for tensor " + tensor);
  return out;
}

struct DirEntry {
  std::string name;
  int64_t rows = 0, cols = 0, offset = 0, bytes = 0;
};

}  // namespace

Checkpoint snapshot(const RunConfig& rc, Model& m) {
  Checkpoint ck;
  ck.config = rc;
  for (const Parameter* p : m.all_params()) ck.tensors.emplace_back(p->name, p->value);
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string out(kFormatTag);
  out += "\n[config]\n";
  out += serialize_config(ck.config);
  out += "[tensors]\n";
  int64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    const int64_t bytes = t.size() * kF64Bytes;
    out += name + " " + std::to_string(t.rows()) + " " + std::to_string(t.cols()) +
           " " + std::to_string(offset) + " " + std::to_string(bytes) + "\n";
    offset += bytes;
  }
  out += "[payload]\n";
  out.reserve(out.size() + static_cast<size_t>(offset));
  for (const auto& [name, t] : ck.tensors)
    for (double v : t.data()) put_le64(out, std::bit_cast<uint64_t>(v));
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw IoError("checkpoint: write to " + path + " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot read " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  // Manifest = everything before the payload marker.
  const std::string marker = "\n[payload]\n";
  const size_t marker_at = raw.find(marker);
  if (marker_at == std::string::npos)
    throw IoError("checkpoint: " + path + " has no payload section");
  const size_t payload_at = marker_at + marker.size();
  const int64_t payload_bytes = static_cast<int64_t>(raw.size() - payload_at);

  std::stringstream manifest(raw.substr(0, marker_at + 1));
  std::string line;
  if (!std::getline(manifest, line) || line != kFormatTag)
    throw IoError("checkpoint: " + path + " is not " + kFormatTag + " (saw '" + line + "')");
  if (!std::getline(manifest, line) || line != "[config]")
    throw IoError("checkpoint: " + path + " is missing the [config] section");

  std::string config_text;
  bool tensors_seen = false;
  while (std::getline(manifest, line)) {
    if (line == "[tensors]") {
      tensors_seen = true;
      break;
    }
    config_text += line;
    config_text += "\n";
  }
  if (!tensors_seen)
    throw IoError("checkpoint: " + path + " is missing the [tensors] section");

  std::vector<DirEntry> dir;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    DirEntry e;
    std::string rows_s, cols_s, offset_s, bytes_s, extra;
    if (!(row >> e.name >> rows_s >> cols_s >> offset_s >> bytes_s) || (row >> extra))
      throw IoError("checkpoint: bad directory line '" + line + "'");
    e.rows = parse_field(e.name, rows_s);
    e.cols = parse_field(e.name, cols_s);
    e.offset = parse_field(e.name, offset_s);
    e.bytes = parse_field(e.name, bytes_s);
    dir.push_back(std::move(e));
  }

  // Validate the whole directory against the payload before touching it.
  int64_t expect_offset = 0;
  for (const DirEntry& e : dir) {
    if (e.bytes != e.rows * e.cols * kF64Bytes)
      throw IoError("checkpoint: tensor " + e.name + " declares " +
                    std::to_string(e.bytes) + " bytes for shape " +
                    std::to_string(e.rows) + "x" + std::to_string(e.cols));
    if (e.offset != expect_offset)
      throw IoError("checkpoint: tensor " + e.name + " at offset " +
                    std::to_string(e.offset) + ", expected " +
                    std::to_string(expect_offset) + " (payload must be contiguous)");
    expect_offset += e.bytes;
    if (e.offset + e.bytes > payload_bytes)
      throw IoError("checkpoint: payload truncated inside tensor " + e.name + " (" +
                    std::to_string(payload_bytes) + " bytes on disk, needs " +
                    std::to_string(e.offset + e.bytes) + ")");
  }
  if (expect_offset != payload_bytes)
    throw IoError("checkpoint: payload is " + std::to_string(payload_bytes) +
                  " bytes but the directory covers " + std::to_string(expect_offset));

  Checkpoint ck;
  ck.config = parse_config_text(config_text);
  const unsigned char* payload =
      reinterpret_cast<const unsigned char*>(raw.data()) + payload_at;
  for (const DirEntry& e : dir) {
    Tensor t(static_cast<int>(e.rows), static_cast<int>(e.cols));
    const unsigned char* src = payload + e.offset;
    for (int64_t i = 0; i < t.size(); ++i)
      t.data()[static_cast<size_t>(i)] = std::bit_cast<double>(get_le64(src + i * kF64Bytes));
    ck.tensors.emplace_back(e.name, std::move(t));
  }
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Model m = model_from_config(ck.config);
  const std::vector<Parameter*> params = m.all_params();
  if (params.size() != ck.tensors.size())
    throw IoError("checkpoint: directory has " + std::to_string(ck.tensors.size()) +
                  " tensors, architecture has " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    const auto& [name, t] = ck.tensors[i];
    if (p->name != name)
      throw IoError("checkpoint: tensor " + name + " where the architecture expects " +
                    p->name);
    if (!p->value.same_shape(t))
      throw IoError("checkpoint: tensor " + name + " is " + t.shape_str() +
                    ", architecture expects " + p->value.shape_str());
    p->value = t;
  }
  return m;
}

Model load_model(const std::string& path) { return restore_model(load_checkpoint(path)); }

}  // namespace milora
