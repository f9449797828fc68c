#include "audron/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace audron {

namespace {

constexpr char kMagic[] = "AUDRONCKPT1";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

template <typename U>
void put_le(std::string& out, U v) {
  for (size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

uint32_t float_bits(float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

float bits_float(uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::vector<CheckpointEntry>& entries, const std::string& path) {
  std::string buf(kMagic, kMagicLen);
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != static_cast<int64_t>(e.values.size()))
      throw DimensionError("checkpoint: entry '" + e.name + "' shape " + shape_str(e.shape) +
                           " does not hold " + std::to_string(e.values.size()) + " values");
    put_le<uint32_t>(buf, static_cast<uint32_t>(e.name.size()));
    buf += e.name;
    put_le<uint32_t>(buf, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put_le<uint64_t>(buf, static_cast<uint64_t>(d));
    for (float v : e.values) put_le<uint32_t>(buf, float_bits(v));
  }
  put_le<uint64_t>(buf, fnv1a64(buf.data(), buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open " + tmp);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("checkpoint: short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: rename to " + path + ": " + ec.message());
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < kMagicLen + 8 || std::memcmp(buf.data(), kMagic, kMagicLen) != 0)
    throw FormatError("checkpoint: " + path + ": bad magic");

  const size_t body_end = buf.size() - 8;
  const uint64_t expect = get_le<uint64_t>(buf.data() + body_end);
  const uint64_t actual = fnv1a64(buf.data(), body_end);
  if (expect != actual)
    throw FormatError("checkpoint: " + path + ": checksum mismatch (corrupt file)");

  std::vector<CheckpointEntry> entries;
  size_t pos = kMagicLen;
  while (pos < body_end) {
    if (pos + 4 > body_end) throw FormatError("checkpoint: " + path + ": truncated entry");
    const uint32_t name_len = get_le<uint32_t>(buf.data() + pos);
    pos += 4;
    if (pos + name_len + 4 > body_end)
      throw FormatError("checkpoint: " + path + ": truncated name");
    CheckpointEntry e;
    e.name.assign(reinterpret_cast<const char*>(buf.data() + pos), name_len);
    pos += name_len;
    const uint32_t rank = get_le<uint32_t>(buf.data() + pos);
    pos += 4;
    if (pos + 8ull * rank > body_end) throw FormatError("checkpoint: " + path + ": truncated dims");
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const auto dim = static_cast<int64_t>(get_le<uint64_t>(buf.data() + pos));
      pos += 8;
      e.shape.push_back(dim);
      numel *= dim;
    }
    if (numel < 0 || pos + 4ull * static_cast<uint64_t>(numel) > body_end)
      throw FormatError("checkpoint: " + path + ": truncated payload for '" + e.name + "'");
    e.values.resize(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
      e.values[static_cast<size_t>(i)] = bits_float(get_le<uint32_t>(buf.data() + pos));
      pos += 4;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace audron
