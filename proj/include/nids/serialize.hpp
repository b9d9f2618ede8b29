#pragma once

// Versioned binary container shared by preprocessing artifacts and model
// checkpoints: magic + version, a JSON text manifest, named binary sections,
// and a whole-file CRC32 trailer. Everything is little-endian on disk and
// float payloads round-trip bit for bit.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "nids/error.hpp"

namespace nids {

inline constexpr uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'N', 'I', 'D', 'S'};

namespace ser_detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) fail("Truncated", "container ends inside a u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) fail("Truncated", "container ends inside a u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

inline uint32_t crc_of(const std::string& bytes) {
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}

}  // namespace ser_detail

class SectionWriter {
public:
  nlohmann::json manifest = nlohmann::json::object();

  void add_bytes(const std::string& name, std::string payload) {
    sections_.emplace_back(name, std::move(payload));
  }

  void add_f64(const std::string& name, const std::vector<double>& values) {
    std::string payload;
    payload.reserve(values.size() * 8);
    for (double d : values) {
      uint64_t bits;
      std::memcpy(&bits, &d, 8);
      ser_detail::put_u64(payload, bits);
    }
    add_bytes(name, std::move(payload));
  }

  void add_i32(const std::string& name, const std::vector<int32_t>& values) {
    std::string payload;
    payload.reserve(values.size() * 4);
    for (int32_t v : values)
      ser_detail::put_u32(payload, static_cast<uint32_t>(v));
    add_bytes(name, std::move(payload));
  }

  void add_u32(const std::string& name, const std::vector<uint32_t>& values) {
    std::string payload;
    payload.reserve(values.size() * 4);
    for (uint32_t v : values) ser_detail::put_u32(payload, v);
    add_bytes(name, std::move(payload));
  }

  std::string finish() const {
    std::string out;
    out.append(kContainerMagic, 4);
    ser_detail::put_u32(out, kContainerVersion);
    std::string manifest_text = manifest.dump();
    ser_detail::put_u64(out, manifest_text.size());
    out += manifest_text;
    ser_detail::put_u32(out, static_cast<uint32_t>(sections_.size()));
    for (const auto& [name, payload] : sections_) {
      ser_detail::put_u32(out, static_cast<uint32_t>(name.size()));
      out += name;
      ser_detail::put_u64(out, payload.size());
      out += payload;
    }
    ser_detail::put_u32(out, ser_detail::crc_of(out));
    return out;
  }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("FileNotFound", "cannot write " + path.string());
    std::string bytes = finish();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail("WriteFailed", "short write to " + path.string());
  }

private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

class SectionReader {
public:
  nlohmann::json manifest;
  uint32_t version = 0;

  static SectionReader from_bytes(const std::string& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4 + 4)
      fail("Truncated", "container smaller than its fixed header");
    uint32_t stored_crc;
    {
      std::size_t tail = bytes.size() - 4;
      stored_crc = 0;
      for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(
                          static_cast<unsigned char>(bytes[tail + i]))
                      << (8 * i);
    }
    std::string head = bytes.substr(0, bytes.size() - 4);
    if (ser_detail::crc_of(head) != stored_crc)
      fail("ChecksumMismatch", "whole-file CRC32 does not match");

    SectionReader r;
    std::size_t pos = 0;
    if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0)
      fail("UnknownVersion", "bad magic bytes");
    pos = 4;
    r.version = ser_detail::get_u32(bytes, pos);
    if (r.version != kContainerVersion)
      fail("UnknownVersion", "container version " + std::to_string(r.version));
    uint64_t manifest_len = ser_detail::get_u64(bytes, pos);
    if (pos + manifest_len > head.size())
      fail("Truncated", "manifest extends past end of file");
    try {
      r.manifest = nlohmann::json::parse(bytes.substr(pos, manifest_len));
    } catch (const nlohmann::json::exception& e) {
      fail("Truncated", std::string("manifest is not valid JSON: ") + e.what());
    }
    pos += manifest_len;
    uint32_t n_sections = ser_detail::get_u32(bytes, pos);
    for (uint32_t i = 0; i < n_sections; ++i) {
      uint32_t name_len = ser_detail::get_u32(bytes, pos);
      if (pos + name_len > head.size()) fail("Truncated", "section name cut off");
      std::string name = bytes.substr(pos, name_len);
      pos += name_len;
      uint64_t payload_len = ser_detail::get_u64(bytes, pos);
      if (pos + payload_len > head.size())
        fail("Truncated", "section '" + name + "' payload cut off");
      r.sections_[name] = bytes.substr(pos, payload_len);
      pos += payload_len;
    }
    return r;
  }

  static SectionReader from_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("FileNotFound", "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    return from_bytes(bytes);
  }

  bool has(const std::string& name) const { return sections_.count(name) != 0; }

  const std::string& bytes(const std::string& name) const {
    auto it = sections_.find(name);
    if (it == sections_.end())
      fail("MissingSection", "no section named '" + name + "'");
    return it->second;
  }

  std::vector<double> f64(const std::string& name) const {
    const std::string& payload = bytes(name);
    if (payload.size() % 8 != 0)
      fail("Truncated", "section '" + name + "' is not a whole f64 array");
    std::vector<double> out(payload.size() / 8);
    std::size_t pos = 0;
    for (double& d : out) {
      uint64_t bits = ser_detail::get_u64(payload, pos);
      std::memcpy(&d, &bits, 8);
    }
    return out;
  }

  std::vector<int32_t> i32(const std::string& name) const {
    const std::string& payload = bytes(name);
    if (payload.size() % 4 != 0)
      fail("Truncated", "section '" + name + "' is not a whole i32 array");
    std::vector<int32_t> out(payload.size() / 4);
    std::size_t pos = 0;
    for (int32_t& v : out)
      v = static_cast<int32_t>(ser_detail::get_u32(payload, pos));
    return out;
  }

  std::vector<uint32_t> u32(const std::string& name) const {
    const std::string& payload = bytes(name);
    if (payload.size() % 4 != 0)
      fail("Truncated", "section '" + name + "' is not a whole u32 array");
    std::vector<uint32_t> out(payload.size() / 4);
    std::size_t pos = 0;
    for (uint32_t& v : out) v = ser_detail::get_u32(payload, pos);
    return out;
  }

private:
  std::unordered_map<std::string, std::string> sections_;
};

}  // namespace nids
