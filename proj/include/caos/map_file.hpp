#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>

#include "caos/bytes.hpp"
#include "caos/types.hpp"

// Map file: "CAOSMAP1" | version u16 | n u64 | N u64 | client_count u16 |
// client_id u16 | role u8, then n records of
// bid u64 | ts u64 | psns count u32 + u64s | vf count u32 + u64s.

namespace caos {

inline constexpr std::string_view kMapMagic = "CAOSMAP1";
inline constexpr std::uint16_t kMapVersion = 1;

inline Bytes encode_map(const ClientMap& map) {
  Bytes out;
  ByteWriter w(out);
  w.raw(kMapMagic);
  w.u16(kMapVersion);
  w.u64(map.n());
  w.u64(map.positions());
  w.u16(map.client_count());
  w.u16(map.client_id());
  w.u8(static_cast<std::uint8_t>(map.role()));
  for (std::uint64_t i = 0; i < map.n(); ++i) {
    const auto& e = map.entry(block_id(i));
    w.u64(i);
    w.u64(e.ts);
    w.u32(static_cast<std::uint32_t>(e.psns.size()));
    for (Position p : e.psns) w.u64(p);
    w.u32(static_cast<std::uint32_t>(e.vf.size()));
    for (Position p : e.vf) w.u64(p);
  }
  return out;
}

inline ClientMap decode_map(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMapMagic);
  if (auto v = r.u16(); v != kMapVersion)
    throw FormatError("unsupported map version " + std::to_string(v), r.offset() - 2);
  std::uint64_t n = r.u64();
  std::uint64_t positions = r.u64();
  std::uint16_t client_count = r.u16();
  std::uint16_t client_id = r.u16();
  std::uint8_t role = r.u8();
  if (role > 2) throw FormatError("bad role byte", r.offset() - 1);
  if (client_count == 0) throw FormatError("client_count is zero", r.offset() - 5);
  ClientMap map(n, positions, client_count, client_id, static_cast<Role>(role));
  std::vector<bool> seen(n, false);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::size_t at = r.offset();
    std::uint64_t bid = r.u64();
    if (bid >= n || seen[bid]) throw FormatError("bad or repeated block id", at);
    seen[bid] = true;
    BlockId b = block_id(bid);
    map.set_ts(b, r.u64());
    std::uint32_t np = r.u32();
    for (std::uint32_t k = 0; k < np; ++k) {
      at = r.offset();
      Position p = r.u64();
      if (p >= positions) throw FormatError("position out of range", at);
      if (!is_free(map.owner(p))) throw FormatError("position listed twice", at);
      map.claim(p, b);
    }
    std::uint32_t nv = r.u32();
    for (std::uint32_t k = 0; k < nv; ++k) {
      at = r.offset();
      Position p = r.u64();
      if (map.owner(p) != b) throw FormatError("verified position not in psns", at);
      map.verify(b, p);
    }
  }
  r.expect_end();
  return map;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

/// Writes to a temporary sibling and renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> b,
                              std::filesystem::perms perms = std::filesystem::perms::owner_read |
                                                             std::filesystem::perms::owner_write) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::permissions(tmp, perms);
  std::filesystem::rename(tmp, path);
}

inline ClientMap load_map(const std::filesystem::path& path) { return decode_map(read_file(path)); }

inline void save_map(const std::filesystem::path& path, const ClientMap& map) {
  write_file_atomic(path, encode_map(map));
}

}  // namespace caos
