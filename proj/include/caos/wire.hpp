#pragma once

#include <variant>

#include "caos/bytes.hpp"
#include "caos/types.hpp"

// Client/server frames: length u32 | type u8 | body, where length counts the
// type byte and the body. All integers little-endian; every ciphertext is
// carried as length u32 + bytes.

namespace caos::wire {

using LockToken = std::uint64_t;

enum class MsgType : std::uint8_t {
  kInfoReq = 0x01,
  kReadReq = 0x02,
  kReadResp = 0x03,
  kWriteReq = 0x04,
  kWriteAck = 0x05,
  kErr = 0x06,
  kBulkInit = 0x07,
  kInfoResp = 0x08,
};

enum class ErrCode : std::uint8_t {
  kLocked = 1,
  kStaleToken = 2,
  kBadPosition = 3,
  kNotInitialized = 4,
};

inline const char* err_name(ErrCode c) {
  switch (c) {
    case ErrCode::kLocked: return "LOCKED";
    case ErrCode::kStaleToken: return "STALE_TOKEN";
    case ErrCode::kBadPosition: return "BAD_POSITION";
    case ErrCode::kNotInitialized: return "NOT_INITIALIZED";
  }
  return "UNKNOWN";
}

struct InfoReq {
  bool operator==(const InfoReq&) const = default;
};
struct InfoResp {
  std::uint64_t positions = 0;
  std::uint32_t sealed_size = 0;
  std::uint32_t block_size = 0;
  bool operator==(const InfoResp&) const = default;
};
struct ReadReq {
  Position p1 = 0, p2 = 0;
  bool operator==(const ReadReq&) const = default;
};
struct ReadResp {
  LockToken token = 0;
  Bytes sealed1, sealed2;
  bool operator==(const ReadResp&) const = default;
};
struct WriteReq {
  LockToken token = 0;
  Position p1 = 0;
  Bytes sealed1;
  Position p2 = 0;
  Bytes sealed2;
  bool operator==(const WriteReq&) const = default;
};
struct WriteAck {
  bool operator==(const WriteAck&) const = default;
};
struct Err {
  ErrCode code = ErrCode::kLocked;
  bool operator==(const Err&) const = default;
};
struct BulkInit {
  Position start = 0;
  std::vector<Bytes> sealed;
  bool operator==(const BulkInit&) const = default;
};

using Message = std::variant<InfoReq, InfoResp, ReadReq, ReadResp, WriteReq, WriteAck, Err, BulkInit>;

inline MsgType type_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> MsgType {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InfoReq>) return MsgType::kInfoReq;
        else if constexpr (std::is_same_v<T, InfoResp>) return MsgType::kInfoResp;
        else if constexpr (std::is_same_v<T, ReadReq>) return MsgType::kReadReq;
        else if constexpr (std::is_same_v<T, ReadResp>) return MsgType::kReadResp;
        else if constexpr (std::is_same_v<T, WriteReq>) return MsgType::kWriteReq;
        else if constexpr (std::is_same_v<T, WriteAck>) return MsgType::kWriteAck;
        else if constexpr (std::is_same_v<T, Err>) return MsgType::kErr;
        else return MsgType::kBulkInit;
      },
      m);
}

namespace detail {
inline void put_blob(ByteWriter& w, const Bytes& b) {
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.raw(b);
}
inline Bytes get_blob(ByteReader& r) {
  std::uint32_t n = r.u32();
  auto s = r.raw(n, "ciphertext");
  return Bytes(s.begin(), s.end());
}
}  // namespace detail

inline Bytes encode_message(const Message& m) {
  Bytes body;
  ByteWriter w(body);
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  std::visit(
      [&w](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InfoResp>) {
          w.u64(v.positions);
          w.u32(v.sealed_size);
          w.u32(v.block_size);
        } else if constexpr (std::is_same_v<T, ReadReq>) {
          w.u64(v.p1);
          w.u64(v.p2);
        } else if constexpr (std::is_same_v<T, ReadResp>) {
          w.u64(v.token);
          detail::put_blob(w, v.sealed1);
          detail::put_blob(w, v.sealed2);
        } else if constexpr (std::is_same_v<T, WriteReq>) {
          w.u64(v.token);
          w.u64(v.p1);
          detail::put_blob(w, v.sealed1);
          w.u64(v.p2);
          detail::put_blob(w, v.sealed2);
        } else if constexpr (std::is_same_v<T, Err>) {
          w.u8(static_cast<std::uint8_t>(v.code));
        } else if constexpr (std::is_same_v<T, BulkInit>) {
          w.u64(v.start);
          w.u32(static_cast<std::uint32_t>(v.sealed.size()));
          for (const auto& s : v.sealed) detail::put_blob(w, s);
        }
      },
      m);
  Bytes frame;
  frame.reserve(4 + body.size());
  ByteWriter f(frame);
  f.u32(static_cast<std::uint32_t>(body.size()));
  f.raw(body);
  return frame;
}

/// Decodes the type byte and body (everything after the length prefix).
inline Message decode_body(std::span<const std::uint8_t> body) {
  ByteReader r(body);
  std::uint8_t type = r.u8();
  Message m;
  switch (static_cast<MsgType>(type)) {
    case MsgType::kInfoReq: m = InfoReq{}; break;
    case MsgType::kInfoResp: {
      InfoResp v;
      v.positions = r.u64();
      v.sealed_size = r.u32();
      v.block_size = r.u32();
      m = v;
      break;
    }
    case MsgType::kReadReq: {
      ReadReq v;
      v.p1 = r.u64();
      v.p2 = r.u64();
      m = v;
      break;
    }
    case MsgType::kReadResp: {
      ReadResp v;
      v.token = r.u64();
      v.sealed1 = detail::get_blob(r);
      v.sealed2 = detail::get_blob(r);
      m = std::move(v);
      break;
    }
    case MsgType::kWriteReq: {
      WriteReq v;
      v.token = r.u64();
      v.p1 = r.u64();
      v.sealed1 = detail::get_blob(r);
      v.p2 = r.u64();
      v.sealed2 = detail::get_blob(r);
      m = std::move(v);
      break;
    }
    case MsgType::kWriteAck: m = WriteAck{}; break;
    case MsgType::kErr: {
      std::size_t at = r.offset();
      std::uint8_t c = r.u8();
      if (c < 1 || c > 4) throw FormatError("unknown error code " + std::to_string(c), at);
      m = Err{static_cast<ErrCode>(c)};
      break;
    }
    case MsgType::kBulkInit: {
      BulkInit v;
      v.start = r.u64();
      std::uint32_t count = r.u32();
      for (std::uint32_t i = 0; i < count; ++i) v.sealed.push_back(detail::get_blob(r));
      m = std::move(v);
      break;
    }
    default:
      throw FormatError("unknown message type 0x" + [type] {
        const char* hex = "0123456789abcdef";
        return std::string{hex[type >> 4], hex[type & 15]};
      }(), 0);
  }
  r.expect_end();
  return m;
}

/// Decodes one complete frame; rejects truncation and trailing bytes.
inline Message decode_message(std::span<const std::uint8_t> frame) {
  ByteReader r(frame);
  std::uint32_t len = r.u32();
  if (r.remaining() < len)
    throw FormatError("truncated frame: declared " + std::to_string(len) + " bytes, have " +
                          std::to_string(r.remaining()),
                      r.offset());
  if (r.remaining() > len)
    throw FormatError(std::to_string(r.remaining() - len) + " trailing bytes after frame",
                      4 + len);
  try {
    return decode_body(frame.subspan(4));
  } catch (const FormatError& e) {
    throw FormatError(e.message(), e.offset() + 4);
  }
}

}  // namespace caos::wire
