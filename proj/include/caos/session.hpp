#pragma once

#include <optional>
#include <span>

#include "caos/store.hpp"
#include "caos/types.hpp"
#include "caos/wire.hpp"

// The client's view of a store: read a locked pair, write it back, bulk load.
// Implementations seal blocks on the way out and open them on the way in, so
// the client logic only handles plaintext blocks.

namespace caos {

struct ReadResult {
  LockToken token = 0;
  BlockPlain first, second;
};

/// Traffic counters, in ciphertexts and bytes on the wire.
struct TrafficStats {
  std::uint64_t blocks_down = 0, blocks_up = 0;
  std::uint64_t bytes_down = 0, bytes_up = 0;
  std::uint64_t locked = 0, stale = 0;
};

class StoreSession {
 public:
  virtual ~StoreSession() = default;

  virtual wire::InfoResp info() = 0;
  /// Locks and reads p1, p2. Returns nullopt if either position is locked.
  virtual std::optional<ReadResult> read_pair(Position p1, Position p2) = 0;
  /// Writes both blocks back. Returns false if the token went stale.
  virtual bool write_pair(LockToken token, Position p1, const BlockPlain& b1, Position p2,
                          const BlockPlain& b2) = 0;
  /// Uploads consecutive slots starting at `start`.
  virtual void bulk_init(Position start, std::span<const BlockPlain> blocks) = 0;

  const TrafficStats& traffic() const { return traffic_; }

 protected:
  TrafficStats traffic_;
};

[[noreturn]] inline void throw_err(ErrCode c, const char* during) {
  throw ProtocolError(std::string("server replied ") + wire::err_name(c) + " to " + during);
}

/// In-process session over plaintext slots; used by the simulator, where the
/// adversary sees positions only and encryption adds nothing observable.
class PlainSession : public StoreSession {
 public:
  using Service = StoreService<MemorySlots<BlockPlain>>;

  PlainSession(Service& service, std::size_t block_size, std::function<std::uint64_t()> now)
      : service_(service), block_size_(block_size), now_(std::move(now)) {}

  wire::InfoResp info() override {
    return {service_.storage().positions(), 0, static_cast<std::uint32_t>(block_size_)};
  }

  std::optional<ReadResult> read_pair(Position p1, Position p2) override {
    auto r = service_.serve_read(p1, p2, now_());
    if (auto* e = std::get_if<ErrCode>(&r)) {
      if (*e == ErrCode::kLocked) {
        ++traffic_.locked;
        return std::nullopt;
      }
      throw_err(*e, "READ");
    }
    auto& g = std::get<ReadGrant<BlockPlain>>(r);
    traffic_.blocks_down += 2;
    return ReadResult{g.token, std::move(g.first), std::move(g.second)};
  }

  bool write_pair(LockToken token, Position p1, const BlockPlain& b1, Position p2,
                  const BlockPlain& b2) override {
    CAOS_ASSERT(b1.data.size() == block_size_ && b2.data.size() == block_size_,
                "block data size mismatch");
    traffic_.blocks_up += 2;
    if (auto e = service_.serve_write(token, p1, b1, p2, b2, now_())) {
      if (*e == ErrCode::kStaleToken) {
        ++traffic_.stale;
        return false;
      }
      throw_err(*e, "WRITE");
    }
    return true;
  }

  void bulk_init(Position start, std::span<const BlockPlain> blocks) override {
    if (auto e = service_.serve_bulk_init(start, blocks)) throw_err(*e, "BULK_INIT");
  }

 private:
  Service& service_;
  std::size_t block_size_;
  std::function<std::uint64_t()> now_;
};

}  // namespace caos
