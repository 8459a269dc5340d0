#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "caos/bytes.hpp"
#include "caos/errors.hpp"

// Precondition checks that stay on in release builds.
#define CAOS_ASSERT(cond, msg)                                              \
  do {                                                                      \
    if (!(cond)) {                                                          \
      std::fprintf(stderr, "%s:%d: assertion failed: %s\n", __FILE__,      \
                   __LINE__, msg);                                          \
      std::abort();                                                         \
    }                                                                       \
  } while (0)

namespace caos {

/// Slot index on the server, in [0, N).
using Position = std::uint64_t;

/// Client-side block identifier. Real ids are dense in [0, n); the all-ones
/// value marks a free slot and never keys a client map.
enum class BlockId : std::uint64_t {};

inline constexpr BlockId kFreeBlock{~std::uint64_t{0}};

constexpr std::uint64_t raw(BlockId b) { return static_cast<std::uint64_t>(b); }
constexpr BlockId block_id(std::uint64_t v) { return BlockId{v}; }
constexpr bool is_free(BlockId b) { return b == kFreeBlock; }

using Timestamp = std::uint64_t;

enum class Role : std::uint8_t { kReadWrite = 0, kReadOnly = 1, kObfuscation = 2 };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::kReadWrite: return "rw";
    case Role::kReadOnly: return "ro";
    case Role::kObfuscation: return "oc";
  }
  return "?";
}

/// Hybrid logical clock: max(wall, last + 1). Strictly increasing per
/// instance regardless of how the wall clock moves.
struct HybridClock {
  Timestamp last = 0;

  Timestamp next(std::uint64_t wall_ms) {
    last = std::max<Timestamp>(wall_ms, last + 1);
    return last;
  }
};

/// A hybrid clock bound to a wall-time source. The default source is the
/// system clock in milliseconds; simulations inject virtual time.
class Clock {
 public:
  Clock() : wall_([] { return system_ms(); }) {}
  explicit Clock(std::function<std::uint64_t()> wall) : wall_(std::move(wall)) {}

  Timestamp next() { return hlc_.next(wall_()); }
  /// Moves the clock past a timestamp seen elsewhere.
  void observe(Timestamp t) { hlc_.last = std::max(hlc_.last, t); }
  Timestamp last() const { return hlc_.last; }

  static std::uint64_t system_ms() {
    using namespace std::chrono;
    return static_cast<std::uint64_t>(
        duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
  }

 private:
  HybridClock hlc_;
  std::function<std::uint64_t()> wall_;
};

/// Decrypted store block.
struct BlockPlain {
  BlockId bid = kFreeBlock;
  std::uint32_t cns = 1;  // clients aware of this block at this position
  Timestamp ts = 0;
  Bytes data;

  bool operator==(const BlockPlain&) const = default;

  static BlockPlain free_block(std::size_t block_size, std::uint32_t cns, Timestamp ts) {
    return BlockPlain{kFreeBlock, cns, ts, Bytes(block_size, 0)};
  }
};

struct MapEntry {
  std::set<Position> psns;
  Timestamp ts = 0;
  std::set<Position> vf;  // positions seen with cns == client_count; subset of psns

  bool operator==(const MapEntry&) const = default;
};

/// One client's view of where every block lives.
///
/// Keeps a reverse index position -> owner so that a position appears in at
/// most one entry. All mutations go through the member functions, which keep
/// vf a subset of psns and, while a transaction is open, remember the
/// original value of every touched entry for rollback.
class ClientMap {
 public:
  ClientMap() = default;

  ClientMap(std::uint64_t n, std::uint64_t positions, std::uint16_t client_count,
            std::uint16_t client_id, Role role)
      : n_(n),
        positions_(positions),
        client_count_(client_count),
        client_id_(client_id),
        role_(role),
        entries_(n),
        owner_(positions, kFreeBlock) {}

  std::uint64_t n() const { return n_; }
  std::uint64_t positions() const { return positions_; }
  std::uint16_t client_count() const { return client_count_; }
  std::uint16_t client_id() const { return client_id_; }
  Role role() const { return role_; }
  void set_identity(std::uint16_t client_id, Role role) {
    client_id_ = client_id;
    role_ = role;
  }

  bool contains(BlockId b) const { return !is_free(b) && raw(b) < n_; }

  const MapEntry& entry(BlockId b) const {
    check(b);
    return entries_[raw(b)];
  }

  /// Entry currently listing p, or kFreeBlock.
  BlockId owner(Position p) const {
    check_position(p);
    return owner_[p];
  }

  void set_ts(BlockId b, Timestamp ts) { mut(b).ts = ts; }

  /// Adds p to b's positions, taking it from whichever entry held it.
  void claim(Position p, BlockId b) {
    check_position(p);
    release(p);
    mut(b).psns.insert(p);
    owner_[p] = b;
  }

  /// Moves p from one entry to another; p must be listed under `from`.
  void move_position(Position p, BlockId from, BlockId to) {
    check_position(p);
    CAOS_ASSERT(entry(from).psns.count(p) == 1, "move_position: p not in from.psns");
    auto& f = mut(from);
    f.psns.erase(p);
    f.vf.erase(p);
    mut(to).psns.insert(p);
    owner_[p] = to;
  }

  /// Drops p from whichever entry lists it.
  void release(Position p) {
    check_position(p);
    BlockId b = owner_[p];
    if (is_free(b)) return;
    auto& e = mut(b);
    e.psns.erase(p);
    e.vf.erase(p);
    owner_[p] = kFreeBlock;
  }

  void verify(BlockId b, Position p) {
    if (entry(b).psns.count(p) == 0) return;
    if (entry(b).vf.count(p) == 0) mut(b).vf.insert(p);
  }

  void clear_verified(BlockId b) {
    if (!entry(b).vf.empty()) mut(b).vf.clear();
  }

  void clear_positions(BlockId b) {
    auto& e = mut(b);
    for (Position p : e.psns) owner_[p] = kFreeBlock;
    e.psns.clear();
    e.vf.clear();
  }

  /// Keep only `keep_psns` (which must be a subset of the current psns).
  void retain_positions(BlockId b, const std::set<Position>& keep_psns) {
    auto& e = mut(b);
    for (auto it = e.psns.begin(); it != e.psns.end();) {
      if (keep_psns.count(*it) == 0) {
        owner_[*it] = kFreeBlock;
        e.vf.erase(*it);
        it = e.psns.erase(it);
      } else {
        ++it;
      }
    }
  }

  // Transactions: one attempt's map edits can be undone when the server
  // rejects its write.
  void begin() {
    undo_.clear();
    in_txn_ = true;
  }
  void commit() {
    undo_.clear();
    in_txn_ = false;
  }
  void rollback() {
    for (auto& [b, old] : undo_)
      for (Position p : entries_[raw(b)].psns) owner_[p] = kFreeBlock;
    for (auto& [b, old] : undo_) {
      entries_[raw(b)] = std::move(old);
      for (Position p : entries_[raw(b)].psns) owner_[p] = b;
    }
    undo_.clear();
    in_txn_ = false;
  }

  /// Full structural check: disjointness, vf subset of psns, index agreement.
  /// Returns an empty string when consistent.
  std::string consistency_error() const {
    std::vector<BlockId> seen(positions_, kFreeBlock);
    for (std::uint64_t i = 0; i < n_; ++i) {
      const auto& e = entries_[i];
      for (Position p : e.psns) {
        if (p >= positions_) return "position out of range in entry " + std::to_string(i);
        if (!is_free(seen[p]))
          return "position " + std::to_string(p) + " listed under two ids";
        seen[p] = block_id(i);
      }
      for (Position p : e.vf)
        if (e.psns.count(p) == 0) return "vf not subset of psns for id " + std::to_string(i);
    }
    if (seen != owner_) return "reverse index out of sync";
    return {};
  }

  bool operator==(const ClientMap& o) const {
    return n_ == o.n_ && positions_ == o.positions_ && client_count_ == o.client_count_ &&
           client_id_ == o.client_id_ && role_ == o.role_ && entries_ == o.entries_;
  }

 private:
  void check(BlockId b) const {
    if (!contains(b)) throw LookupError("block id " + std::to_string(raw(b)) + " not in map");
  }
  void check_position(Position p) const {
    if (p >= positions_) throw LookupError("position " + std::to_string(p) + " out of range");
  }
  MapEntry& mut(BlockId b) {
    check(b);
    auto& e = entries_[raw(b)];
    if (in_txn_ && std::none_of(undo_.begin(), undo_.end(),
                                [b](const auto& u) { return u.first == b; }))
      undo_.emplace_back(b, e);
    return e;
  }

  std::uint64_t n_ = 0;
  std::uint64_t positions_ = 0;
  std::uint16_t client_count_ = 1;
  std::uint16_t client_id_ = 0;
  Role role_ = Role::kReadWrite;
  std::vector<MapEntry> entries_;
  std::vector<BlockId> owner_;
  std::vector<std::pair<BlockId, MapEntry>> undo_;
  bool in_txn_ = false;
};

/// Free-function form of ClientMap::move_position.
inline void map_move_position(ClientMap& map, Position p, BlockId from, BlockId to) {
  map.move_position(p, from, to);
}

/// Positions read and written by one access, in message order.
struct AccessPattern {
  std::vector<Position> reads;
  std::vector<Position> writes;
  std::uint64_t seq = 0;

  bool operator==(const AccessPattern&) const = default;
};

}  // namespace caos
