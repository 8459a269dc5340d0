#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <variant>

#include "caos/types.hpp"
#include "caos/wire.hpp"

// Server side: the two-position lock table and the request handlers over an
// abstract slot storage. The server never sees block ids or keys; it serves
// opaque fixed-size slots by position.

namespace caos {

using wire::ErrCode;
using wire::LockToken;

/// Position locks with expiry. Expired entries count as absent.
class LockTable {
 public:
  struct Lock {
    LockToken token;
    std::uint64_t expiry_ms;
  };

  bool is_locked(Position p, std::uint64_t now_ms) const {
    auto it = locks_.find(p);
    return it != locks_.end() && it->second.expiry_ms > now_ms;
  }

  /// Locks both positions under `token`, or neither.
  bool try_lock(Position p1, Position p2, LockToken token, std::uint64_t now_ms,
                std::uint64_t timeout_ms) {
    if (is_locked(p1, now_ms) || is_locked(p2, now_ms)) return false;
    locks_[p1] = {token, now_ms + timeout_ms};
    locks_[p2] = {token, now_ms + timeout_ms};
    return true;
  }

  /// True iff `token` holds live locks on exactly p1 and p2.
  bool holds(LockToken token, Position p1, Position p2, std::uint64_t now_ms) const {
    if (p1 == p2) return false;
    for (Position p : {p1, p2}) {
      auto it = locks_.find(p);
      if (it == locks_.end() || it->second.token != token || it->second.expiry_ms <= now_ms)
        return false;
    }
    return true;
  }

  void unlock(Position p1, Position p2) {
    locks_.erase(p1);
    locks_.erase(p2);
  }

  std::size_t live_count(std::uint64_t now_ms) const {
    std::size_t n = 0;
    for (const auto& [p, l] : locks_) n += l.expiry_ms > now_ms;
    return n;
  }

  /// Live locks as position -> token (for exclusivity checks).
  std::map<Position, LockToken> live(std::uint64_t now_ms) const {
    std::map<Position, LockToken> out;
    for (const auto& [p, l] : locks_)
      if (l.expiry_ms > now_ms) out.emplace(p, l.token);
    return out;
  }

  void purge(std::uint64_t now_ms) {
    std::erase_if(locks_, [now_ms](const auto& kv) { return kv.second.expiry_ms <= now_ms; });
  }

 private:
  std::map<Position, Lock> locks_;
};

/// One observed server operation; this is all an honest-but-curious server
/// learns besides ciphertexts.
struct AccessRecord {
  std::uint64_t seq = 0;
  char dir = 'R';  // 'R' or 'W'
  Position p1 = 0, p2 = 0;
  std::uint64_t unix_ms = 0;
};

inline std::string format_access_record(const AccessRecord& r) {
  return std::to_string(r.seq) + " " + r.dir + " " + std::to_string(r.p1) + " " +
         std::to_string(r.p2) + " " + std::to_string(r.unix_ms);
}

using AccessLogSink = std::function<void(const AccessRecord&)>;

/// Appends `seq dir p1 p2 unix_ms` lines to a file.
class AccessLogFile {
 public:
  explicit AccessLogFile(const std::string& path) : out_(path, std::ios::app) {
    if (!out_) throw Error("cannot open access log " + path);
  }
  void operator()(const AccessRecord& r) { out_ << format_access_record(r) << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

/// In-memory slot storage.
template <class Slot>
class MemorySlots {
 public:
  using slot_type = Slot;

  explicit MemorySlots(std::uint64_t positions) : slots_(positions) {}

  std::uint64_t positions() const { return slots_.size(); }
  bool initialized() const { return initialized_; }
  void set_initialized() { initialized_ = true; }
  bool valid(const Slot&) const { return true; }

  const Slot& read(Position p) const { return slots_[p]; }
  void write_pair(Position p1, const Slot& s1, Position p2, const Slot& s2, LockToken = 0) {
    slots_[p1] = s1;
    slots_[p2] = s2;
  }
  void write_range(Position start, std::span<const Slot> s) {
    std::copy(s.begin(), s.end(), slots_.begin() + static_cast<std::ptrdiff_t>(start));
  }

  /// Direct access for inspection and test fixtures.
  Slot& at(Position p) { return slots_[p]; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Slot> slots_;
  bool initialized_ = false;
};

template <class Slot>
struct ReadGrant {
  LockToken token = 0;
  Slot first, second;
};

/// The request handlers. Not internally synchronized; a network front end
/// serializes calls.
template <class Storage>
class StoreService {
 public:
  using Slot = typename Storage::slot_type;

  StoreService(Storage& storage, std::uint64_t lock_timeout_ms, AccessLogSink log = {})
      : storage_(storage), timeout_ms_(lock_timeout_ms), log_(std::move(log)) {}

  Storage& storage() { return storage_; }
  const LockTable& locks() const { return locks_; }
  std::uint64_t lock_timeout_ms() const { return timeout_ms_; }
  void set_lock_timeout_ms(std::uint64_t t) { timeout_ms_ = t; }

  std::variant<ReadGrant<Slot>, ErrCode> serve_read(Position p1, Position p2,
                                                    std::uint64_t now_ms) {
    if (!storage_.initialized()) return ErrCode::kNotInitialized;
    if (p1 == p2 || p1 >= storage_.positions() || p2 >= storage_.positions())
      return ErrCode::kBadPosition;
    LockToken token = next_token_++;
    if (!locks_.try_lock(p1, p2, token, now_ms, timeout_ms_)) {
      ++stats_.locked;
      return ErrCode::kLocked;
    }
    ++stats_.reads;
    record('R', p1, p2, now_ms);
    return ReadGrant<Slot>{token, storage_.read(p1), storage_.read(p2)};
  }

  std::optional<ErrCode> serve_write(LockToken token, Position p1, const Slot& s1, Position p2,
                                     const Slot& s2, std::uint64_t now_ms) {
    if (!storage_.initialized()) return ErrCode::kNotInitialized;
    if (p1 >= storage_.positions() || p2 >= storage_.positions() || !storage_.valid(s1) ||
        !storage_.valid(s2))
      return ErrCode::kBadPosition;
    if (!locks_.holds(token, p1, p2, now_ms)) {
      ++stats_.stale;
      return ErrCode::kStaleToken;
    }
    storage_.write_pair(p1, s1, p2, s2, token);
    locks_.unlock(p1, p2);
    ++stats_.writes;
    record('W', p1, p2, now_ms);
    return std::nullopt;
  }

  /// Accepts consecutive ranges starting at 0; the store becomes initialized
  /// once every slot has been written.
  std::optional<ErrCode> serve_bulk_init(Position start, std::span<const Slot> slots) {
    if (storage_.initialized()) return ErrCode::kNotInitialized;
    if (start != bulk_next_ && start != 0) return ErrCode::kBadPosition;
    if (start > storage_.positions() || slots.size() > storage_.positions() - start)
      return ErrCode::kBadPosition;
    for (const auto& s : slots)
      if (!storage_.valid(s)) return ErrCode::kBadPosition;
    storage_.write_range(start, slots);
    bulk_next_ = start + slots.size();
    if (bulk_next_ == storage_.positions()) storage_.set_initialized();
    return std::nullopt;
  }

  struct Stats {
    std::uint64_t reads = 0, writes = 0, locked = 0, stale = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  void record(char dir, Position p1, Position p2, std::uint64_t now_ms) {
    AccessRecord r{seq_++, dir, p1, p2, now_ms};
    if (log_) log_(r);
  }

  Storage& storage_;
  std::uint64_t timeout_ms_;
  AccessLogSink log_;
  LockTable locks_;
  LockToken next_token_ = 1;
  Position bulk_next_ = 0;
  std::uint64_t seq_ = 0;
  Stats stats_;
};

}  // namespace caos
