#pragma once

#include "caos/client.hpp"

// Obfuscation client: a bounded buffer of blocks read from random positions,
// written back over other random positions when the duplication guard allows.

namespace caos {

/// At most `capacity` real blocks, one per id. Edits made while a round is
/// open can be undone if the server rejects the round's write.
class ObfuscationBuffer {
 public:
  ObfuscationBuffer() = default;
  explicit ObfuscationBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool full() const { return entries_.size() >= capacity_; }
  const std::vector<BlockPlain>& entries() const { return entries_; }

  std::optional<std::size_t> find(BlockId b) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].bid == b) return i;
    return std::nullopt;
  }

  void add(const BlockPlain& b) {
    CAOS_ASSERT(!is_free(b.bid) && !find(b.bid), "buffer takes one real block per id");
    CAOS_ASSERT(!full(), "buffer is full");
    entries_.push_back(b);
    round_.push_back(round_id_);
    if (open_) undo_.push_back({Undo::kAdded, entries_.size() - 1, {}, 0});
  }

  void replace(std::size_t i, const BlockPlain& b) {
    CAOS_ASSERT(entries_[i].bid == b.bid, "replace keeps the id");
    if (open_) undo_.push_back({Undo::kReplaced, i, entries_[i], round_[i]});
    entries_[i] = b;
    round_[i] = round_id_;
  }

  void remove(std::size_t i) {
    if (open_) undo_.push_back({Undo::kRemoved, i, entries_[i], round_[i]});
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(i));
    round_.erase(round_.begin() + static_cast<std::ptrdiff_t>(i));
  }

  /// Indices of entries that were not stored during the open round.
  std::vector<std::size_t> writable() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (!open_ || round_[i] != round_id_) out.push_back(i);
    return out;
  }

  void begin() {
    undo_.clear();
    open_ = true;
    ++round_id_;
  }
  void commit() {
    undo_.clear();
    open_ = false;
  }
  void rollback() {
    for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) {
      auto at = entries_.begin() + static_cast<std::ptrdiff_t>(it->index);
      auto rat = round_.begin() + static_cast<std::ptrdiff_t>(it->index);
      switch (it->kind) {
        case Undo::kAdded:
          entries_.erase(at);
          round_.erase(rat);
          break;
        case Undo::kRemoved:
          entries_.insert(at, it->old);
          round_.insert(rat, it->old_round);
          break;
        case Undo::kReplaced:
          *at = it->old;
          *rat = it->old_round;
          break;
      }
    }
    commit();
  }

 private:
  struct Undo {
    enum Kind { kAdded, kRemoved, kReplaced } kind;
    std::size_t index;
    BlockPlain old;
    std::uint64_t old_round;
  };
  std::size_t capacity_ = 0;
  std::vector<BlockPlain> entries_;
  std::vector<std::uint64_t> round_;  // round in which each entry was stored
  std::uint64_t round_id_ = 0;
  std::vector<Undo> undo_;
  bool open_ = false;
};

struct BufferStats {
  std::uint64_t added = 0, refreshed = 0, evicted = 0, dropped_stale = 0, refused = 0;
};

/// Buffers blk if there is room, then tries to overwrite it with a random
/// buffered block stored in an earlier round. Returns the buffered block's id
/// if one was written out.
template <class Rng>
std::optional<BlockId> update_buffer(BlockPlain& blk, Position p, ObfuscationBuffer& buf,
                                     ClientMap& map, Rng& rng, BufferStats* stats = nullptr,
                                     SyncStats* sync_stats = nullptr) {
  BufferStats dummy;
  BufferStats& st = stats ? *stats : dummy;
  const bool current = !is_free(blk.bid) && map.contains(blk.bid) &&
                       blk.ts == map.entry(blk.bid).ts && blk.cns == map.client_count();
  if (current) {
    if (auto i = buf.find(blk.bid)) {
      if (buf.entries()[*i].ts < blk.ts) {
        buf.replace(*i, blk);
        ++st.refreshed;
      }
    } else if (!buf.full()) {
      buf.add(blk);
      ++st.added;
    }
  }
  if (!buf.full()) return std::nullopt;
  const auto candidates = buf.writable();
  if (candidates.empty()) return std::nullopt;

  std::size_t i = candidates[detail::uniform_below(candidates.size(), rng)];
  const BlockPlain pick = buf.entries()[i];
  if (pick.ts != map.entry(pick.bid).ts) {
    // a newer version exists; this copy can never be written out
    buf.remove(i);
    ++st.dropped_stale;
    return std::nullopt;
  }
  duplicate_block(pick, blk, p, map, sync_stats);
  if (blk.bid == pick.bid) {
    buf.remove(i);
    ++st.evicted;
    return pick.bid;
  }
  ++st.refused;
  return std::nullopt;
}

struct OcAttempt {
  Position p1 = 0, p2 = 0;
  LockToken token = 0;
  BlockPlain b1, b2;
  std::optional<BlockId> out1, out2;  // buffered ids written out, if any

  AccessPattern pattern(std::uint64_t seq) const { return AccessPattern{{p1, p2}, {p1, p2}, seq}; }
};

struct OcState {
  ClientState client;
  ObfuscationBuffer buffer;
  BufferStats stats;
};

template <class Rng>
OcAttempt plan_oc(const ClientMap& map, Rng& rng) {
  OcAttempt a;
  a.p1 = select_position(map, std::nullopt, rng);
  do {
    a.p2 = select_position(map, std::nullopt, rng);
  } while (a.p2 == a.p1);
  return a;
}

template <class Rng>
WriteBack process_oc(OcAttempt& a, OcState& oc, ReadResult&& r, Rng& rng) {
  ClientState& cs = oc.client;
  a.token = r.token;
  a.b1 = std::move(r.first);
  a.b2 = std::move(r.second);
  cs.map.begin();
  oc.buffer.begin();
  sync(a.b1, a.p1, cs.map, cs.clock, &cs.stats);
  sync(a.b2, a.p2, cs.map, cs.clock, &cs.stats);
  a.out1 = update_buffer(a.b1, a.p1, oc.buffer, cs.map, rng, &oc.stats, &cs.stats);
  a.out2 = update_buffer(a.b2, a.p2, oc.buffer, cs.map, rng, &oc.stats, &cs.stats);
  return WriteBack{a.p1, a.p2, a.b1, a.b2};
}

inline void finish_oc(OcState& oc, bool acked) {
  finish_rw(oc.client, acked);
  if (acked) oc.buffer.commit();
  else oc.buffer.rollback();
}

struct OcOutcome {
  std::uint32_t retried = 0;
  OcAttempt attempt;
  AccessPattern pattern;
};

/// One obfuscation round; retries with fresh positions on conflicts.
template <class Rng>
OcOutcome access_oc(OcState& oc, StoreSession& session, Rng& rng, std::size_t max_tries = 64) {
  OcOutcome res;
  for (std::size_t t = 0; t < max_tries; ++t) {
    OcAttempt a = plan_oc(oc.client.map, rng);
    auto r = session.read_pair(a.p1, a.p2);
    if (!r) {
      ++res.retried;
      continue;
    }
    WriteBack w = process_oc(a, oc, std::move(*r), rng);
    bool acked = session.write_pair(a.token, w.p1, w.b1, w.p2, w.b2);
    finish_oc(oc, acked);
    if (acked) {
      res.pattern = a.pattern(0);
      res.attempt = std::move(a);
      return res;
    }
    ++res.retried;
  }
  throw AccessError("obfuscation round: no successful attempt in " + std::to_string(max_tries) +
                    " tries");
}

/// Fills the buffer with ordinary rounds that write both blocks back
/// unchanged (re-sealed) and buffer every new current block they see.
template <class Rng>
OcState init_oc(ClientState client, std::size_t s, StoreSession& session, Rng& rng,
                std::size_t max_rounds = 0) {
  const std::uint64_t n = client.map.n();
  if (s < 2) throw CapacityError("buffer size must be at least 2");
  if (s > n)
    throw CapacityError("buffer size " + std::to_string(s) + " exceeds n=" + std::to_string(n));
  OcState oc{std::move(client), ObfuscationBuffer(s), {}};
  ClientState& cs = oc.client;
  if (max_rounds == 0) max_rounds = 64 * (cs.map.positions() + s);
  for (std::size_t round = 0; !oc.buffer.full(); ++round) {
    if (round >= max_rounds)
      throw AccessError("buffer not full after " + std::to_string(max_rounds) + " rounds");
    OcAttempt a = plan_oc(cs.map, rng);
    auto r = session.read_pair(a.p1, a.p2);
    if (!r) continue;
    a.token = r->token;
    a.b1 = std::move(r->first);
    a.b2 = std::move(r->second);
    cs.map.begin();
    oc.buffer.begin();
    sync(a.b1, a.p1, cs.map, cs.clock, &cs.stats);
    sync(a.b2, a.p2, cs.map, cs.clock, &cs.stats);
    for (const BlockPlain* b : {&a.b1, &a.b2}) {
      if (oc.buffer.full() || is_free(b->bid) || oc.buffer.find(b->bid) ||
          b->ts != cs.map.entry(b->bid).ts || b->cns != cs.map.client_count())
        continue;
      oc.buffer.add(*b);
      ++oc.stats.added;
    }
    finish_oc(oc, session.write_pair(a.token, a.p1, a.b1, a.p2, a.b2));
  }
  return oc;
}

}  // namespace caos
