#pragma once

#include <algorithm>
#include <numeric>
#include <random>

#include "caos/session.hpp"
#include "caos/types.hpp"

// Regular client logic: position selection, map synchronization, the write
// and duplication steps, and the read-write access loop.

namespace caos {

enum class Op { kRead, kWrite };

/// Counters for situations the map bookkeeping tolerates but should not see.
struct SyncStats {
  std::uint64_t freed = 0;          // stale copies turned into free blocks
  std::uint64_t corrected = 0;      // map entries dropped because the slot held something else
  std::uint64_t cns_clamped = 0;    // cns found above client_count
  std::uint64_t vf_anomalies = 0;   // consolidated block at a position not in psns
  std::uint64_t duplications = 0;
};

/// Client state that persists across accesses.
struct ClientState {
  ClientMap map;
  Clock clock;
  std::size_t block_size = 0;
  SyncStats stats;
};

namespace detail {
template <class Rng>
std::uint64_t uniform_below(std::uint64_t n, Rng& rng) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}
template <class Rng>
Position pick(const std::set<Position>& s, Rng& rng) {
  auto it = s.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(uniform_below(s.size(), rng)));
  return *it;
}
}  // namespace detail

/// Uniform over map[bid].psns, or uniform over all positions without a bid.
template <class Rng>
Position select_position(const ClientMap& map, std::optional<BlockId> bid, Rng& rng) {
  if (!bid) return detail::uniform_below(map.positions(), rng);
  const auto& e = map.entry(*bid);
  if (e.psns.empty())
    throw LookupError("no known position for block " + std::to_string(raw(*bid)));
  return detail::pick(e.psns, rng);
}

/// Reconciles the block read from p with the map.
inline void sync(BlockPlain& block, Position p, ClientMap& map, Clock& clock,
                 SyncStats* stats = nullptr) {
  SyncStats dummy;
  SyncStats& st = stats ? *stats : dummy;
  const std::uint32_t cc = map.client_count();

  if (is_free(block.bid)) {
    if (!is_free(map.owner(p))) {
      map.release(p);
      ++st.corrected;
    }
    return;
  }
  if (!map.contains(block.bid))
    throw ProtocolError("block at position " + std::to_string(p) + " has unknown id " +
                        std::to_string(raw(block.bid)));

  const BlockId bid = block.bid;
  if (block.ts < map.entry(bid).ts) {
    map.release(p);
    block = BlockPlain::free_block(block.data.size(), 1, clock.next());
    ++st.freed;
    return;
  }
  if (map.owner(p) != bid && !is_free(map.owner(p))) {
    map.release(p);
    ++st.corrected;
  }
  if (block.cns < cc) {
    if (block.ts > map.entry(bid).ts) {
      map.clear_positions(bid);
      map.set_ts(bid, block.ts);
    }
    if (map.entry(bid).psns.count(p) == 0) {
      map.claim(p, bid);
      ++block.cns;
    }
  }
  if (block.cns > cc) {
    block.cns = cc;
    ++st.cns_clamped;
  }
  if (block.cns == cc) {
    if (map.entry(bid).psns.count(p)) map.verify(bid, p);
    else ++st.vf_anomalies;
  }
}

/// Replaces `block` with new contents for `bid` if it holds `bid` or is free.
/// Returns the written data, or nullopt when the block belongs elsewhere.
inline std::optional<Bytes> prepare_write(BlockId bid, BlockPlain& block, const Bytes& data,
                                          Clock& clock) {
  if (block.bid != bid && !is_free(block.bid)) return std::nullopt;
  block.bid = bid;
  block.data = data;
  block.cns = 1;
  clock.observe(block.ts);
  block.ts = clock.next();
  return block.data;
}

/// Overwrites dblock (read from p) with a copy of sblock when the map shows
/// that p's current content survives elsewhere. Returns true on success.
inline bool duplicate_block(const BlockPlain& sblock, BlockPlain& dblock, Position p,
                            ClientMap& map, SyncStats* stats = nullptr) {
  const std::uint32_t cc = map.client_count();
  if (is_free(sblock.bid) || !map.contains(sblock.bid)) return false;
  if (sblock.ts != map.entry(sblock.bid).ts) return false;
  // a version is copied only once every client knows it
  if (sblock.cns != cc) return false;
  const BlockId old = dblock.bid;
  if (old == sblock.bid) return false;

  if (!is_free(old)) {
    if (!map.contains(old)) return false;
    const auto& e = map.entry(old);
    if (e.psns.count(p) == 0) return false;
    bool consolidated = dblock.cns == cc && e.vf.size() > cc;
    bool own_copy = dblock.cns == 1 && e.psns.size() > 1 && e.vf.count(p) == 0;
    if (!consolidated && !own_copy) return false;
  }

  dblock.bid = sblock.bid;
  dblock.data = sblock.data;
  dblock.ts = sblock.ts;
  dblock.cns = 1;
  if (is_free(old)) {
    map.claim(p, sblock.bid);
  } else {
    map.clear_verified(old);
    map.move_position(p, old, sblock.bid);
  }
  if (stats) ++stats->duplications;
  return true;
}

/// After a committed write of `bid` at req_p: the new version lives at req_p
/// only and nobody else knows it yet.
inline void record_write(ClientMap& map, BlockId bid, Position req_p, Timestamp ts) {
  map.set_ts(bid, ts);
  map.retain_positions(bid, {});
  map.claim(req_p, bid);
}

/// Positions of the two slots one attempt touches, in wire order, and the
/// blocks that go back.
struct WriteBack {
  Position p1 = 0, p2 = 0;
  BlockPlain b1, b2;
};

/// One read-write attempt, split into the halves around the server round
/// trips so a scheduler can interleave attempts of different clients.
struct RwAttempt {
  BlockId bid{};
  Op op = Op::kRead;
  Bytes data;
  Position req_p = 0, cpy_p = 0;
  bool req_first = true;  // wire order of the pair
  LockToken token = 0;
  BlockPlain req_blk, cpy_blk;
  std::optional<Bytes> out;
  Timestamp out_ts = 0;

  Position p1() const { return req_first ? req_p : cpy_p; }
  Position p2() const { return req_first ? cpy_p : req_p; }
  AccessPattern pattern(std::uint64_t seq) const {
    return AccessPattern{{p1(), p2()}, {p1(), p2()}, seq};
  }
};

template <class Rng>
RwAttempt plan_rw(const ClientMap& map, BlockId bid, Op op, const Bytes& data, Rng& rng) {
  RwAttempt a;
  a.bid = bid;
  a.op = op;
  a.data = data;
  const auto& e = map.entry(bid);
  if (op == Op::kWrite && !e.vf.empty()) a.req_p = detail::pick(e.vf, rng);
  else a.req_p = select_position(map, bid, rng);
  do {
    a.cpy_p = select_position(map, std::nullopt, rng);
  } while (a.cpy_p == a.req_p);
  a.req_first = detail::uniform_below(2, rng) == 0;
  return a;
}

/// Processes the READ reply: sync, the op itself, duplication. Opens a map
/// transaction that finish_rw commits or rolls back.
inline WriteBack process_rw(RwAttempt& a, ClientState& cs, ReadResult&& r) {
  ClientMap& map = cs.map;
  a.token = r.token;
  a.req_blk = a.req_first ? std::move(r.first) : std::move(r.second);
  a.cpy_blk = a.req_first ? std::move(r.second) : std::move(r.first);
  map.begin();
  sync(a.req_blk, a.req_p, map, cs.clock, &cs.stats);
  sync(a.cpy_blk, a.cpy_p, map, cs.clock, &cs.stats);

  if (a.op == Op::kRead) {
    if (a.req_blk.bid == a.bid && a.req_blk.ts == map.entry(a.bid).ts) {
      a.out = a.req_blk.data;
      a.out_ts = a.req_blk.ts;
    }
  } else if (a.req_blk.bid == a.bid && a.req_blk.ts == map.entry(a.bid).ts &&
             a.req_blk.cns == map.client_count()) {
    // every client lists req_p under this version, so overwriting it in place
    // keeps a position that all of them know
    a.out = prepare_write(a.bid, a.req_blk, a.data, cs.clock);
    a.out_ts = a.req_blk.ts;
    record_write(map, a.bid, a.req_p, a.req_blk.ts);
  }
  duplicate_block(a.req_blk, a.cpy_blk, a.cpy_p, map, &cs.stats);

  WriteBack w;
  w.p1 = a.p1();
  w.p2 = a.p2();
  w.b1 = a.req_first ? a.req_blk : a.cpy_blk;
  w.b2 = a.req_first ? a.cpy_blk : a.req_blk;
  return w;
}

inline void finish_rw(ClientState& cs, bool acked) {
  if (acked) cs.map.commit();
  else cs.map.rollback();
}

struct AccessOutcome {
  std::optional<Bytes> result;
  Timestamp ts = 0;  // version read or written
  std::uint32_t retried = 0;
  AccessPattern pattern;
  std::vector<AccessPattern> attempts;  // every READ that reached the server
};

inline std::size_t retry_cap(const ClientMap& map, BlockId bid) {
  return 4 * map.entry(bid).psns.size() + 8;
}

/// Runs attempts until one commits with a result.
template <class Rng>
AccessOutcome access_rw(BlockId bid, Op op, const std::optional<Bytes>& data, StoreSession& session,
                        ClientState& cs, Rng& rng) {
  if (op == Op::kWrite) {
    if (cs.map.role() != Role::kReadWrite)
      throw AccessError(std::string(role_name(cs.map.role())) + " client cannot write");
    if (!data || data->size() != cs.block_size)
      throw FormatError("write payload must be exactly " + std::to_string(cs.block_size) +
                        " bytes");
  }
  if (!cs.map.contains(bid)) throw LookupError("block id " + std::to_string(raw(bid)) + " not in map");

  AccessOutcome res;
  const std::size_t cap = retry_cap(cs.map, bid);
  static const Bytes kNoData;
  std::size_t unconsolidated = 0;  // write attempts that found the latest version not yet seen by all
  for (std::size_t attempt = 0; attempt < cap; ++attempt) {
    RwAttempt a = plan_rw(cs.map, bid, op, data ? *data : kNoData, rng);
    auto r = session.read_pair(a.p1(), a.p2());
    if (!r) {
      ++res.retried;
      continue;
    }
    res.attempts.push_back(a.pattern(res.attempts.size()));
    WriteBack w = process_rw(a, cs, std::move(*r));
    if (op == Op::kWrite && !a.out && a.req_blk.bid == bid &&
        a.req_blk.ts == cs.map.entry(bid).ts)
      ++unconsolidated;
    bool acked = session.write_pair(a.token, w.p1, w.b1, w.p2, w.b2);
    finish_rw(cs, acked);
    if (acked && a.out) {
      res.result = std::move(a.out);
      res.ts = a.out_ts;
      res.pattern = res.attempts.back();
      return res;
    }
    ++res.retried;
  }
  std::string msg = "block " + std::to_string(raw(bid)) + ": no successful attempt in " +
                    std::to_string(cap) + " tries";
  if (unconsolidated > 0)
    msg += " (" + std::to_string(unconsolidated) + " found the latest version not yet seen by all " +
           std::to_string(cs.map.client_count()) + " clients)";
  throw AccessError(msg);
}

/// Builds the initial layout: C random positions per block, free blocks
/// elsewhere, all consolidated. Uploads it and returns the shared map.
template <class Rng>
ClientMap init_store(const std::vector<Bytes>& db, std::uint64_t positions, std::uint32_t redundancy,
                     std::uint16_t client_count, std::size_t block_size, Clock& clock, Rng& rng,
                     StoreSession& session, std::size_t frame_slots = 256) {
  const std::uint64_t n = db.size();
  if (client_count == 0) throw ConfigError("client_count must be at least 1");
  if (redundancy < client_count)
    throw CapacityError("redundancy C=" + std::to_string(redundancy) +
                        " is below client_count=" + std::to_string(client_count));
  if (n == 0) throw CapacityError("database is empty");
  if (redundancy * n > positions)
    throw CapacityError("C*n=" + std::to_string(redundancy * n) + " exceeds N=" +
                        std::to_string(positions));
  for (const auto& d : db)
    if (d.size() != block_size)
      throw FormatError("payload of " + std::to_string(d.size()) + " bytes, block size is " +
                        std::to_string(block_size));

  std::vector<Position> order(positions);
  std::iota(order.begin(), order.end(), Position{0});
  std::shuffle(order.begin(), order.end(), rng);

  const Timestamp ts = clock.next();
  ClientMap map(n, positions, client_count, 0, Role::kReadWrite);
  std::vector<BlockPlain> slots(positions, BlockPlain::free_block(block_size, client_count, ts));
  for (std::uint64_t i = 0; i < n; ++i) {
    BlockId b = block_id(i);
    map.set_ts(b, ts);
    for (std::uint32_t c = 0; c < redundancy; ++c) {
      Position p = order[i * redundancy + c];
      slots[p] = BlockPlain{b, client_count, ts, db[i]};
      map.claim(p, b);
      map.verify(b, p);
    }
  }
  for (std::uint64_t start = 0; start < positions; start += frame_slots) {
    std::uint64_t cnt = std::min<std::uint64_t>(frame_slots, positions - start);
    session.bulk_init(start, std::span(slots).subspan(start, cnt));
  }
  return map;
}

}  // namespace caos
