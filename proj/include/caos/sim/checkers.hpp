#pragma once

#include <sstream>

#include "caos/types.hpp"

// Global invariants over the store contents and every client's map. Both
// checks are meant for quiescent points, when no access holds locks.

namespace caos::sim {

struct InvariantReport {
  std::uint64_t checked = 0;              // positions (INV-1) or blocks (INV-2) examined
  std::vector<std::string> violations;
  std::uint64_t diagnostics = 0;          // see the individual checks

  bool ok() const { return violations.empty(); }
};

namespace detail {
inline std::string join(const std::set<Position>& s) {
  std::ostringstream o;
  o << '{';
  bool first = true;
  for (Position p : s) {
    o << (first ? "" : ",") << p;
    first = false;
  }
  o << '}';
  return o.str();
}
}  // namespace detail

/// For every position holding the latest version of a block: cns does not
/// exceed the number of clients whose map lists the position under that
/// version. `diagnostics` counts positions where cns is strictly smaller.
/// Positions holding superseded versions are skipped: clients that moved on
/// no longer count them, by design.
inline InvariantReport check_inv1(const std::vector<BlockPlain>& slots,
                                  const std::vector<const ClientMap*>& maps,
                                  const std::vector<Timestamp>& latest) {
  InvariantReport r;
  for (Position p = 0; p < slots.size(); ++p) {
    const BlockPlain& b = slots[p];
    if (is_free(b.bid) || b.ts != latest.at(raw(b.bid))) continue;
    ++r.checked;
    std::uint32_t knowers = 0;
    for (const ClientMap* m : maps) {
      const auto& e = m->entry(b.bid);
      knowers += e.psns.count(p) && e.ts == b.ts;
    }
    if (b.cns > knowers) {
      std::ostringstream o;
      o << "INV-1 position " << p << ": block " << raw(b.bid) << " ts " << b.ts << " cns "
        << b.cns << " but " << knowers << " client(s) know it";
      r.violations.push_back(o.str());
    } else if (b.cns < knowers) {
      ++r.diagnostics;
    }
  }
  return r;
}

/// For every block: some position holds its latest version and is listed
/// under the block by every client. `diagnostics` counts blocks that satisfy
/// the weaker form where the position may hold any version.
inline InvariantReport check_inv2(const std::vector<BlockPlain>& slots,
                                  const std::vector<const ClientMap*>& maps,
                                  const std::vector<Timestamp>& latest) {
  InvariantReport r;
  for (std::uint64_t i = 0; i < latest.size(); ++i) {
    const BlockId bid = block_id(i);
    ++r.checked;
    std::set<Position> holding, any_version;
    for (Position p = 0; p < slots.size(); ++p) {
      if (slots[p].bid != bid) continue;
      any_version.insert(p);
      if (slots[p].ts == latest[i]) holding.insert(p);
    }
    auto known_to_all = [&](Position p) {
      for (const ClientMap* m : maps)
        if (!m->entry(bid).psns.count(p)) return false;
      return true;
    };
    bool strong = std::any_of(holding.begin(), holding.end(), known_to_all);
    bool weak = std::any_of(any_version.begin(), any_version.end(), known_to_all);
    if (weak) ++r.diagnostics;
    if (strong) continue;

    std::ostringstream o;
    o << "INV-2 block " << i << ": latest ts " << latest[i] << " at " << detail::join(holding)
      << ", none known to all;";
    for (std::size_t c = 0; c < maps.size(); ++c) {
      const auto& psns = maps[c]->entry(bid).psns;
      std::set<Position> known;
      for (Position p : holding)
        if (psns.count(p)) known.insert(p);
      o << " client " << maps[c]->client_id() << " knows " << detail::join(known);
    }
    r.violations.push_back(o.str());
  }
  return r;
}

}  // namespace caos::sim
