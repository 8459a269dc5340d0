#pragma once

#include <random>

#include "caos/client.hpp"
#include "caos/session.hpp"

// Small in-memory deployment for client tests: plaintext slots, a virtual
// clock, and helpers to inspect or plant blocks.

namespace caos::testing {

struct MiniStore {
  std::uint64_t now = 1000;
  MemorySlots<BlockPlain> slots;
  PlainSession::Service service;
  PlainSession session;

  MiniStore(std::uint64_t positions, std::size_t block_size, std::uint64_t lock_timeout = 5000)
      : slots(positions),
        service(slots, lock_timeout),
        session(service, block_size, [this] { return now; }) {}
};

inline Bytes payload(std::size_t bs, std::uint8_t v) { return Bytes(bs, v); }

inline std::vector<Bytes> numbered_db(std::uint64_t n, std::size_t bs) {
  std::vector<Bytes> db;
  for (std::uint64_t i = 0; i < n; ++i) db.push_back(payload(bs, static_cast<std::uint8_t>(i)));
  return db;
}

/// A client whose wall clock follows the store's virtual time.
inline ClientState make_client(const ClientMap& shared, std::uint16_t id, Role role,
                               std::size_t bs, MiniStore& store) {
  ClientState c{shared, Clock([&store] { return store.now; }), bs, {}};
  c.map.set_identity(id, role);
  return c;
}

}  // namespace caos::testing
