#pragma once

#include <map>
#include <memory>
#include <random>

#include "caos/obfuscation.hpp"
#include "caos/session.hpp"

// In-memory deployment for the simulator: plaintext slots behind the real
// request handlers, virtual time, one session and one map per client, and a
// ledger of every committed write.

namespace caos::sim {

/// Every version the single read-write client committed, per block.
class ShadowLedger {
 public:
  ShadowLedger() = default;
  ShadowLedger(const std::vector<Bytes>& db, Timestamp init_ts) : versions_(db.size()) {
    for (std::size_t i = 0; i < db.size(); ++i) versions_[i][init_ts] = db[i];
  }

  void commit(BlockId b, Timestamp ts, const Bytes& data) { versions_.at(raw(b))[ts] = data; }

  Timestamp latest_ts(BlockId b) const { return versions_.at(raw(b)).rbegin()->first; }
  const Bytes& latest_data(BlockId b) const { return versions_.at(raw(b)).rbegin()->second; }

  /// The committed data for version ts, if that version exists.
  const Bytes* version(BlockId b, Timestamp ts) const {
    const auto& v = versions_.at(raw(b));
    auto it = v.find(ts);
    return it == v.end() ? nullptr : &it->second;
  }

  std::vector<Timestamp> latest() const {
    std::vector<Timestamp> out;
    for (const auto& v : versions_) out.push_back(v.rbegin()->first);
    return out;
  }

  std::size_t n() const { return versions_.size(); }

 private:
  std::vector<std::map<Timestamp, Bytes>> versions_;
};

struct WorldConfig {
  std::uint64_t n = 16;
  std::uint64_t positions = 64;
  std::uint32_t redundancy = 3;
  std::size_t block_size = 8;
  std::uint64_t lock_timeout_ms = 64;
  std::vector<Role> roles = {Role::kReadWrite, Role::kReadOnly, Role::kObfuscation};
  std::size_t buffer = 4;  // obfuscation buffer size
};

/// A client as the simulator drives it. Non-obfuscating clients leave the
/// buffer empty.
struct SimClient {
  Role role = Role::kReadOnly;
  OcState state;
  std::unique_ptr<PlainSession> session;

  ClientState& cs() { return state.client; }
  const ClientMap& map() const { return state.client.map; }
};

class SimWorld {
 public:
  using Service = PlainSession::Service;

  SimWorld(const WorldConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        rng_(seed),
        slots_(cfg.positions),
        service_(slots_, cfg.lock_timeout_ms, [this](const AccessRecord& r) { log_.push_back(r); }) {
    if (cfg.n < 2) throw ConfigError("n must be at least 2");
    std::size_t rw = std::count(cfg.roles.begin(), cfg.roles.end(), Role::kReadWrite);
    if (rw > 1) throw ConfigError("at most one read-write client");
    const auto cc = static_cast<std::uint16_t>(cfg.roles.size());

    std::vector<Bytes> db;
    for (std::uint64_t i = 0; i < cfg.n; ++i) db.push_back(initial_payload(block_id(i)));
    PlainSession boot(service_, cfg.block_size, [this] { return now_; });
    Clock boot_clock([this] { return now_; });
    ClientMap shared = init_store(db, cfg.positions, cfg.redundancy, cc, cfg.block_size,
                                  boot_clock, rng_, boot);
    ledger_ = ShadowLedger(db, shared.entry(block_id(0)).ts);

    for (std::size_t i = 0; i < cfg.roles.size(); ++i) {
      auto c = std::make_unique<SimClient>();
      c->role = cfg.roles[i];
      c->state.client = ClientState{shared, Clock([this] { return now_; }), cfg.block_size, {}};
      c->state.client.map.set_identity(static_cast<std::uint16_t>(i), cfg.roles[i]);
      c->session = std::make_unique<PlainSession>(service_, cfg.block_size, [this] { return now_; });
      clients_.push_back(std::move(c));
    }
  }

  SimWorld(const SimWorld&) = delete;
  SimWorld& operator=(const SimWorld&) = delete;

  /// Fills every obfuscation client's buffer, one client after another.
  void init_buffers() {
    for (auto& c : clients_)
      if (c->role == Role::kObfuscation) {
        c->state = init_oc(std::move(c->state.client), cfg_.buffer, *c->session, rng_);
        ++now_;
      }
  }

  /// Payload of block b at write number k: distinct per (b, k).
  Bytes payload(BlockId b, std::uint64_t k) const {
    Bytes d(cfg_.block_size, 0);
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = static_cast<std::uint8_t>((raw(b) * 131 + k * 31 + i * 7) ^ (k >> (i % 8)));
    return d;
  }
  Bytes initial_payload(BlockId b) const { return payload(b, 0); }

  const WorldConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }
  std::uint64_t& now() { return now_; }
  MemorySlots<BlockPlain>& slots() { return slots_; }
  Service& service() { return service_; }
  ShadowLedger& ledger() { return ledger_; }
  /// Every READ and WRITE the server granted, in order.
  const std::vector<AccessRecord>& log() const { return log_; }
  std::vector<std::unique_ptr<SimClient>>& clients() { return clients_; }
  SimClient& client(std::size_t i) { return *clients_.at(i); }

  std::vector<const ClientMap*> maps() const {
    std::vector<const ClientMap*> out;
    for (const auto& c : clients_) out.push_back(&c->map());
    return out;
  }

 private:
  WorldConfig cfg_;
  std::mt19937_64 rng_;
  std::uint64_t now_ = 1000;
  std::vector<AccessRecord> log_;
  MemorySlots<BlockPlain> slots_;
  Service service_;
  ShadowLedger ledger_;
  std::vector<std::unique_ptr<SimClient>> clients_;
};

}  // namespace caos::sim
