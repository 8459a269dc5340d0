#pragma once

#include <json.hpp>

#include "caos/sim/checkers.hpp"
#include "caos/sim/world.hpp"

// Interleaved multi-client run. Each step advances one client by one server
// round trip (the READ half or the WRITE half of an attempt), so attempts of
// different clients overlap. Lock expiry is forced at random, and some
// attempts deliberately aim their random position at a locked slot. At every
// point where no client holds locks the invariants and the shadow ledger are
// checked.

namespace caos::sim {

struct FuzzConfig {
  WorldConfig world;
  std::uint64_t steps = 20000;
  double write_share = 0.5;      // read-write client: share of writes
  double timeout_rate = 0.005;   // per step: jump the clock past every lock
  double conflict_rate = 0.05;   // per attempt: aim the random slot at a held lock
};

struct FuzzReport {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::uint64_t committed_rw = 0, committed_ro = 0, committed_oc = 0;
  std::uint64_t writes = 0;
  std::uint64_t reads_checked = 0, read_mismatches = 0, ro_regressions = 0;
  std::uint64_t quiescent_checks = 0;
  std::uint64_t inv1_violations = 0, inv2_violations = 0;
  std::uint64_t inv1_undercounts = 0;     // positions with cns below the knowing clients
  std::uint64_t inv2_weak_failures = 0;   // blocks without any copy known to all
  std::uint64_t locked = 0, stale = 0, forced_timeouts = 0, forced_conflicts = 0, abandoned = 0;
  std::uint64_t requested_first = 0, requested_second = 0;
  double chi2_request_index = 0;
  bool four_positions = true;  // every committed access read and wrote exactly two slots
  SyncStats sync;
  std::uint64_t trace_hash = 0;
  std::string first_violation;
  std::uint64_t violation_step = 0;

  bool ok() const {
    return first_violation.empty() && inv1_violations == 0 && inv2_violations == 0 &&
           read_mismatches == 0 && ro_regressions == 0 && four_positions;
  }
};

inline nlohmann::json to_json(const FuzzReport& r) {
  return {{"seed", r.seed},
          {"steps", r.steps},
          {"committed", {{"rw", r.committed_rw}, {"ro", r.committed_ro}, {"oc", r.committed_oc}}},
          {"writes", r.writes},
          {"reads_checked", r.reads_checked},
          {"read_mismatches", r.read_mismatches},
          {"ro_regressions", r.ro_regressions},
          {"quiescent_checks", r.quiescent_checks},
          {"inv1_violations", r.inv1_violations},
          {"inv2_violations", r.inv2_violations},
          {"inv1_undercounts", r.inv1_undercounts},
          {"inv2_weak_failures", r.inv2_weak_failures},
          {"locked", r.locked},
          {"stale", r.stale},
          {"forced_timeouts", r.forced_timeouts},
          {"forced_conflicts", r.forced_conflicts},
          {"abandoned", r.abandoned},
          {"requested_index", {r.requested_first, r.requested_second}},
          {"chi2_request_index", r.chi2_request_index},
          {"four_positions", r.four_positions},
          {"sync",
           {{"freed", r.sync.freed},
            {"corrected", r.sync.corrected},
            {"cns_clamped", r.sync.cns_clamped},
            {"vf_anomalies", r.sync.vf_anomalies},
            {"duplications", r.sync.duplications}}},
          {"trace_hash", r.trace_hash},
          {"first_violation", r.first_violation},
          {"violation_step", r.violation_step},
          {"ok", r.ok()}};
}

namespace detail {

inline void fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 1099511628211ULL;
  }
}

/// A client's position in its current access.
struct Agent {
  bool active = false;       // an access is under way
  bool holds_locks = false;  // READ granted, WRITE not yet sent
  BlockId bid{};
  Op op = Op::kRead;
  Bytes data;
  std::size_t tries = 0, cap = 0;
  RwAttempt rw;
  OcAttempt oc;
  WriteBack wb;
  std::vector<Timestamp> last_read;  // per block, read-only regression check
};

}  // namespace detail

/// Drives one run. Stops at the first invariant or ledger violation; the
/// report's seed and violation_step replay it.
class InterleavedFuzz {
 public:
  InterleavedFuzz(const FuzzConfig& cfg, std::uint64_t seed) : cfg_(cfg), world_(cfg.world, seed) {
    rep_.seed = seed;
    world_.init_buffers();
    agents_.resize(world_.clients().size());
    for (auto& a : agents_) a.last_read.assign(cfg.world.n, 0);
    write_count_.assign(cfg.world.n, 0);
  }

  SimWorld& world() { return world_; }

  FuzzReport run() {
    for (std::uint64_t step = 0; step < cfg_.steps; ++step) {
      rep_.steps = step + 1;
      ++world_.now();
      if (chance(cfg_.timeout_rate)) {
        world_.now() += world_.service().lock_timeout_ms() + 1;
        ++rep_.forced_timeouts;
      }
      std::size_t i = caos::detail::uniform_below(agents_.size(), world_.rng());
      advance(i);
      if (!rep_.first_violation.empty()) {
        rep_.violation_step = step;
        break;
      }
      if (quiescent()) check(step);
      if (!rep_.first_violation.empty()) {
        rep_.violation_step = step;
        break;
      }
    }
    return finish();
  }

 private:
  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(world_.rng()) < p; }

  bool quiescent() const {
    for (const auto& a : agents_)
      if (a.holds_locks) return false;
    return true;
  }

  /// A position some other client currently holds, if any.
  std::optional<Position> held_elsewhere(std::size_t self) {
    std::vector<Position> held;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
      if (j == self || !agents_[j].holds_locks) continue;
      held.push_back(agents_[j].wb.p1);
      held.push_back(agents_[j].wb.p2);
    }
    if (held.empty()) return std::nullopt;
    return held[caos::detail::uniform_below(held.size(), world_.rng())];
  }

  void start_access(std::size_t i) {
    SimClient& c = world_.client(i);
    detail::Agent& a = agents_[i];
    a.active = true;
    a.tries = 0;
    if (c.role == Role::kObfuscation) {
      a.cap = 64;
      return;
    }
    a.bid = block_id(caos::detail::uniform_below(cfg_.world.n, world_.rng()));
    a.op = c.role == Role::kReadWrite && chance(cfg_.write_share) ? Op::kWrite : Op::kRead;
    if (a.op == Op::kWrite)
      a.data = world_.payload(a.bid, ++write_count_[raw(a.bid)]);
    else
      a.data.clear();
    a.cap = retry_cap(c.map(), a.bid);
  }

  void give_up_or_retry(detail::Agent& a) {
    if (++a.tries >= a.cap) {
      a.active = false;
      ++rep_.abandoned;
    }
  }

  void advance(std::size_t i) {
    detail::Agent& a = agents_[i];
    if (a.holds_locks) return write_half(i);
    if (!a.active) start_access(i);
    read_half(i);
  }

  void read_half(std::size_t i) {
    SimClient& c = world_.client(i);
    detail::Agent& a = agents_[i];
    auto& rng = world_.rng();
    Position p1, p2;
    if (c.role == Role::kObfuscation) {
      a.oc = plan_oc(c.map(), rng);
      if (chance(cfg_.conflict_rate))
        if (auto q = held_elsewhere(i); q && *q != a.oc.p2) {
          a.oc.p1 = *q;
          ++rep_.forced_conflicts;
        }
      p1 = a.oc.p1;
      p2 = a.oc.p2;
    } else {
      a.rw = plan_rw(c.map(), a.bid, a.op, a.data, rng);
      if (chance(cfg_.conflict_rate))
        if (auto q = held_elsewhere(i); q && *q != a.rw.req_p) {
          a.rw.cpy_p = *q;
          ++rep_.forced_conflicts;
        }
      p1 = a.rw.p1();
      p2 = a.rw.p2();
    }
    auto r = c.session->read_pair(p1, p2);
    if (!r) {
      ++rep_.locked;
      return give_up_or_retry(a);
    }
    if (c.role == Role::kObfuscation)
      a.wb = process_oc(a.oc, c.state, std::move(*r), rng);
    else
      a.wb = process_rw(a.rw, c.cs(), std::move(*r));
    a.holds_locks = true;
  }

  void write_half(std::size_t i) {
    SimClient& c = world_.client(i);
    detail::Agent& a = agents_[i];
    a.holds_locks = false;
    const LockToken token = c.role == Role::kObfuscation ? a.oc.token : a.rw.token;
    const bool acked = c.session->write_pair(token, a.wb.p1, a.wb.b1, a.wb.p2, a.wb.b2);
    if (!acked) ++rep_.stale;
    if (c.role == Role::kObfuscation) {
      finish_oc(c.state, acked);
      if (!acked) return give_up_or_retry(a);
      complete(i, a.oc.pattern(0));
      ++rep_.committed_oc;
      return;
    }
    finish_rw(c.cs(), acked);
    if (!acked || !a.rw.out) return give_up_or_retry(a);
    complete(i, a.rw.pattern(0));
    if (a.rw.req_first) ++rep_.requested_first;
    else ++rep_.requested_second;
    if (c.role == Role::kReadWrite) ++rep_.committed_rw;
    else ++rep_.committed_ro;
    verify_result(i);
  }

  void complete(std::size_t i, const AccessPattern& pat) {
    agents_[i].active = false;
    if (pat.reads.size() != 2 || pat.writes != pat.reads || pat.reads[0] == pat.reads[1])
      rep_.four_positions = false;
    detail::fnv(trace_, i);
    for (Position p : pat.reads) detail::fnv(trace_, p);
  }

  void verify_result(std::size_t i) {
    SimClient& c = world_.client(i);
    detail::Agent& a = agents_[i];
    ShadowLedger& ledger = world_.ledger();
    if (a.op == Op::kWrite) {
      ledger.commit(a.bid, a.rw.out_ts, *a.rw.out);
      ++rep_.writes;
      return;
    }
    ++rep_.reads_checked;
    const Bytes& got = *a.rw.out;
    if (c.role == Role::kReadWrite) {
      if (a.rw.out_ts != ledger.latest_ts(a.bid) || got != ledger.latest_data(a.bid)) {
        ++rep_.read_mismatches;
        violation("read-write client read block " + std::to_string(raw(a.bid)) + " ts " +
                  std::to_string(a.rw.out_ts) + ", latest is ts " +
                  std::to_string(ledger.latest_ts(a.bid)));
      }
      return;
    }
    const Bytes* v = ledger.version(a.bid, a.rw.out_ts);
    if (!v || *v != got) {
      ++rep_.read_mismatches;
      violation("client " + std::to_string(i) + " read block " + std::to_string(raw(a.bid)) +
                " ts " + std::to_string(a.rw.out_ts) + " which was never committed");
    }
    Timestamp& last = a.last_read[raw(a.bid)];
    if (a.rw.out_ts < last) {
      ++rep_.ro_regressions;
      violation("client " + std::to_string(i) + " read block " + std::to_string(raw(a.bid)) +
                " ts " + std::to_string(a.rw.out_ts) + " after ts " + std::to_string(last));
    }
    last = std::max(last, a.rw.out_ts);
  }

  void violation(const std::string& what) {
    if (rep_.first_violation.empty()) rep_.first_violation = what;
  }

  void check(std::uint64_t) {
    ++rep_.quiescent_checks;
    const auto latest = world_.ledger().latest();
    const auto maps = world_.maps();
    for (const ClientMap* m : maps)
      if (auto e = m->consistency_error(); !e.empty())
        violation("client " + std::to_string(m->client_id()) + " map: " + e);
    auto inv1 = check_inv1(world_.slots().slots(), maps, latest);
    auto inv2 = check_inv2(world_.slots().slots(), maps, latest);
    rep_.inv1_violations += inv1.violations.size();
    rep_.inv2_violations += inv2.violations.size();
    rep_.inv1_undercounts += inv1.diagnostics;
    rep_.inv2_weak_failures += inv2.checked - inv2.diagnostics;
    if (!inv1.ok()) violation(inv1.violations.front());
    if (!inv2.ok()) violation(inv2.violations.front());
  }

  FuzzReport finish() {
    const double total = static_cast<double>(rep_.requested_first + rep_.requested_second);
    if (total > 0) {
      const double e = total / 2;
      const double d1 = rep_.requested_first - e, d2 = rep_.requested_second - e;
      rep_.chi2_request_index = (d1 * d1 + d2 * d2) / e;
    }
    for (auto& c : world_.clients()) {
      const SyncStats& s = c->cs().stats;
      rep_.sync.freed += s.freed;
      rep_.sync.corrected += s.corrected;
      rep_.sync.cns_clamped += s.cns_clamped;
      rep_.sync.vf_anomalies += s.vf_anomalies;
      rep_.sync.duplications += s.duplications;
    }
    for (const AccessRecord& r : world_.log()) {
      detail::fnv(trace_, static_cast<std::uint64_t>(r.dir));
      detail::fnv(trace_, r.p1);
      detail::fnv(trace_, r.p2);
    }
    rep_.trace_hash = trace_;
    return rep_;
  }

  FuzzConfig cfg_;
  SimWorld world_;
  std::vector<detail::Agent> agents_;
  std::vector<std::uint64_t> write_count_;
  std::uint64_t trace_ = 14695981039346656037ULL;
  FuzzReport rep_;
};

inline FuzzReport run_interleaved_fuzz(const FuzzConfig& cfg, std::uint64_t seed) {
  return InterleavedFuzz(cfg, seed).run();
}

}  // namespace caos::sim
