#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "caos/client.hpp"
#include "caos/codec.hpp"

// Throughput run of the read-write client: random gets and puts over several
// sessions at once, with exact ciphertext accounting.

namespace caos {

struct BenchOptions {
  std::uint64_t ops = 100;
  unsigned parallel = 1;
  double write_share = 0.5;
  std::uint64_t seed = 1;
};

struct BenchReport {
  std::uint64_t ops = 0, parallel = 0;
  std::uint64_t completed = 0, failed = 0;  // accesses with a result / out of retries
  std::uint64_t attempts = 0;               // READs the server granted
  std::uint64_t retried = 0, locked = 0, stale = 0;
  std::uint64_t ciphertexts_down = 0, ciphertexts_up = 0;
  std::uint64_t ct_size = 0;
  std::uint64_t bytes_down = 0, bytes_up = 0;  // whole frames on the wire
  double seconds = 0;

  double accesses_per_s() const { return seconds > 0 ? completed / seconds : 0; }
  double blocks_per_s() const { return seconds > 0 ? 2.0 * attempts / seconds : 0; }
  /// Every granted attempt moved exactly two ciphertexts each way.
  bool constant_bandwidth() const {
    return ciphertexts_down == 2 * attempts && ciphertexts_up == 2 * attempts;
  }
};

namespace detail {

/// access_rw for a client whose map is shared by several sessions. The map
/// is only touched under `mu`; the READ round trip runs outside it.
template <class Rng>
std::optional<Bytes> shared_access(BlockId bid, Op op, const Bytes& data, StoreSession& session,
                                   ClientState& cs, std::mutex& mu, Rng& rng, BenchReport& rep) {
  std::size_t cap;
  {
    std::lock_guard lock(mu);
    cap = retry_cap(cs.map, bid);
  }
  for (std::size_t t = 0; t < cap; ++t) {
    RwAttempt a;
    {
      std::lock_guard lock(mu);
      a = plan_rw(cs.map, bid, op, data, rng);
    }
    auto r = session.read_pair(a.p1(), a.p2());
    if (!r) {
      ++rep.retried;
      continue;
    }
    ++rep.attempts;
    std::lock_guard lock(mu);
    WriteBack w = process_rw(a, cs, std::move(*r));
    bool acked = session.write_pair(a.token, w.p1, w.b1, w.p2, w.b2);
    finish_rw(cs, acked);
    if (acked && a.out) return a.out;
    ++rep.retried;
  }
  return std::nullopt;
}

}  // namespace detail

/// Runs opt.ops accesses split over opt.parallel sessions; session i only
/// touches block ids congruent to i modulo opt.parallel.
inline BenchReport cmd_bench(ClientState& cs,
                             const std::function<std::unique_ptr<StoreSession>()>& make_session,
                             const BenchOptions& opt) {
  if (opt.parallel == 0) throw ConfigError("parallel must be at least 1");
  if (opt.parallel > cs.map.n())
    throw ConfigError("parallel (" + std::to_string(opt.parallel) + ") exceeds blocks (" +
                      std::to_string(cs.map.n()) + ")");
  const bool can_write = cs.map.role() == Role::kReadWrite;

  std::vector<std::unique_ptr<StoreSession>> sessions;
  for (unsigned i = 0; i < opt.parallel; ++i) sessions.push_back(make_session());
  std::vector<BenchReport> parts(opt.parallel);
  std::mutex mu;

  auto worker = [&](unsigned i) {
    std::mt19937_64 rng(opt.seed * 1000003 + i);
    BenchReport& rep = parts[i];
    const std::uint64_t mine = opt.ops / opt.parallel + (i < opt.ops % opt.parallel ? 1 : 0);
    const std::uint64_t slots = (cs.map.n() - i + opt.parallel - 1) / opt.parallel;
    for (std::uint64_t k = 0; k < mine; ++k) {
      BlockId b = block_id(i + opt.parallel * detail::uniform_below(slots, rng));
      const bool put = can_write && std::bernoulli_distribution(opt.write_share)(rng);
      Bytes data;
      if (put) {
        data.resize(cs.block_size);
        for (auto& x : data) x = static_cast<std::uint8_t>(rng());
      }
      auto out = detail::shared_access(b, put ? Op::kWrite : Op::kRead, data, *sessions[i], cs,
                                       mu, rng, rep);
      ++(out ? rep.completed : rep.failed);
    }
  };

  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  for (unsigned i = 0; i < opt.parallel; ++i) threads.emplace_back(worker, i);
  for (auto& t : threads) t.join();
  auto t1 = std::chrono::steady_clock::now();

  BenchReport rep;
  rep.ops = opt.ops;
  rep.parallel = opt.parallel;
  rep.ct_size = sealed_size(cs.block_size);
  rep.seconds = std::chrono::duration<double>(t1 - t0).count();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    rep.completed += parts[i].completed;
    rep.failed += parts[i].failed;
    rep.attempts += parts[i].attempts;
    rep.retried += parts[i].retried;
    const auto& tr = sessions[i]->traffic();
    rep.locked += tr.locked;
    rep.stale += tr.stale;
    rep.ciphertexts_down += tr.blocks_down;
    rep.ciphertexts_up += tr.blocks_up;
    rep.bytes_down += tr.bytes_down;
    rep.bytes_up += tr.bytes_up;
  }
  return rep;
}

}  // namespace caos
