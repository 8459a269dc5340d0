#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "caos/obfuscation.hpp"
#include "caos/session.hpp"

// Distinguishing experiment against the access pattern. A challenger sets up
// a store with one read-write client and one obfuscation client, then for
// each of q queries runs r obfuscation rounds followed by one challenged
// access to B_b. The adversary sees the initial layout, the initial buffer
// and every position the server touched, and guesses b.

namespace caos::sim {

struct GameConfig {
  std::uint64_t n = 8;
  std::uint64_t N = 32;
  std::size_t s = 4;
  std::uint64_t r = 0;       // obfuscation rounds before each challenge
  std::uint64_t q = 16;      // challenges per experiment
  std::uint64_t trials = 2000;  // experiments per value of b
  std::uint32_t redundancy = 2;
  std::size_t block_size = 8;
};

/// Everything the adversary observes in one experiment.
struct GameView {
  std::vector<BlockId> initial_layout;  // per position
  std::vector<BlockId> initial_buffer;
  struct Query {
    std::vector<AccessRecord> obfuscation;  // server records of the r rounds
    std::vector<AccessRecord> challenge;    // server records of the challenged access
  };
  std::vector<Query> queries;
  BlockId b0{}, b1{};
};

using Adversary = std::function<int(const GameView&, std::mt19937_64&)>;

/// Counts challenged reads landing on positions that initially held B_0
/// versus B_1.
inline int frequency_adversary(const GameView& v, std::mt19937_64& rng) {
  long score = 0;
  for (const auto& q : v.queries)
    for (const auto& rec : q.challenge) {
      if (rec.dir != 'R') continue;
      for (Position p : {rec.p1, rec.p2}) {
        score += v.initial_layout[p] == v.b0;
        score -= v.initial_layout[p] == v.b1;
      }
    }
  if (score == 0) return static_cast<int>(rng() & 1);
  return score > 0 ? 0 : 1;
}

/// Tracks, per position, a distribution over block ids. Every committed
/// pair access may have copied either block onto the other position, so the
/// two distributions are averaged. Challenged reads score the mass of B_0
/// against B_1.
inline int chain_linker_adversary(const GameView& v, std::mt19937_64& rng) {
  const std::size_t N = v.initial_layout.size();
  std::uint64_t n = 0;
  for (BlockId b : v.initial_layout)
    if (!is_free(b)) n = std::max<std::uint64_t>(n, raw(b) + 1);
  // column n stands for "free"
  std::vector<std::vector<double>> dist(N, std::vector<double>(n + 1, 0.0));
  for (std::size_t p = 0; p < N; ++p)
    dist[p][is_free(v.initial_layout[p]) ? n : raw(v.initial_layout[p])] = 1.0;
  auto mix = [&](Position a, Position b) {
    for (std::size_t i = 0; i <= n; ++i) {
      double m = (dist[a][i] + dist[b][i]) / 2;
      dist[a][i] = dist[b][i] = m;
    }
  };
  double score = 0;
  for (const auto& q : v.queries) {
    for (const auto& rec : q.obfuscation)
      if (rec.dir == 'W') mix(rec.p1, rec.p2);
    for (const auto& rec : q.challenge) {
      if (rec.dir == 'R')
        for (Position p : {rec.p1, rec.p2})
          score += dist[p][raw(v.b0)] - dist[p][raw(v.b1)];
      else
        mix(rec.p1, rec.p2);
    }
  }
  if (score == 0) return static_cast<int>(rng() & 1);
  return score > 0 ? 0 : 1;
}

inline int random_adversary(const GameView&, std::mt19937_64& rng) {
  return static_cast<int>(rng() & 1);
}

struct AdversaryResult {
  std::string name;
  double p1_b0 = 0, p1_b1 = 0;  // P(guess = 1 | b)
  double advantage = 0;          // |p1_b0 - p1_b1|
  double ci_low = 0, ci_high = 0;  // Wald 95% interval for the advantage
};

struct GameResult {
  GameConfig cfg;
  std::vector<AdversaryResult> adversaries;
  std::uint64_t failed_challenges = 0;  // challenged accesses that ran out of retries
};

/// One experiment for a fixed b; returns the adversary's view.
inline GameView run_experiment(const GameConfig& cfg, int b, std::mt19937_64& rng) {
  MemorySlots<BlockPlain> slots(cfg.N);
  std::vector<AccessRecord> log;
  std::uint64_t now = 1000;
  PlainSession::Service service(slots, 1u << 30, [&log](const AccessRecord& r) { log.push_back(r); });
  PlainSession session(service, cfg.block_size, [&now] { return now; });

  std::vector<Bytes> db;
  for (std::uint64_t i = 0; i < cfg.n; ++i) db.push_back(Bytes(cfg.block_size, static_cast<std::uint8_t>(i)));
  Clock boot([&now] { return now; });
  ClientMap shared = init_store(db, cfg.N, cfg.redundancy, 2, cfg.block_size, boot, rng, session);

  GameView view;
  for (Position p = 0; p < cfg.N; ++p) view.initial_layout.push_back(slots.read(p).bid);
  view.b0 = block_id(0);
  view.b1 = block_id(1);

  ClientState rw{shared, Clock([&now] { return now; }), cfg.block_size, {}};
  rw.map.set_identity(0, Role::kReadWrite);
  ClientState oc_client{shared, Clock([&now] { return now; }), cfg.block_size, {}};
  oc_client.map.set_identity(1, Role::kObfuscation);
  OcState oc = init_oc(std::move(oc_client), cfg.s, session, rng);
  for (const auto& e : oc.buffer.entries()) view.initial_buffer.push_back(e.bid);

  const BlockId target = b == 0 ? view.b0 : view.b1;
  for (std::uint64_t j = 0; j < cfg.q; ++j) {
    GameView::Query query;
    std::size_t mark = log.size();
    for (std::uint64_t i = 0; i < cfg.r; ++i) {
      ++now;
      access_oc(oc, session, rng);
    }
    query.obfuscation.assign(log.begin() + static_cast<std::ptrdiff_t>(mark), log.end());
    mark = log.size();
    ++now;
    try {
      access_rw(target, Op::kRead, std::nullopt, session, rw, rng);
    } catch (const AccessError&) {
      // the failed attempts are still observed
    }
    query.challenge.assign(log.begin() + static_cast<std::ptrdiff_t>(mark), log.end());
    view.queries.push_back(std::move(query));
  }
  return view;
}

/// Runs cfg.trials experiments for each b and scores every adversary on the
/// same views.
inline GameResult run_game(const GameConfig& cfg,
                           const std::vector<std::pair<std::string, Adversary>>& adversaries,
                           std::uint64_t seed) {
  if (cfg.n < 2) throw ConfigError("game needs n >= 2");
  if (cfg.q < 1) throw ConfigError("game needs q >= 1");
  if (cfg.trials < 1) throw ConfigError("game needs at least one trial");

  std::vector<std::array<std::uint64_t, 2>> ones(adversaries.size(), {0, 0});
  GameResult res;
  res.cfg = cfg;
  for (std::uint64_t t = 0; t < cfg.trials; ++t)
    for (int b = 0; b < 2; ++b) {
      std::seed_seq ss{seed, t, static_cast<std::uint64_t>(b)};
      std::mt19937_64 rng(ss);
      GameView view = run_experiment(cfg, b, rng);
      for (const auto& q : view.queries) {
        bool wrote = false;
        for (const auto& rec : q.challenge) wrote |= rec.dir == 'W';
        res.failed_challenges += !wrote;
      }
      for (std::size_t a = 0; a < adversaries.size(); ++a)
        ones[a][b] += adversaries[a].second(view, rng) == 1;
    }

  const double T = static_cast<double>(cfg.trials);
  for (std::size_t a = 0; a < adversaries.size(); ++a) {
    AdversaryResult r;
    r.name = adversaries[a].first;
    r.p1_b0 = ones[a][0] / T;
    r.p1_b1 = ones[a][1] / T;
    const double diff = r.p1_b0 - r.p1_b1;
    const double se = std::sqrt(r.p1_b0 * (1 - r.p1_b0) / T + r.p1_b1 * (1 - r.p1_b1) / T);
    r.advantage = std::abs(diff);
    // interval for the signed difference, folded onto |diff|
    const double lo = diff - 1.96 * se, hi = diff + 1.96 * se;
    r.ci_low = (lo <= 0 && hi >= 0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
    r.ci_high = std::max(std::abs(lo), std::abs(hi));
    res.adversaries.push_back(r);
  }
  return res;
}

inline std::vector<std::pair<std::string, Adversary>> builtin_adversaries() {
  return {{"frequency", frequency_adversary},
          {"chain_linker", chain_linker_adversary},
          {"random", random_adversary}};
}

}  // namespace caos::sim
