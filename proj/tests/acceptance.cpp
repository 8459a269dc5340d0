// Acceptance runner. Each criterion prints one PASS/FAIL line; pass criterion
// numbers as arguments to run a subset (ctest registers one entry per number).

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "caos/map_file.hpp"
#include "caos/net.hpp"
#include "caos/sim/checkers.hpp"
#include "caos/sim/fuzz.hpp"
#include "caos/sim/game.hpp"
#include "caos/sim/stats.hpp"
#include "caos/sim/world.hpp"
#include "caos/store_file.hpp"

using namespace caos;
using namespace caos::sim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("caos-accept-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path operator/(const char* name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// ---- 1: exact survival probability ------------------------------------------

/// Counts overwrite sequences (N^r of them) that leave some position untouched.
Rational enumerate_survive(std::uint64_t N, std::uint64_t r) {
  std::uint64_t total = 1;
  for (std::uint64_t i = 0; i < r; ++i) total *= N;
  std::uint64_t missing = 0;
  std::vector<std::uint64_t> seq(r, 0);
  for (std::uint64_t k = 0; k < total; ++k) {
    std::uint64_t mask = 0;
    for (auto p : seq) mask |= 1ull << p;
    missing += mask != (1ull << N) - 1;
    for (std::size_t i = 0; i < r && ++seq[i] == N; ++i) seq[i] = 0;
  }
  return Rational(missing, total);
}

Outcome criterion1() {
  int exact_bad = 0, float_bad = 0;
  double worst = 0;
  for (std::uint64_t N = 2; N <= 4; ++N)
    for (std::uint64_t r = 1; r <= 8; ++r) {
      const Rational want = enumerate_survive(N, r);
      exact_bad += p_survive_exact(N, r) != want;
      const double err = std::abs(p_survive(N, r) - want.convert_to<double>());
      worst = std::max(worst, err);
      float_bad += err > 1e-12;
    }
  const bool anchor = p_survive_exact(3, 5) == Rational(93, 243);
  return {exact_bad == 0 && float_bad == 0 && anchor,
          fmt("24 (N,r) pairs: %d exact mismatches, max double error %.2e; p(3,5)=93/243 %s",
              exact_bad, worst, anchor ? "yes" : "no")};
}

// ---- 2: overwrite rounds ------------------------------------------------------

Outcome criterion2() {
  std::mt19937_64 rng(20240601);
  const std::uint64_t N = 256;
  SampleStats big = simulate_overwrite_rounds(N, 10000, rng);
  long double h = 0;
  for (std::uint64_t i = 1; i <= N; ++i) h += 1.0L / i;
  const double exact = static_cast<double>(N * h);
  const double rel = std::abs(big.mean - exact) / exact;
  bool pass = rel < 0.02;
  std::string d = fmt("N=256 mean %.2f vs N*H_N %.2f (%.2f%%; 1+N ln N = %.2f, not asserted)",
                      big.mean, exact, 100 * rel, 1 + N * std::log(double(N)));

  const std::size_t T = 10000;
  SampleStats small = simulate_overwrite_rounds(50, T, rng);
  for (std::uint64_t r : {50, 150, 400}) {
    const double p = p_survive(50, r);
    const double sigma = std::sqrt(p * (1 - p) / T);
    const double emp = small.fraction_above(r);
    const double z = sigma > 0 ? std::abs(emp - p) / sigma : (emp == p ? 0 : INFINITY);
    pass &= z <= 3;
    d += fmt("; N=50 r=%llu emp %.4f vs p %.4f (%.2f sigma)", (unsigned long long)r, emp, p, z);
  }
  return {pass, d};
}

// ---- 3: buffer mixing ---------------------------------------------------------

Outcome criterion3() {
  std::mt19937_64 rng(77);
  auto a = simulate_obs_shuffle(100, 10, 1, 2000, rng);
  const double bound = mixing_round_bound(100, 10);
  const double limit = bound + 3 * a.tracked.sem();
  const bool pass_a = a.tracked.mean <= limit;

  const std::uint64_t n = 32, s = 8, N = 96;
  const std::uint64_t r = oc_round_bound(n, s, N);
  const std::uint64_t window = 64;
  auto b = simulate_obs_shuffle(n, s, r + 2 * window, 4000, rng);
  const double tv = b.tv(r, r + window, r + 2 * window);
  const bool pass_b = tv < 0.05;
  return {pass_a && pass_b,
          fmt("[%s] n=100 s=10 tracked mean %.2f (sd %.2f, sem %.2f) vs %.2f + 3 sem = %.2f; "
              "[%s] n=32 s=8 N=96 r=%llu TV between windows of %llu rounds %.4f < 0.05",
              pass_a ? "ok" : "over", a.tracked.mean, std::sqrt(a.tracked.variance),
              a.tracked.sem(), bound, limit, pass_b ? "ok" : "over", (unsigned long long)r,
              (unsigned long long)window, tv)};
}

// ---- 4: invariant fuzzing -----------------------------------------------------

Outcome criterion4() {
  FuzzConfig cfg;
  cfg.world.n = 16;
  cfg.world.positions = 64;
  cfg.world.roles = {Role::kReadWrite, Role::kReadOnly, Role::kObfuscation};
  cfg.steps = 20000;
  std::uint64_t inv1 = 0, inv2 = 0, mism = 0, regress = 0, checked = 0, quiescent = 0,
                abandoned = 0, writes = 0;
  bool ok = true;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    FuzzReport r = run_interleaved_fuzz(cfg, seed);
    inv1 += r.inv1_violations;
    inv2 += r.inv2_violations;
    mism += r.read_mismatches;
    regress += r.ro_regressions;
    checked += r.reads_checked;
    quiescent += r.quiescent_checks;
    abandoned += r.abandoned;
    writes += r.writes;
    if (!r.ok() && first.empty())
      first = fmt(" first: seed %llu step %llu %s", (unsigned long long)seed,
                  (unsigned long long)r.violation_step, r.first_violation.c_str());
    ok &= r.ok() && r.steps == cfg.steps;
  }
  ok &= checked > 0;
  return {ok, fmt("10 seeds x 20000 steps: INV-1 %llu, INV-2 %llu violations; %llu reads checked, "
                  "%llu mismatches, %llu read-only regressions; %llu quiescent checks, %llu writes, "
                  "%llu abandoned accesses",
                  (unsigned long long)inv1, (unsigned long long)inv2, (unsigned long long)checked,
                  (unsigned long long)mism, (unsigned long long)regress,
                  (unsigned long long)quiescent, (unsigned long long)writes,
                  (unsigned long long)abandoned) +
                  first};
}

// ---- 5: distinguishing game ---------------------------------------------------

Outcome criterion5() {
  GameConfig cfg;
  cfg.n = 8;
  cfg.N = 32;
  cfg.s = 4;
  cfg.q = 16;
  cfg.trials = 2000;
  cfg.r = oc_round_bound(cfg.n, cfg.s, cfg.N);
  const std::vector<std::pair<std::string, Adversary>> advs = {
      {"frequency", frequency_adversary}, {"chain_linker", chain_linker_adversary}};
  GameResult mixed = run_game(cfg, advs, 5);
  GameConfig off = cfg;
  off.r = 0;
  GameResult raw = run_game(off, advs, 6);

  bool pass = true;
  std::string d = fmt("r=%llu:", (unsigned long long)cfg.r);
  for (std::size_t i = 0; i < advs.size(); ++i) {
    const auto& m = mixed.adversaries[i];
    const auto& z = raw.adversaries[i];
    const bool small = m.ci_high <= 0.05;
    const bool larger = z.advantage > m.advantage;
    pass &= small && larger;
    d += fmt(" %s %.4f (95%% CI %.4f..%.4f, %s), at r=0 %.4f (%s);", m.name.c_str(), m.advantage,
             m.ci_low, m.ci_high, small ? "<= 0.05" : "above 0.05", z.advantage,
             larger ? "larger" : "not larger");
  }
  d += fmt(" failed challenges %llu", (unsigned long long)mixed.failed_challenges);
  return {pass, d};
}

// ---- 6: constant bandwidth over TCP ---------------------------------------------

/// Forwards frames and remembers the type byte and size of each one.
class RecordingTransport : public Transport {
 public:
  explicit RecordingTransport(Transport& inner) : inner_(inner) {}
  Bytes round_trip(const Bytes& frame) override {
    sizes[frame.at(4)].insert(frame.size());
    Bytes resp = inner_.round_trip(frame);
    sizes[resp.at(4)].insert(resp.size());
    return resp;
  }
  std::map<std::uint8_t, std::set<std::size_t>> sizes;

 private:
  Transport& inner_;
};

Outcome criterion6() {
  const std::uint64_t n = 1024, N = 4096;
  const std::size_t bs = 16 * 1024;
  TempDir dir;
  FileSlots slots = FileSlots::create(dir / "store", N, static_cast<std::uint32_t>(sealed_size(bs)));
  StoreService<FileSlots> svc(slots, 5000);
  TcpServer<FileSlots> server(svc, "127.0.0.1:0");
  server.start();
  TcpTransport tcp("127.0.0.1:" + std::to_string(server.port()));
  const StoreKey key = keygen();
  std::mt19937_64 rng(66);

  std::vector<Bytes> db;
  for (std::uint64_t i = 0; i < n; ++i) db.push_back(Bytes(bs, static_cast<std::uint8_t>(i)));
  ClientMap map;
  {
    SealedSession boot(tcp, key);
    Clock c;
    map = init_store(db, N, 2, 1, bs, c, rng, boot);
  }

  RecordingTransport rec(tcp);
  SealedSession s(rec, key);
  ClientState cs{map, Clock(), bs, {}};
  const std::uint64_t ct = sealed_size(bs);
  std::uint64_t accesses = 0, irregular = 0, wrong_data = 0;
  std::vector<Bytes> expect = db;
  for (int i = 0; i < 400; ++i) {
    const BlockId b = block_id(caos::detail::uniform_below(n, rng));
    const bool put = i % 2 == 1;
    Bytes d;
    if (put) {
      d.assign(bs, 0);
      for (auto& x : d) x = static_cast<std::uint8_t>(rng());
    }
    const TrafficStats before = s.traffic();
    auto out = access_rw(b, put ? Op::kWrite : Op::kRead,
                         put ? std::optional<Bytes>(d) : std::nullopt, s, cs, rng);
    const TrafficStats after = s.traffic();
    ++accesses;
    const std::uint64_t granted = out.attempts.size();
    irregular += after.blocks_down - before.blocks_down != 2 * granted ||
                 after.blocks_up - before.blocks_up != 2 * granted || granted != 1;
    if (put) expect[raw(b)] = d;
    else wrong_data += *out.result != expect[raw(b)];
  }
  server.stop();

  // a READ reply and a WRITE request each carry two ciphertexts plus fixed framing
  const auto& resp = rec.sizes[static_cast<std::uint8_t>(wire::MsgType::kReadResp)];
  const auto& wreq = rec.sizes[static_cast<std::uint8_t>(wire::MsgType::kWriteReq)];
  const bool fixed = resp.size() == 1 && wreq.size() == 1 && *resp.begin() >= 2 * ct &&
                     *wreq.begin() >= 2 * ct && *resp.begin() - 2 * ct < 64 &&
                     *wreq.begin() - 2 * ct < 64;

  save_map(dir / "client.map", cs.map);
  const double map_bytes = static_cast<double>(std::filesystem::file_size(dir / "client.map"));
  const double capacity = static_cast<double>(n * bs);
  const double ratio = map_bytes / capacity;
  const bool pass = irregular == 0 && wrong_data == 0 && fixed && ratio < 0.002;
  return {pass,
          fmt("%llu accesses, %llu not moving exactly 2 ciphertexts (%llu B each) per direction, "
              "%llu wrong reads; READ_RESP %zu B, WRITE_REQ %zu B (%s); map %.0f B / capacity %.0f B "
              "= %.4f%% (limit 0.2%%)",
              (unsigned long long)accesses, (unsigned long long)irregular,
              (unsigned long long)ct, (unsigned long long)wrong_data,
              resp.empty() ? 0 : *resp.begin(), wreq.empty() ? 0 : *wreq.begin(),
              fixed ? "fixed" : "varying", map_bytes, capacity, 100 * ratio)};
}

// ---- 7: lock protocol -----------------------------------------------------------

Outcome criterion7() {
  WorldConfig wc;
  wc.roles = {Role::kReadWrite, Role::kReadOnly};
  SimWorld w(wc, 17);
  auto& rw = w.client(0);
  auto& ro = w.client(1);
  const BlockId A = block_id(0), B = block_id(1);
  std::vector<std::string> fails;
  auto expect = [&](bool c, const char* what) {
    if (!c) fails.push_back(what);
  };

  // 1. the read-write client holds a pair; an overlapping READ is refused
  ++w.now();
  const Bytes d1 = w.payload(A, 1);
  RwAttempt a = plan_rw(rw.map(), A, Op::kWrite, d1, w.rng());
  auto ra = rw.session->read_pair(a.p1(), a.p2());
  expect(ra.has_value(), "first READ granted");
  const auto locked_before = w.service().stats().locked;
  RwAttempt b = plan_rw(ro.map(), B, Op::kRead, {}, w.rng());
  b.cpy_p = a.req_p;  // overlap on one position
  expect(!ro.session->read_pair(b.p1(), b.p2()).has_value(), "overlapping READ refused");
  expect(w.service().stats().locked == locked_before + 1, "ERR{LOCKED} counted");

  // 2. the refused client retries with fresh positions and succeeds while the lock is held
  auto rb = access_rw(B, Op::kRead, std::nullopt, *ro.session, ro.cs(), w.rng());
  expect(rb.result && *rb.result == w.initial_payload(B), "retry with fresh positions succeeds");
  for (const auto& p : rb.attempts)
    for (Position q : p.reads)
      expect(q != a.req_p && q != a.cpy_p, "retry avoids the locked pair");

  // 3. the held lock times out; another client takes the pair; the old token is stale
  WriteBack wa = process_rw(a, rw.cs(), std::move(*ra));
  w.now() += w.config().lock_timeout_ms + 1;
  RwAttempt c;
  c.bid = A;
  c.req_p = a.req_p;
  c.cpy_p = a.cpy_p;
  auto rc = ro.session->read_pair(c.p1(), c.p2());
  expect(rc.has_value(), "expired lock is taken over");
  const auto stale_before = w.service().stats().stale;
  const bool stale_acked = rw.session->write_pair(a.token, wa.p1, wa.b1, wa.p2, wa.b2);
  finish_rw(rw.cs(), stale_acked);
  expect(!stale_acked, "stale token rejected");
  expect(w.service().stats().stale == stale_before + 1, "ERR{STALE_TOKEN} counted");
  if (rc) {
    WriteBack wc2 = process_rw(c, ro.cs(), std::move(*rc));
    const bool acked = ro.session->write_pair(c.token, wc2.p1, wc2.b1, wc2.p2, wc2.b2);
    finish_rw(ro.cs(), acked);
    expect(acked, "new holder writes back");
  }

  // 4. the read-write client retries and commits; everything reads back
  ++w.now();
  auto wr = access_rw(A, Op::kWrite, d1, *rw.session, rw.cs(), w.rng());
  expect(wr.result.has_value(), "retried write commits");
  w.ledger().commit(A, rw.map().entry(A).ts, d1);
  ++w.now();
  expect(*access_rw(A, Op::kRead, std::nullopt, *rw.session, rw.cs(), w.rng()).result == d1,
         "read-write client reads its write");
  auto i1 = check_inv1(w.slots().slots(), w.maps(), w.ledger().latest());
  auto i2 = check_inv2(w.slots().slots(), w.maps(), w.ledger().latest());
  expect(i1.ok(), "INV-1 after schedule");
  expect(i2.ok(), "INV-2 after schedule");

  std::string d = "LOCKED on overlap, fresh-position retry, stale token after timeout, retry commit, "
                  "invariants";
  for (const auto& f : fails) d += "; failed: " + f;
  return {fails.empty(), d};
}

// ---- 8: crash atomicity ---------------------------------------------------------

Outcome criterion8() {
  const std::uint64_t positions = 8;
  const std::uint32_t slot = 96;
  auto fill = [&](std::uint8_t tag, Position p) {
    Bytes b(slot);
    for (std::size_t i = 0; i < slot; ++i) b[i] = static_cast<std::uint8_t>(tag * 16 + p + i * 3);
    return b;
  };
  // a crash inside a write keeps the first k/(count-1) of the bytes being written
  struct Point {
    CrashPoint at;
    std::size_t k, count;
  };
  std::vector<Point> plan;
  auto spread = [&](CrashPoint at, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) plan.push_back({at, k, count});
  };
  spread(CrashPoint::kJournalWrite, 66);
  spread(CrashPoint::kSlot1Write, 66);
  spread(CrashPoint::kSlot2Write, 65);
  for (auto at : {CrashPoint::kJournalSync, CrashPoint::kStoreSync, CrashPoint::kJournalClear})
    plan.push_back({at, 0, 2});

  TempDir dir;
  const auto path = dir / "store";
  std::uint64_t old_count = 0, new_count = 0, mixed = 0, other_damage = 0, not_crashed = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    std::filesystem::remove(path);
    std::filesystem::remove(FileSlots::journal_path(path));
    const Position p1 = i % positions, p2 = (i * 3 + 1) % positions == p1 ? (p1 + 1) % positions
                                                                           : (i * 3 + 1) % positions;
    {
      FileSlots fs = FileSlots::create(path, positions, slot);
      StoreService<FileSlots> svc(fs, 5000);
      std::vector<Bytes> init;
      for (Position p = 0; p < positions; ++p) init.push_back(fill(1, p));
      svc.serve_bulk_init(0, init);
      auto grant = svc.serve_read(p1, p2, 10);
      const LockToken token = std::get<ReadGrant<Bytes>>(grant).token;
      const Point pt = plan[i];
      fs.set_crash_plan([pt](CrashPoint at, std::size_t len) -> std::optional<std::size_t> {
        if (at == pt.at) return pt.k * len / (pt.count - 1);
        return std::nullopt;
      });
      try {
        svc.serve_write(token, p1, fill(2, p1), p2, fill(2, p2), 11);
        ++not_crashed;
      } catch (const SimulatedCrash&) {
      }
    }
    FileSlots after(path);
    const bool o1 = after.read(p1) == fill(1, p1), o2 = after.read(p2) == fill(1, p2);
    const bool n1 = after.read(p1) == fill(2, p1), n2 = after.read(p2) == fill(2, p2);
    if (o1 && o2) ++old_count;
    else if (n1 && n2) ++new_count;
    else ++mixed;
    for (Position p = 0; p < positions; ++p)
      if (p != p1 && p != p2) other_damage += after.read(p) != fill(1, p);
  }
  return {mixed == 0 && other_damage == 0 && not_crashed == 0 && plan.size() == 200,
          fmt("%zu crash points: %llu both-old, %llu both-new, %llu mixed, %llu other slots "
              "damaged, %llu runs did not crash",
              plan.size(), (unsigned long long)old_count, (unsigned long long)new_count,
              (unsigned long long)mixed, (unsigned long long)other_damage,
              (unsigned long long)not_crashed)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "survival probability exact vs enumeration", 5, criterion1},
      {2, "overwrite rounds vs coupon collector", 30, criterion2},
      {3, "buffer mixing bound and TV distance", 60, criterion3},
      {4, "interleaved invariant fuzzing", 120, criterion4},
      {5, "distinguishing game advantage", 180, criterion5},
      {6, "constant bandwidth over TCP and map size", 60, criterion6},
      {7, "lock protocol schedule", 10, criterion7},
      {8, "crash atomicity of paired writes", 30, criterion8},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %d %s: %s  %s [%.2f s, budget %.0f s%s]\n", c.id, c.name,
                pass ? "PASS" : "FAIL", o.detail.c_str(), secs, c.budget_s,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
