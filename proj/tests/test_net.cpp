#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <random>

#include "caos/net.hpp"
#include "caos/obfuscation.hpp"
#include "caos/store_file.hpp"

using namespace caos;

namespace {

using FileService = StoreService<FileSlots>;

std::vector<Bytes> db(std::uint64_t n, std::size_t bs) {
  std::vector<Bytes> out;
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(Bytes(bs, static_cast<std::uint8_t>(i + 1)));
  return out;
}

Clock wall_clock() {
  return Clock([] {
    using namespace std::chrono;
    return static_cast<std::uint64_t>(
        duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
  });
}

/// Forwards frames and remembers the type byte and length of each one.
class RecordingTransport : public Transport {
 public:
  explicit RecordingTransport(Transport& inner) : inner_(inner) {}
  Bytes round_trip(const Bytes& frame) override {
    seen.push_back({static_cast<wire::MsgType>(frame.at(4)), frame.size()});
    Bytes resp = inner_.round_trip(frame);
    seen.push_back({static_cast<wire::MsgType>(resp.at(4)), resp.size()});
    return resp;
  }
  std::vector<std::pair<wire::MsgType, std::size_t>> seen;

 private:
  Transport& inner_;
};

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("caos-net-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path operator/(const char* name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A store file behind an in-process transport.
struct LoopbackStore {
  static constexpr std::size_t kBlock = 32;
  TempDir dir;
  FileSlots slots;
  FileService svc;
  std::mutex mu;
  LoopbackTransport<FileSlots> transport;

  explicit LoopbackStore(std::uint64_t positions)
      : slots(FileSlots::create(dir / "store", positions,
                                static_cast<std::uint32_t>(sealed_size(kBlock)))),
        svc(slots, 5000),
        transport(svc, mu) {}
};

}  // namespace

TEST(SealedSession, ReportsServerGeometry) {
  LoopbackStore st(12);
  SealedSession s(st.transport, keygen());
  EXPECT_EQ(s.block_size(), LoopbackStore::kBlock);
  EXPECT_EQ(s.slot_size(), sealed_size(LoopbackStore::kBlock));
  EXPECT_EQ(s.info().positions, 12u);
}

TEST(SealedSession, RejectsSlotsThatAreTooSmallForAnyBlock) {
  TempDir dir;
  FileSlots slots = FileSlots::create(dir / "store", 4, 8);
  FileService svc(slots, 5000);
  std::mutex mu;
  LoopbackTransport<FileSlots> t(svc, mu);
  EXPECT_THROW(SealedSession(t, keygen()), ProtocolError);
}

TEST(SealedSession, ReadBeforeInitIsProtocolError) {
  LoopbackStore st(4);
  SealedSession s(st.transport, keygen());
  EXPECT_THROW(s.read_pair(0, 1), ProtocolError);
}

TEST(SealedSession, ServerHoldsOnlyCiphertext) {
  LoopbackStore st(8);
  SealedSession s(st.transport, keygen());
  std::mt19937_64 rng(1);
  Clock c = wall_clock();
  const Bytes secret(LoopbackStore::kBlock, 0x5A);
  init_store({secret, secret}, 8, 2, 1, LoopbackStore::kBlock, c, rng, s);
  for (Position p = 0; p < 8; ++p) {
    Bytes slot = st.slots.read(p);
    EXPECT_EQ(slot.size(), sealed_size(LoopbackStore::kBlock));
    EXPECT_EQ(std::search(slot.begin(), slot.end(), secret.begin(), secret.begin() + 8), slot.end());
  }
}

TEST(SealedSession, WrongKeyIsIntegrityError) {
  LoopbackStore st(8);
  std::mt19937_64 rng(2);
  Clock c = wall_clock();
  {
    SealedSession s(st.transport, keygen());
    init_store(db(2, LoopbackStore::kBlock), 8, 2, 1, LoopbackStore::kBlock, c, rng, s);
  }
  SealedSession other(st.transport, keygen());
  EXPECT_THROW(other.read_pair(0, 1), IntegrityError);
}

TEST(SealedSession, AccessesMoveTwoCiphertextsEachWay) {
  LoopbackStore st(40);
  const StoreKey key = keygen();
  SealedSession s(st.transport, key);
  std::mt19937_64 rng(3);
  Clock c = wall_clock();
  ClientMap shared = init_store(db(10, LoopbackStore::kBlock), 40, 2, 1, LoopbackStore::kBlock, c, rng, s);
  ClientState rw{shared, wall_clock(), LoopbackStore::kBlock, {}};
  rw.map.set_identity(0, Role::kReadWrite);

  const auto before = s.traffic();
  std::uint64_t attempts = 0;
  for (int i = 0; i < 50; ++i) {
    BlockId b = block_id(static_cast<std::uint64_t>(i % 10));
    Bytes d(LoopbackStore::kBlock, static_cast<std::uint8_t>(100 + i));
    auto w = access_rw(b, Op::kWrite, d, s, rw, rng);
    auto r = access_rw(b, Op::kRead, std::nullopt, s, rw, rng);
    ASSERT_EQ(*r.result, d);
    attempts += w.attempts.size() + r.attempts.size();
  }
  EXPECT_EQ(s.traffic().blocks_down - before.blocks_down, 2 * attempts);
  EXPECT_EQ(s.traffic().blocks_up - before.blocks_up, 2 * attempts);
}

// The server sees the same message types and frame sizes whether a round
// serves a read, a write, or obfuscation.
TEST(SealedSession, ObfuscationRoundLooksLikeAnAccess) {
  LoopbackStore st(24);
  const StoreKey key = keygen();
  RecordingTransport rec(st.transport);
  SealedSession s(rec, key);
  std::mt19937_64 rng(4);
  Clock c = wall_clock();
  ClientMap shared = init_store(db(6, LoopbackStore::kBlock), 24, 2, 2, LoopbackStore::kBlock, c, rng, s);
  ClientState rw{shared, wall_clock(), LoopbackStore::kBlock, {}};
  rw.map.set_identity(0, Role::kReadWrite);
  ClientState oc_client{shared, wall_clock(), LoopbackStore::kBlock, {}};
  oc_client.map.set_identity(1, Role::kObfuscation);
  OcState oc = init_oc(std::move(oc_client), 3, s, rng);

  auto trace = [&](auto&& run) {
    rec.seen.clear();
    run();
    return rec.seen;
  };
  auto read = trace([&] { access_rw(block_id(0), Op::kRead, std::nullopt, s, rw, rng); });
  auto write = trace([&] {
    access_rw(block_id(1), Op::kWrite, Bytes(LoopbackStore::kBlock, 9), s, rw, rng);
  });
  auto obf = trace([&] { access_oc(oc, s, rng); });

  using wire::MsgType;
  const std::vector<MsgType> expect = {MsgType::kReadReq, MsgType::kReadResp, MsgType::kWriteReq,
                                       MsgType::kWriteAck};
  for (const auto* t : {&read, &write, &obf}) {
    ASSERT_EQ(t->size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ((*t)[i].first, expect[i]);
  }
  EXPECT_EQ(read, write);
  EXPECT_EQ(read, obf);
}

TEST(Tcp, RoundTripPersistsAcrossRestart) {
  TempDir dir;
  const auto path = dir / "store";
  const std::size_t bs = 64;
  const StoreKey key = keygen();
  std::mt19937_64 rng(5);
  ClientMap map;
  const Bytes d(bs, 0xC3);
  {
    FileSlots slots = FileSlots::create(path, 16, static_cast<std::uint32_t>(sealed_size(bs)));
    FileService svc(slots, 5000);
    TcpServer<FileSlots> server(svc, "127.0.0.1:0");
    server.start();
    TcpTransport t("127.0.0.1:" + std::to_string(server.port()));
    SealedSession s(t, key);
    Clock c = wall_clock();
    ClientMap shared = init_store(db(4, bs), 16, 2, 1, bs, c, rng, s);
    ClientState rw{shared, wall_clock(), bs, {}};
    rw.map.set_identity(0, Role::kReadWrite);
    ASSERT_TRUE(access_rw(block_id(2), Op::kWrite, d, s, rw, rng).result);
    map = rw.map;
    server.stop();
  }
  FileSlots slots(path);
  EXPECT_TRUE(slots.initialized());
  FileService svc(slots, 5000);
  TcpServer<FileSlots> server(svc, "127.0.0.1:0");
  server.start();
  TcpTransport t("127.0.0.1:" + std::to_string(server.port()));
  SealedSession s(t, key);
  ClientState rw{map, wall_clock(), bs, {}};
  auto r = access_rw(block_id(2), Op::kRead, std::nullopt, s, rw, rng);
  EXPECT_EQ(*r.result, d);
  auto other = access_rw(block_id(3), Op::kRead, std::nullopt, s, rw, rng);
  EXPECT_EQ(*other.result, Bytes(bs, 4));
}

TEST(Tcp, OverlappingPairIsLockedAcrossConnections) {
  TempDir dir;
  const std::size_t bs = 16;
  const StoreKey key = keygen();
  FileSlots slots = FileSlots::create(dir / "store", 8, static_cast<std::uint32_t>(sealed_size(bs)));
  FileService svc(slots, 5000);
  TcpServer<FileSlots> server(svc, "127.0.0.1:0");
  server.start();
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());
  TcpTransport t1(addr), t2(addr);
  SealedSession s1(t1, key), s2(t2, key);
  std::mt19937_64 rng(6);
  Clock c = wall_clock();
  init_store(db(2, bs), 8, 2, 1, bs, c, rng, s1);

  auto g = s1.read_pair(0, 1);
  ASSERT_TRUE(g);
  EXPECT_FALSE(s2.read_pair(1, 2));
  EXPECT_EQ(s2.traffic().locked, 1u);
  auto g2 = s2.read_pair(2, 3);
  ASSERT_TRUE(g2);
  EXPECT_TRUE(s1.write_pair(g->token, 0, g->first, 1, g->second));
  EXPECT_TRUE(s2.write_pair(g2->token, 2, g2->first, 3, g2->second));
  // the token is spent once its write landed
  EXPECT_FALSE(s1.write_pair(g->token, 0, g->first, 1, g->second));
}

TEST(Tcp, UnreachableServerIsProtocolError) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
  socklen_t len = sizeof a;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
  const auto port = ntohs(a.sin_port);
  ::close(fd);  // bound but never listened, so nothing accepts on this port
  EXPECT_THROW(TcpTransport("127.0.0.1:" + std::to_string(port)), ProtocolError);
}

TEST(Tcp, MalformedAddressIsConfigError) {
  EXPECT_THROW(TcpTransport("localhost"), ConfigError);
}
