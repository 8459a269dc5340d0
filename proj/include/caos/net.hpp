#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "caos/codec.hpp"
#include "caos/session.hpp"
#include "caos/store.hpp"
#include "caos/wire.hpp"

// Framed request/response transport, the server-side frame dispatcher, and
// the client session that seals blocks before they leave the process.

namespace caos {

/// Sends one request frame and returns the response frame.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Bytes round_trip(const Bytes& frame) = 0;
};

inline std::uint64_t steady_ms() {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(
      duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count());
}

/// Decodes a request frame, runs it against the service, encodes the reply.
/// Malformed frames get ERR{BAD_POSITION}.
template <class Storage>
Bytes handle_frame(StoreService<Storage>& svc, std::span<const std::uint8_t> frame,
                   std::uint64_t now_ms) {
  static_assert(std::is_same_v<typename Storage::slot_type, Bytes>);
  using namespace wire;
  Message req;
  try {
    req = decode_message(frame);
  } catch (const FormatError&) {
    return encode_message(Err{ErrCode::kBadPosition});
  }
  Message resp = std::visit(
      [&](auto& m) -> Message {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, InfoReq>) {
          auto slot = static_cast<std::uint32_t>(svc.storage().slot_size());
          return InfoResp{svc.storage().positions(), slot,
                          static_cast<std::uint32_t>(block_size_for_sealed(slot))};
        } else if constexpr (std::is_same_v<T, ReadReq>) {
          auto r = svc.serve_read(m.p1, m.p2, now_ms);
          if (auto* e = std::get_if<ErrCode>(&r)) return Err{*e};
          auto& g = std::get<ReadGrant<Bytes>>(r);
          return ReadResp{g.token, std::move(g.first), std::move(g.second)};
        } else if constexpr (std::is_same_v<T, WriteReq>) {
          if (auto e = svc.serve_write(m.token, m.p1, m.sealed1, m.p2, m.sealed2, now_ms))
            return Err{*e};
          return WriteAck{};
        } else if constexpr (std::is_same_v<T, BulkInit>) {
          if (auto e = svc.serve_bulk_init(m.start, m.sealed)) return Err{*e};
          return WriteAck{};
        } else {
          return Err{ErrCode::kBadPosition};
        }
      },
      req);
  return encode_message(resp);
}

/// Calls a service in-process under a mutex; used by tests and benchmarks.
template <class Storage>
class LoopbackTransport : public Transport {
 public:
  LoopbackTransport(StoreService<Storage>& svc, std::mutex& mu) : svc_(svc), mu_(mu) {}
  Bytes round_trip(const Bytes& frame) override {
    std::lock_guard lock(mu_);
    return handle_frame(svc_, frame, steady_ms());
  }

 private:
  StoreService<Storage>& svc_;
  std::mutex& mu_;
};

/// Session that seals every block with the store key and speaks the wire
/// protocol over a transport.
class SealedSession : public StoreSession {
 public:
  SealedSession(Transport& t, StoreKey key) : t_(t), key_(key) {
    auto i = info();
    block_size_ = i.block_size;
    sealed_size_ = i.sealed_size;
    if (sealed_size_ != sealed_size(block_size_))
      throw ProtocolError("server slot size " + std::to_string(sealed_size_) +
                          " does not match block size " + std::to_string(block_size_));
  }

  std::size_t block_size() const { return block_size_; }
  std::size_t slot_size() const { return sealed_size_; }

  wire::InfoResp info() override {
    auto m = call(wire::InfoReq{});
    if (auto* r = std::get_if<wire::InfoResp>(&m)) return *r;
    throw unexpected(m, "INFO");
  }

  std::optional<ReadResult> read_pair(Position p1, Position p2) override {
    auto m = call(wire::ReadReq{p1, p2});
    if (auto* e = std::get_if<wire::Err>(&m)) {
      if (e->code == ErrCode::kLocked) {
        ++traffic_.locked;
        return std::nullopt;
      }
      throw_err(e->code, "READ");
    }
    auto* r = std::get_if<wire::ReadResp>(&m);
    if (!r) throw unexpected(m, "READ");
    traffic_.blocks_down += 2;
    return ReadResult{r->token, open(key_, r->sealed1, block_size_),
                      open(key_, r->sealed2, block_size_)};
  }

  bool write_pair(LockToken token, Position p1, const BlockPlain& b1, Position p2,
                  const BlockPlain& b2) override {
    traffic_.blocks_up += 2;
    auto m = call(wire::WriteReq{token, p1, seal(key_, b1, block_size_), p2,
                                 seal(key_, b2, block_size_)});
    if (std::holds_alternative<wire::WriteAck>(m)) return true;
    if (auto* e = std::get_if<wire::Err>(&m)) {
      if (e->code == ErrCode::kStaleToken) {
        ++traffic_.stale;
        return false;
      }
      throw_err(e->code, "WRITE");
    }
    throw unexpected(m, "WRITE");
  }

  void bulk_init(Position start, std::span<const BlockPlain> blocks) override {
    wire::BulkInit b{start, {}};
    for (const auto& blk : blocks) b.sealed.push_back(seal(key_, blk, block_size_));
    auto m = call(b);
    if (std::holds_alternative<wire::WriteAck>(m)) return;
    if (auto* e = std::get_if<wire::Err>(&m)) throw_err(e->code, "BULK_INIT");
    throw unexpected(m, "BULK_INIT");
  }

 private:
  wire::Message call(const wire::Message& req) {
    Bytes out = wire::encode_message(req);
    traffic_.bytes_up += out.size();
    Bytes in = t_.round_trip(out);
    traffic_.bytes_down += in.size();
    return wire::decode_message(in);
  }
  static ProtocolError unexpected(const wire::Message& m, const char* during) {
    return ProtocolError("unexpected reply type " +
                         std::to_string(static_cast<int>(wire::type_of(m))) + " to " + during);
  }

  Transport& t_;
  StoreKey key_;
  std::size_t block_size_ = 0;
  std::size_t sealed_size_ = 0;
};

// ---- TCP -------------------------------------------------------------------

namespace detail {

inline void send_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

/// Returns false on clean EOF before the first byte.
inline bool recv_all(int fd, std::uint8_t* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0 && got == 0) return false;
    if (r <= 0) throw ProtocolError("connection closed mid-frame");
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline constexpr std::uint32_t kMaxFrame = 1u << 30;

/// Reads one length-prefixed frame; nullopt on EOF.
inline std::optional<Bytes> read_frame(int fd) {
  std::uint8_t len_bytes[4];
  if (!recv_all(fd, len_bytes, 4)) return std::nullopt;
  std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) |
                      static_cast<std::uint32_t>(len_bytes[1]) << 8 |
                      static_cast<std::uint32_t>(len_bytes[2]) << 16 |
                      static_cast<std::uint32_t>(len_bytes[3]) << 24;
  if (len > kMaxFrame) throw ProtocolError("frame of " + std::to_string(len) + " bytes");
  Bytes frame(4 + len);
  std::memcpy(frame.data(), len_bytes, 4);
  if (len > 0 && !recv_all(fd, frame.data() + 4, len)) throw ProtocolError("connection closed mid-frame");
  return frame;
}

struct HostPort {
  std::string host;
  std::string port;
};

inline HostPort split_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 == addr.size())
    throw ConfigError("address '" + addr + "' is not host:port");
  return {addr.substr(0, colon), addr.substr(colon + 1)};
}

}  // namespace detail

class TcpTransport : public Transport {
 public:
  explicit TcpTransport(const std::string& address) {
    auto hp = detail::split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(hp.host.c_str(), hp.port.c_str(), &hints, &res); rc != 0)
      throw ProtocolError("cannot resolve " + address + ": " + gai_strerror(rc));
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
        fd_ = fd;
        break;
      }
      ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw ProtocolError("cannot connect to " + address);
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  Bytes round_trip(const Bytes& frame) override {
    detail::send_all(fd_, frame.data(), frame.size());
    auto resp = detail::read_frame(fd_);
    if (!resp) throw ProtocolError("server closed the connection");
    return std::move(*resp);
  }

 private:
  int fd_ = -1;
};

/// Thread-per-connection server. Requests are serialized through one mutex,
/// so lock checks and slot writes are atomic per request; no request waits
/// on another client's lock.
template <class Storage>
class TcpServer {
 public:
  TcpServer(StoreService<Storage>& svc, const std::string& address) : svc_(svc) {
    auto hp = detail::split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(hp.host.empty() ? nullptr : hp.host.c_str(), hp.port.c_str(),
                               &hints, &res);
        rc != 0)
      throw ConfigError("cannot resolve listen address " + address + ": " + gai_strerror(rc));
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
        listen_fd_ = fd;
        break;
      }
      ::close(fd);
    }
    ::freeaddrinfo(res);
    if (listen_fd_ < 0)
      throw ConfigError("cannot listen on " + address + ": " + std::strerror(errno));
  }
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() { stop(); }

  /// The bound port (useful with port 0).
  std::uint16_t port() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  }

  /// Accepts until stop(). Blocks the calling thread.
  void serve() {
    while (!stopping_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        break;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      std::lock_guard lock(conn_mu_);
      conns_.push_back(fd);
      workers_.emplace_back([this, fd] { handle(fd); });
    }
  }

  void start() {
    acceptor_ = std::thread([this] { serve(); });
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> ws;
    {
      std::lock_guard lock(conn_mu_);
      for (int fd : conns_) ::shutdown(fd, SHUT_RDWR);
      ws.swap(workers_);
    }
    for (auto& w : ws) w.join();
  }

  std::mutex& service_mutex() { return mu_; }

 private:
  void handle(int fd) {
    try {
      while (auto frame = detail::read_frame(fd)) {
        Bytes resp;
        {
          std::lock_guard lock(mu_);
          resp = handle_frame(svc_, *frame, steady_ms());
        }
        detail::send_all(fd, resp.data(), resp.size());
      }
    } catch (const ProtocolError&) {
      // peer vanished or sent an oversized frame; drop the connection
    }
    std::lock_guard lock(conn_mu_);
    std::erase(conns_, fd);
    ::close(fd);
  }

  StoreService<Storage>& svc_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::mutex conn_mu_;
  std::vector<int> conns_;
  std::vector<std::thread> workers_;
  std::thread acceptor_;
};

}  // namespace caos
