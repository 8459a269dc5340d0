#pragma once

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <filesystem>

#include "caos/bytes.hpp"
#include "caos/types.hpp"

// File-backed slot storage.
//
// Store file: "CAOSSTR1" | version u16 | N u64 | ct_size u32 | initialized u8,
// then N slots of ct_size bytes.
//
// A pair write first lands in `<store>.journal` as
// "CAOSJNL1" | token u64 | p1 u64 | p2 u64 | len u32 | c1 | c2 | sha256,
// which is fsynced before either slot is touched and truncated after both
// slots are synced. Opening a store redoes a complete journal record and
// discards a torn one, so a pair is always all-old or all-new.

namespace caos {

inline constexpr std::string_view kStoreMagic = "CAOSSTR1";
inline constexpr std::uint16_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderSize = 8 + 2 + 8 + 4 + 1;
inline constexpr std::string_view kJournalMagic = "CAOSJNL1";

/// Steps of a pair write at which a test can cut power.
enum class CrashPoint { kJournalWrite, kJournalSync, kSlot1Write, kSlot2Write, kStoreSync, kJournalClear };

/// Thrown by an injected crash; the FileSlots object must be discarded.
struct SimulatedCrash {
  CrashPoint at;
  std::size_t bytes_written;
};

/// Given a step and the byte count it would write, returns how many bytes to
/// write before crashing, or nullopt to proceed normally.
using CrashPlan = std::function<std::optional<std::size_t>(CrashPoint, std::size_t)>;

namespace detail {

class Fd {
 public:
  Fd() = default;
  Fd(const std::filesystem::path& path, int flags) : fd_(::open(path.c_str(), flags, 0600)) {
    if (fd_ < 0) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    std::swap(fd_, o.fd_);
    return *this;
  }
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }

  void pwrite_all(const std::uint8_t* p, std::size_t n, std::uint64_t off) const {
    while (n > 0) {
      ssize_t w = ::pwrite(fd_, p, n, static_cast<off_t>(off));
      if (w < 0) {
        if (errno == EINTR) continue;
        throw Error(std::string("write failed: ") + std::strerror(errno));
      }
      p += w;
      n -= static_cast<std::size_t>(w);
      off += static_cast<std::uint64_t>(w);
    }
  }
  void pread_all(std::uint8_t* p, std::size_t n, std::uint64_t off) const {
    while (n > 0) {
      ssize_t r = ::pread(fd_, p, n, static_cast<off_t>(off));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw FormatError("short read from store file", off);
      p += r;
      n -= static_cast<std::size_t>(r);
      off += static_cast<std::uint64_t>(r);
    }
  }
  void sync() const {
    if (::fsync(fd_) != 0) throw Error(std::string("fsync failed: ") + std::strerror(errno));
  }
  void truncate(std::uint64_t len) const {
    if (::ftruncate(fd_, static_cast<off_t>(len)) != 0)
      throw Error(std::string("ftruncate failed: ") + std::strerror(errno));
  }
  std::uint64_t size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw Error(std::string("fstat failed: ") + std::strerror(errno));
    return static_cast<std::uint64_t>(st.st_size);
  }

 private:
  int fd_ = -1;
};

inline std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> b) {
  std::array<std::uint8_t, 32> out{};
  unsigned len = 0;
  if (EVP_Digest(b.data(), b.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  return out;
}

}  // namespace detail

class FileSlots {
 public:
  using slot_type = Bytes;

  /// Creates a new, uninitialized store file of the full length.
  static FileSlots create(const std::filesystem::path& path, std::uint64_t positions,
                          std::uint32_t slot_size) {
    if (positions < 2) throw ConfigError("store needs at least 2 positions");
    if (slot_size == 0) throw ConfigError("slot size must be positive");
    {
      detail::Fd fd(path, O_RDWR | O_CREAT | O_TRUNC);
      Bytes h = header(positions, slot_size, false);
      fd.pwrite_all(h.data(), h.size(), 0);
      fd.truncate(kStoreHeaderSize + positions * slot_size);
      fd.sync();
    }
    std::filesystem::remove(journal_path(path));
    return FileSlots(path);
  }

  /// Opens an existing store and replays or discards a pending journal record.
  explicit FileSlots(const std::filesystem::path& path) : path_(path), fd_(path, O_RDWR) {
    Bytes h(kStoreHeaderSize);
    if (fd_.size() < kStoreHeaderSize) throw FormatError("store file shorter than its header");
    fd_.pread_all(h.data(), h.size(), 0);
    ByteReader r(h);
    r.expect_magic(kStoreMagic);
    if (auto v = r.u16(); v != kStoreVersion)
      throw FormatError("unsupported store version " + std::to_string(v), 8);
    positions_ = r.u64();
    slot_size_ = r.u32();
    initialized_ = r.u8() != 0;
    std::uint64_t want = kStoreHeaderSize + positions_ * slot_size_;
    if (fd_.size() != want)
      throw FormatError("store file is " + std::to_string(fd_.size()) + " bytes, expected " +
                        std::to_string(want));
    journal_ = detail::Fd(journal_path(path), O_RDWR | O_CREAT);
    recovered_ = recover();
  }

  static std::filesystem::path journal_path(const std::filesystem::path& store) {
    auto j = store;
    j += ".journal";
    return j;
  }

  std::uint64_t positions() const { return positions_; }
  std::uint32_t slot_size() const { return slot_size_; }
  bool initialized() const { return initialized_; }
  /// Whether opening replayed a journal record.
  bool recovered() const { return recovered_; }
  bool valid(const Bytes& s) const { return s.size() == slot_size_; }

  void set_crash_plan(CrashPlan plan) { crash_ = std::move(plan); }

  Bytes read(Position p) const {
    Bytes out(slot_size_);
    fd_.pread_all(out.data(), out.size(), offset(p));
    return out;
  }

  void write_pair(Position p1, const Bytes& s1, Position p2, const Bytes& s2,
                  std::uint64_t token = 0) {
    Bytes rec = journal_record(token, p1, s1, p2, s2);
    step(CrashPoint::kJournalWrite, journal_, rec, 0);
    crash_before(CrashPoint::kJournalSync);
    journal_.sync();
    step(CrashPoint::kSlot1Write, fd_, s1, offset(p1));
    step(CrashPoint::kSlot2Write, fd_, s2, offset(p2));
    crash_before(CrashPoint::kStoreSync);
    fd_.sync();
    crash_before(CrashPoint::kJournalClear);
    journal_.truncate(0);
    journal_.sync();
  }

  void write_range(Position start, std::span<const Bytes> slots) {
    Bytes buf;
    buf.reserve(slots.size() * slot_size_);
    for (const auto& s : slots) buf.insert(buf.end(), s.begin(), s.end());
    fd_.pwrite_all(buf.data(), buf.size(), offset(start));
  }

  void set_initialized() {
    fd_.sync();
    std::uint8_t one = 1;
    fd_.pwrite_all(&one, 1, kStoreHeaderSize - 1);
    fd_.sync();
    initialized_ = true;
  }

 private:
  static Bytes header(std::uint64_t positions, std::uint32_t slot_size, bool init) {
    Bytes h;
    ByteWriter w(h);
    w.raw(kStoreMagic);
    w.u16(kStoreVersion);
    w.u64(positions);
    w.u32(slot_size);
    w.u8(init ? 1 : 0);
    return h;
  }

  std::uint64_t offset(Position p) const {
    if (p >= positions_) throw LookupError("position " + std::to_string(p) + " out of range");
    return kStoreHeaderSize + p * slot_size_;
  }

  static Bytes journal_record(std::uint64_t token, Position p1, const Bytes& s1, Position p2,
                              const Bytes& s2) {
    Bytes rec;
    ByteWriter w(rec);
    w.raw(kJournalMagic);
    w.u64(token);
    w.u64(p1);
    w.u64(p2);
    w.u32(static_cast<std::uint32_t>(s1.size()));
    w.raw(s1);
    w.raw(s2);
    auto digest = detail::sha256(rec);
    w.raw(digest);
    return rec;
  }

  void step(CrashPoint at, const detail::Fd& fd, const Bytes& b, std::uint64_t off) {
    if (crash_) {
      if (auto k = crash_(at, b.size())) {
        std::size_t n = std::min(*k, b.size());
        fd.pwrite_all(b.data(), n, off);
        throw SimulatedCrash{at, n};
      }
    }
    fd.pwrite_all(b.data(), b.size(), off);
  }

  void crash_before(CrashPoint at) {
    if (crash_ && crash_(at, 0)) throw SimulatedCrash{at, 0};
  }

  bool recover() {
    std::uint64_t len = journal_.size();
    if (len == 0) return false;
    Bytes rec(len);
    journal_.pread_all(rec.data(), rec.size(), 0);
    bool applied = false;
    try {
      ByteReader r(rec);
      r.expect_magic(kJournalMagic);
      r.u64();
      Position p1 = r.u64(), p2 = r.u64();
      std::uint32_t n = r.u32();
      if (n == slot_size_ && p1 < positions_ && p2 < positions_ && p1 != p2) {
        auto c1 = r.raw(n), c2 = r.raw(n);
        std::size_t body = r.offset();
        auto digest = r.raw(32);
        r.expect_end();
        auto want = detail::sha256(std::span(rec).first(body));
        if (std::equal(want.begin(), want.end(), digest.begin())) {
          fd_.pwrite_all(c1.data(), n, offset(p1));
          fd_.pwrite_all(c2.data(), n, offset(p2));
          fd_.sync();
          applied = true;
        }
      }
    } catch (const FormatError&) {
      // torn record: the slots were never touched
    }
    journal_.truncate(0);
    journal_.sync();
    return applied;
  }

  std::filesystem::path path_;
  detail::Fd fd_;
  detail::Fd journal_;
  std::uint64_t positions_ = 0;
  std::uint32_t slot_size_ = 0;
  bool initialized_ = false;
  bool recovered_ = false;
  CrashPlan crash_;
};

}  // namespace caos
