#include <gtest/gtest.h>

#include <random>
#include <set>

#include "caos/codec.hpp"

using namespace caos;

namespace {

BlockPlain random_block(std::mt19937_64& rng, std::size_t bs) {
  BlockPlain b;
  b.bid = rng() % 5 == 0 ? kFreeBlock : block_id(rng() % 1000);
  b.cns = 1 + static_cast<std::uint32_t>(rng() % 4);
  b.ts = rng();
  b.data.resize(bs);
  for (auto& x : b.data) x = static_cast<std::uint8_t>(rng());
  return b;
}

}  // namespace

TEST(EncodeBlock, LayoutMatchesHandWrittenBytes) {
  BlockPlain b{block_id(1), 1, 7, Bytes(16, 0)};
  Bytes want = {1, 0, 0, 0, 0, 0, 0, 0,   // bid
                1, 0, 0, 0,               // cns
                7, 0, 0, 0, 0, 0, 0, 0};  // ts
  want.resize(36, 0);
  EXPECT_EQ(encode_block(b, 16), want);
}

TEST(EncodeBlock, FreeBlockHasAllOnesId) {
  Bytes e = encode_block(BlockPlain::free_block(4, 2, 3), 4);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(e[i], 0xFF);
}

TEST(EncodeBlock, WrongDataLengthRejected) {
  BlockPlain b{block_id(1), 1, 7, Bytes(15, 0)};
  EXPECT_THROW(encode_block(b, 16), FormatError);
}

TEST(EncodeBlock, RoundTripsRandomBlocks) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    BlockPlain b = random_block(rng, 24);
    EXPECT_EQ(decode_block(encode_block(b, 24), 24), b);
  }
}

TEST(Keygen, SixteenRandomBytes) {
  StoreKey a = keygen(128), b = keygen(128);
  EXPECT_NE(a, b);
}

TEST(Keygen, RejectsOtherSecurityParameters) {
  EXPECT_THROW(keygen(64), ConfigError);
  EXPECT_THROW(keygen(256), ConfigError);
}

TEST(Keygen, EveryBytePositionVaries) {
  std::vector<std::set<std::uint8_t>> seen(16);
  for (int i = 0; i < 1000; ++i) {
    StoreKey k = keygen();
    for (int j = 0; j < 16; ++j) seen[j].insert(k.bytes[j]);
  }
  for (const auto& s : seen) EXPECT_GT(s.size(), 1u);
}

TEST(Seal, OpenRecoversBlock) {
  StoreKey k = keygen();
  BlockPlain b{block_id(9), 2, 1234, Bytes(32, 0xAB)};
  EXPECT_EQ(open(k, seal(k, b, 32), 32), b);
}

TEST(Seal, TwoSealsDiffer) {
  StoreKey k = keygen();
  BlockPlain b{block_id(9), 2, 1234, Bytes(32, 0xAB)};
  EXPECT_NE(seal(k, b, 32), seal(k, b, 32));
}

TEST(Seal, FreeAndDataBlocksHaveEqualSize) {
  StoreKey k = keygen();
  BlockPlain data{block_id(0), 1, 1, Bytes(64, 1)};
  auto free = BlockPlain::free_block(64, 3, 5);
  EXPECT_EQ(seal(k, data, 64).size(), seal(k, free, 64).size());
  EXPECT_EQ(seal(k, data, 64).size(), sealed_size(64));
  EXPECT_EQ(ct_size(64), 20u + 64 + 16);
}

TEST(Open, FlippedBitIsIntegrityError) {
  StoreKey k = keygen();
  BlockPlain b{block_id(1), 1, 1, Bytes(16, 0)};
  Bytes s = seal(k, b, 16);
  for (std::size_t i : {std::size_t{0}, std::size_t{20}, s.size() - 1}) {
    Bytes t = s;
    t[i] ^= 0x01;
    EXPECT_THROW(open(k, t, 16), IntegrityError) << "bit flipped at " << i;
  }
}

TEST(Open, ForeignKeyIsIntegrityError) {
  StoreKey k = keygen(), other = keygen();
  BlockPlain b{block_id(1), 1, 1, Bytes(16, 0)};
  EXPECT_THROW(open(other, seal(k, b, 16), 16), IntegrityError);
}

TEST(Open, WrongLengthIsFormatError) {
  StoreKey k = keygen();
  Bytes s = seal(k, BlockPlain{block_id(1), 1, 1, Bytes(16, 0)}, 16);
  s.pop_back();
  EXPECT_THROW(open(k, s, 16), FormatError);
}

TEST(Seal, RoundTripTenThousandBlocks) {
  StoreKey k = keygen();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    BlockPlain b = random_block(rng, 16);
    ASSERT_EQ(open(k, seal(k, b, 16), 16), b);
  }
}

TEST(Seal, NoncesDoNotRepeat) {
  StoreKey k = keygen();
  BlockPlain b{block_id(1), 1, 1, Bytes(1, 0)};
  std::set<Bytes> nonces;
  for (int i = 0; i < 100000; ++i) {
    Bytes s = seal(k, b, 1);
    nonces.emplace(s.begin(), s.begin() + kNonceSize);
  }
  EXPECT_EQ(nonces.size(), 100000u);
}

TEST(KeyFile, SaveLoadRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "caos_key_test.key";
  StoreKey k = keygen();
  save_key(path, k);
  EXPECT_EQ(load_key(path), k);
  EXPECT_EQ(std::filesystem::file_size(path), 16u);
  std::filesystem::remove(path);
}
