#pragma once

#include <cstdint>

#include "caos/codec.hpp"

// Storage and bandwidth figures for a deployment.

namespace caos {

struct StorageRequirements {
  std::uint64_t data_bytes = 0;       // n * |block|
  std::uint64_t server_bytes = 0;     // C * n * |block| of payload across all copies
  std::uint64_t slot_file_bytes = 0;  // N sealed slots as stored, given N
  std::uint64_t oc_buffer_bytes = 0;  // s * |block|
  std::uint64_t access_bytes_each_way = 0;  // two sealed blocks per access
};

inline StorageRequirements storage_requirements(std::uint64_t n, std::uint64_t block_size,
                                                std::uint64_t redundancy, std::uint64_t s,
                                                std::uint64_t positions = 0) {
  StorageRequirements r;
  r.data_bytes = n * block_size;
  r.server_bytes = redundancy * n * block_size;
  r.slot_file_bytes = positions * sealed_size(block_size);
  r.oc_buffer_bytes = s * block_size;
  r.access_bytes_each_way = 2 * sealed_size(block_size);
  return r;
}

}  // namespace caos
