#pragma once

#include <cstdint>
#include <string>

#include "lorafuse/lora.hpp"
#include "lorafuse/prune.hpp"

namespace lorafuse {

/// Decoded adapter container: the factor pair in pruned dimensions, the
/// retained index sets that position it inside the full (d_out, d_in)
/// space, and the provenance seed.
struct AdapterFile {
  LoraAdapter adapter;
  PruneMap map;  // single layer, the adapter's
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  std::uint64_t seed = 0;
};

/// Binary layout (all integers and floats little-endian):
///   magic "LCRA" | version u16=1 | name_len u16 | name bytes
///   | d_out u32 | d_in u32 | rank u32 | alpha f64 | seed u64
///   | n_rows u32 | retained rows u32 each
///   | n_cols u32 | retained cols u32 each
///   | B row-major f64 (n_rows * rank) | A row-major f64 (rank * n_cols)
///   | crc32 u32 over all preceding bytes
/// The write is atomic: temp file in the same directory, then rename.
void write_adapter(const std::string& path, const LoraAdapter& adapter,
                   const PruneMap& map, std::size_t d_out, std::size_t d_in,
                   std::uint64_t seed);

/// Inverse of write_adapter; the checksum is validated before any value is
/// constructed. Truncation and bad magic/version raise FormatError, CRC
/// mismatch raises IntegrityError.
AdapterFile read_adapter(const std::string& path);

/// Identity prune map over the full dimensions, for adapters that already
/// live in full space (recovered or refactored ones).
PruneMap identity_map(const std::string& layer_name, std::size_t d_out,
                      std::size_t d_in);

/// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

}  // namespace lorafuse
