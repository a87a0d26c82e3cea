#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vaquita/tensor.hpp"

namespace vaquita::io {

// VQTA tensor container, little-endian throughout:
//   magic "VQTA" (0x56 0x51 0x54 0x41)
//   u8  version  (1)
//   u8  dtype    (0 = 32-bit float, 1 = 64-bit float)
//   u16 rank
//   rank x u64 extents
//   payload, row-major
// Readers reject unknown versions and dtypes with a FormatError.

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

struct VqtaTensor {
  Dtype dtype = Dtype::f64;
  std::vector<std::uint64_t> extents;
  // Always held as doubles; f32 payloads widen losslessly on read and
  // narrow back bit-exactly on write.
  std::vector<double> values;

  std::size_t element_count() const;
};

void write_vqta(std::ostream& os, const VqtaTensor& t);
void write_vqta_file(const std::filesystem::path& path, const VqtaTensor& t);
VqtaTensor read_vqta(std::istream& is);
VqtaTensor read_vqta_file(const std::filesystem::path& path);

/// Reads a VQTA file into a rank-2 Tensor (rank-1 files become 1 x n).
/// Non-finite payloads are rejected with a FormatError.
Tensor read_matrix(const std::filesystem::path& path);

/// Writes a Tensor as an f64 VQTA file.
void write_tensor(const std::filesystem::path& path, const Tensor& t);

}  // namespace vaquita::io
