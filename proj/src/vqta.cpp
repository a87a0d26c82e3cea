#include "vaquita/vqta.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace vaquita::io {

namespace {

constexpr std::uint8_t kMagic[4] = {0x56, 0x51, 0x54, 0x41};  // "VQTA"
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  std::uint8_t buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<std::uint8_t>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::uint8_t buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw FormatError("vqta: truncated file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

void put_f64_le(std::ostream& os, double v) {
  put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}

void put_f32_le(std::ostream& os, float v) {
  put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
}

}  // namespace

std::size_t VqtaTensor::element_count() const {
  std::size_t n = 1;
  for (std::uint64_t e : extents) {
    if (e == 0) throw FormatError("vqta: zero extent");
    if (e > std::numeric_limits<std::size_t>::max() / n)
      throw FormatError("vqta: extent product overflows");
    n *= static_cast<std::size_t>(e);
  }
  return extents.empty() ? 0 : n;
}

void write_vqta(std::ostream& os, const VqtaTensor& t) {
  if (t.extents.empty()) throw FormatError("vqta: rank must be >= 1");
  if (t.extents.size() > 0xffff) throw FormatError("vqta: rank too large");
  const std::size_t n = t.element_count();
  if (n != t.values.size())
    throw FormatError("vqta: payload size does not match extents");
  os.write(reinterpret_cast<const char*>(kMagic), 4);
  put_le<std::uint8_t>(os, kVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.extents.size()));
  for (std::uint64_t e : t.extents) put_le<std::uint64_t>(os, e);
  if (t.dtype == Dtype::f64) {
    for (double v : t.values) put_f64_le(os, v);
  } else {
    for (double v : t.values) put_f32_le(os, static_cast<float>(v));
  }
  if (!os) throw FormatError("vqta: write failed");
}

void write_vqta_file(const std::filesystem::path& path, const VqtaTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("vqta: cannot open for writing: " + path.string());
  write_vqta(os, t);
}

VqtaTensor read_vqta(std::istream& is) {
  std::uint8_t magic[4];
  is.read(reinterpret_cast<char*>(magic), 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("vqta: bad magic");
  const auto version = get_le<std::uint8_t>(is);
  if (version != kVersion)
    throw FormatError("vqta: unknown version " + std::to_string(version));
  const auto dtype = get_le<std::uint8_t>(is);
  if (dtype > 1)
    throw FormatError("vqta: unknown dtype " + std::to_string(dtype));
  const auto rank = get_le<std::uint16_t>(is);
  if (rank == 0) throw FormatError("vqta: rank must be >= 1");

  VqtaTensor t;
  t.dtype = static_cast<Dtype>(dtype);
  t.extents.resize(rank);
  for (auto& e : t.extents) e = get_le<std::uint64_t>(is);
  const std::size_t n = t.element_count();

  t.values.resize(n);
  if (t.dtype == Dtype::f64) {
    for (auto& v : t.values)
      v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  } else {
    for (auto& v : t.values) {
      v = static_cast<double>(
          std::bit_cast<float>(get_le<std::uint32_t>(is)));
    }
  }
  // Exactly the declared payload, nothing more.
  is.peek();
  if (!is.eof()) throw FormatError("vqta: trailing bytes after payload");
  return t;
}

VqtaTensor read_vqta_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("vqta: cannot open: " + path.string());
  try {
    return read_vqta(is);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

Tensor read_matrix(const std::filesystem::path& path) {
  VqtaTensor t = read_vqta_file(path);
  for (double v : t.values)
    if (!std::isfinite(v))
      throw FormatError("vqta: non-finite payload (" + path.string() + ")");
  Shape shape;
  if (t.extents.size() == 1) {
    shape = {1, static_cast<std::size_t>(t.extents[0])};
  } else if (t.extents.size() == 2) {
    shape = {static_cast<std::size_t>(t.extents[0]),
             static_cast<std::size_t>(t.extents[1])};
  } else {
    throw FormatError("vqta: expected rank 1 or 2, got rank " +
                      std::to_string(t.extents.size()) + " (" + path.string() +
                      ")");
  }
  return Tensor::from_values(std::move(shape), std::move(t.values));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  VqtaTensor v;
  v.dtype = Dtype::f64;
  v.extents.assign(t.shape().begin(), t.shape().end());
  v.values.assign(t.values().begin(), t.values().end());
  write_vqta_file(path, v);
}

}  // namespace vaquita::io
