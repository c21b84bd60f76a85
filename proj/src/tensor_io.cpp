#include "lightyolo/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "lightyolo/error.hpp"

namespace lightyolo {
namespace {

constexpr std::array<char, 6> kMagic = {'F', 'T', 'N', 'S', 'R', '1'};
constexpr uint32_t kRank = 4;
// Refuse to allocate more than 2^31 floats from an untrusted header.
constexpr uint64_t kMaxElements = uint64_t{1} << 31;

void put_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorKind::kFormat, std::string("truncated file while reading ") + what);
  }
  return uint32_t{b[0]} | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) | (uint32_t{b[3]} << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  const Shape& s = t.shape();
  for (int64_t d : {s.n, s.c, s.h, s.w}) {
    if (d > std::numeric_limits<uint32_t>::max()) throw Error(ErrorKind::kFormat, "dim overflow: " + s.str());
  }
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kRank);
  for (int64_t d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<uint32_t>(d));
  for (float f : t.data()) put_u32(out, std::bit_cast<uint32_t>(f));
  if (!out) throw Error(ErrorKind::kIo, "failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 6> magic{};
  if (!in.read(magic.data(), magic.size())) throw Error(ErrorKind::kFormat, "truncated file while reading magic");
  if (magic != kMagic) throw Error(ErrorKind::kFormat, "bad magic");
  const uint32_t ndim = get_u32(in, "ndim");
  if (ndim != kRank) throw Error(ErrorKind::kFormat, "unsupported ndim " + std::to_string(ndim) + " (expected 4)");
  std::array<uint32_t, 4> dims{};
  for (auto& d : dims) d = get_u32(in, "dims");
  uint64_t count = 1;
  for (uint32_t d : dims) {
    if (d != 0 && count > kMaxElements / d) throw Error(ErrorKind::kFormat, "dim overflow");
    count *= d;
  }
  if (count > kMaxElements) throw Error(ErrorKind::kFormat, "dim overflow");
  std::vector<float> data(static_cast<size_t>(count));
  for (auto& f : data) f = std::bit_cast<float>(get_u32(in, "data"));
  return Tensor(Shape{dims[0], dims[1], dims[2], dims[3]}, std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace lightyolo
