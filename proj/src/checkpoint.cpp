#include "wsod/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "wsod/common.hpp"

namespace wsod {

namespace {

constexpr char kMagic[] = "WSODCKPT1";
constexpr std::size_t kMagicLen = 9;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  write_u64(os, bits);
}

double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, kMagicLen);
  for (const auto& [name, pg] : params.entries()) {
    const Tensor& t = *pg.first;
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u64(os, d);
    for (double v : t.values()) write_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamSet& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }

  std::size_t loaded = 0;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = read_u32(is);
    if (name_len > 4096) throw DataError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("checkpoint: truncated name");
    const std::uint32_t rank = read_u32(is);
    if (rank > 8) throw DataError("checkpoint: implausible rank for " + name);
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(read_u64(is));
      numel *= shape[i];
    }
    Tensor* target = params.find(name);
    if (!target) throw DataError("checkpoint: unknown tensor '" + name + "' in " + path);
    if (target->shape() != shape) {
      throw DataError("checkpoint: shape mismatch for '" + name + "': file has " +
                      Tensor::shape_str(shape) + ", model has " + target->shape_str());
    }
    for (std::size_t i = 0; i < numel; ++i) (*target)[i] = read_f64(is);
    ++loaded;
  }
  if (loaded != params.entries().size()) {
    throw DataError("checkpoint: file lists " + std::to_string(loaded) + " tensors, model has " +
                    std::to_string(params.entries().size()));
  }
}

}  // namespace wsod
