#include "wsod/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "wsod/common.hpp"

namespace wsod {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

void write_png_impl(const std::string& path, std::size_t width, std::size_t height, int color_type,
                    std::size_t channels, const std::vector<std::uint8_t>& pixels) {
  if (width == 0 || height == 0 || pixels.size() != width * height * channels) {
    throw DataError("write_png: empty image or pixel buffer size mismatch");
  }

  // Filter byte 0 in front of every scanline.
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width * channels + 1));
  for (std::size_t r = 0; r < height; ++r) {
    raw.push_back(0);
    const std::uint8_t* row = pixels.data() + r * width * channels;
    raw.insert(raw.end(), row, row + width * channels);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  // Fixed level keeps identical pixels producing identical files.
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw DataError("write_png: deflate failed");
  }
  compressed.resize(bound);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kSignature, kSignature + 8);
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                     // bit depth
  ihdr.push_back(static_cast<std::uint8_t>(color_type));  // 0 gray, 2 rgb
  ihdr.push_back(0);                                      // compression
  ihdr.push_back(0);                                      // filter
  ihdr.push_back(0);                                      // interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_png: cannot open " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("write_png: write failed for " + path);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const GrayImage& image) {
  write_png_impl(path, image.width, image.height, 0, 1, image.pixels);
}

void write_png(const std::string& path, const RgbImage& image) {
  write_png_impl(path, image.width, image.height, 2, 3, image.pixels);
}

GrayImage read_png_gray(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
    throw DataError("read_png: not a PNG file: " + path);
  }

  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool saw_end = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw DataError("read_png: truncated chunk in " + path);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const std::uint8_t* payload = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("read_png: bad IHDR");
      width = get_u32(payload);
      height = get_u32(payload + 4);
      const int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8 || interlace != 0 || (color != 0 && color != 2)) {
        throw DataError("read_png: unsupported PNG variant (need 8-bit gray/rgb, no interlace)");
      }
      channels = color == 0 ? 1 : 3;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (width == 0 || height == 0 || idat.empty() || !saw_end) {
    throw DataError("read_png: missing required chunks in " + path);
  }

  const std::size_t stride = width * channels;
  std::vector<std::uint8_t> raw(height * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw DataError("read_png: inflate failed for " + path);
  }

  // Undo per-scanline filtering.
  std::vector<std::uint8_t> data(height * stride);
  const std::size_t bpp = channels;
  for (std::size_t r = 0; r < height; ++r) {
    const std::uint8_t filter = raw[r * (stride + 1)];
    const std::uint8_t* src = &raw[r * (stride + 1) + 1];
    std::uint8_t* dst = &data[r * stride];
    const std::uint8_t* up = r > 0 ? &data[(r - 1) * stride] : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= bpp ? dst[i - bpp] : 0;
      const int above = up ? up[i] : 0;
      const int corner = (up && i >= bpp) ? up[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += above; break;
        case 3: v += (left + above) / 2; break;
        case 4: v += paeth(left, above, corner); break;
        default: throw DataError("read_png: unknown filter type in " + path);
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(width * height);
  if (channels == 1) {
    img.pixels = std::move(data);
  } else {
    // Luma from RGB; scenes are written gray, this is a convenience path.
    for (std::size_t i = 0; i < width * height; ++i) {
      const int r = data[i * 3], g = data[i * 3 + 1], b = data[i * 3 + 2];
      img.pixels[i] = static_cast<std::uint8_t>((r * 299 + g * 587 + b * 114) / 1000);
    }
  }
  return img;
}

}  // namespace wsod
