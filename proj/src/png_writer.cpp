#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "hydrocorr/error.hpp"
#include "hydrocorr/validation.hpp"

namespace hydrocorr {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0, out.data() + crc_start,
                         static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_contingency_png(const Grid& contingency, const std::string& path) {
  contingency.validate();
  const int h = contingency.height, w = contingency.width;

  // palette index = contingency code
  // 0 invalid: black, 1 TP: blue, 2 TN: gray, 3 FP: green, 4 FN: red
  static constexpr std::array<std::array<std::uint8_t, 3>, 5> palette = {{
      {0, 0, 0},
      {33, 102, 172},
      {150, 150, 150},
      {77, 175, 74},
      {215, 48, 39},
  }};

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (w + 1));
  for (int r = 0; r < h; ++r) {
    raw.push_back(0);  // filter: none
    for (int c = 0; c < w; ++c) {
      int code = static_cast<int>(contingency.at(r, c));
      if (code < 0 || code > 4)
        throw InvalidInput("contingency map contains a code outside 0..4");
      raw.push_back(static_cast<std::uint8_t>(code));
    }
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(comp_len);
  if (compress2(compressed.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png: deflate failed");
  compressed.resize(comp_len);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(3);  // color type: indexed
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  put_chunk(png, "IHDR", ihdr);

  std::vector<std::uint8_t> plte;
  for (const auto& rgb : palette)
    plte.insert(plte.end(), rgb.begin(), rgb.end());
  put_chunk(png, "PLTE", plte);
  put_chunk(png, "IDAT", compressed);
  put_chunk(png, "IEND", {});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(png.data()),
            static_cast<std::streamsize>(png.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace hydrocorr
