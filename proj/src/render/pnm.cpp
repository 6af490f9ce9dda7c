#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "blocktower/common/error.hpp"
#include "blocktower/render.hpp"

namespace blocktower::render {
namespace {

std::string header(const char* magic, int w, int h, int maxval) {
  return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
         std::to_string(maxval) + "\n";
}

struct PnmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

// Netpbm header: magic, then width, height, maxval separated by whitespace
// (with '#' comments), then exactly one whitespace byte.
PnmHeader parse_header(std::string_view bytes, std::string_view magic, const std::string& source) {
  auto corrupt = [&](const std::string& why) {
    throw Error(ErrorCode::kCorruptFile, source + ": " + why);
  };
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) corrupt("bad magic (expected " + std::string(magic) + ")");
  std::size_t pos = 2;
  int fields[3] = {0, 0, 0};
  for (int& field : fields) {
    for (;;) {
      if (pos >= bytes.size()) corrupt("truncated header");
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    if (!std::isdigit(static_cast<unsigned char>(bytes[pos]))) corrupt("bad header field");
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) corrupt("header value too large");
      ++pos;
    }
    field = static_cast<int>(value);
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    corrupt("truncated header");
  ++pos;
  PnmHeader h{fields[0], fields[1], fields[2], pos};
  if (h.width <= 0 || h.height <= 0) corrupt("bad dimensions");
  if (h.maxval <= 0 || h.maxval > 255) corrupt("unsupported maxval");
  return h;
}

}  // namespace

std::string encode_ppm(const Image& img) {
  std::string out = header("P6", img.width, img.height, 255);
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

std::string encode_pgm(const MaskImage& mask) {
  std::string out = header("P5", mask.width, mask.height, 4);
  out.append(reinterpret_cast<const char*>(mask.data.data()), mask.data.size());
  return out;
}

std::string encode_pgm8(int width, int height, std::span<const uint8_t> values) {
  std::string out = header("P5", width, height, 255);
  out.append(reinterpret_cast<const char*>(values.data()), values.size());
  return out;
}

Image decode_ppm(std::string_view bytes, const std::string& source) {
  const PnmHeader h = parse_header(bytes, "P6", source);
  if (h.maxval != 255) throw Error(ErrorCode::kCorruptFile, source + ": PPM maxval must be 255");
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() - h.data_offset != need)
    throw Error(ErrorCode::kCorruptFile, source + ": pixel data size mismatch");
  Image img(h.width, h.height);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), bytes.end(), img.data.begin());
  return img;
}

MaskImage decode_pgm(std::string_view bytes, const std::string& source) {
  const PnmHeader h = parse_header(bytes, "P5", source);
  if (h.maxval != 4) throw Error(ErrorCode::kCorruptFile, source + ": mask maxval must be 4");
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset != need)
    throw Error(ErrorCode::kCorruptFile, source + ": pixel data size mismatch");
  MaskImage mask(h.width, h.height);
  for (std::size_t i = 0; i < need; ++i) {
    const auto v = static_cast<uint8_t>(bytes[h.data_offset + i]);
    if (v > 4) throw Error(ErrorCode::kCorruptFile, source + ": class id out of range");
    mask.data[i] = v;
  }
  return mask;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, path);
    throw Error(ErrorCode::kIoFailure, "cannot read " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path);
}

void write_ppm(const std::string& path, const Image& img) { write_file(path, encode_ppm(img)); }
void write_pgm(const std::string& path, const MaskImage& mask) { write_file(path, encode_pgm(mask)); }
Image read_ppm(const std::string& path) { return decode_ppm(read_file(path), path); }
MaskImage read_pgm(const std::string& path) { return decode_pgm(read_file(path), path); }

}  // namespace blocktower::render
