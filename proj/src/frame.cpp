#include "glf/frame.hpp"

#include <cstdio>
#include <fstream>

#include "glf/tensor.hpp"

namespace glf {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset,
                             const std::string& what) {
  throw IoError(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

// Reads one whitespace-delimited decimal token, skipping '#' comment lines.
long read_token(const std::string& path, const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    const char c = data[pos];
    if (c == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= data.size() || !std::isdigit(static_cast<unsigned char>(data[pos])))
    parse_fail(path, pos, "expected decimal header field");
  long value = 0;
  while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) {
    value = value * 10 + (data[pos] - '0');
    if (value > 1'000'000'000L) parse_fail(path, pos, "header value out of range");
    ++pos;
  }
  return value;
}

}  // namespace

Frame load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
    parse_fail(path, 0, "not a binary PGM (expected magic \"P5\")");
  std::size_t pos = 2;
  const long width = read_token(path, data, pos);
  const long height = read_token(path, data, pos);
  const long maxval = read_token(path, data, pos);
  if (width <= 0 || height <= 0) parse_fail(path, pos, "non-positive dimensions");
  if (maxval != 255)
    parse_fail(path, pos, "unsupported maxval " + std::to_string(maxval) +
                              " (only 255 is accepted)");
  if (pos >= data.size() || !(data[pos] == ' ' || data[pos] == '\t' ||
                              data[pos] == '\r' || data[pos] == '\n'))
    parse_fail(path, pos, "expected single whitespace after maxval");
  ++pos;

  const std::size_t need = std::size_t(width) * std::size_t(height);
  if (data.size() - pos < need)
    parse_fail(path, data.size(),
               "truncated payload: need " + std::to_string(need) + " bytes, have " +
                   std::to_string(data.size() - pos));

  Frame f(static_cast<int>(width), static_cast<int>(height));
  std::copy_n(reinterpret_cast<const std::uint8_t*>(data.data()) + pos, need,
              f.pixels.begin());
  return f;
}

void save_pgm(const Frame& frame, const std::string& path) {
  if (frame.width <= 0 || frame.height <= 0)
    throw IoError(path + ": refusing to write empty frame");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << frame.width << " " << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size()));
  if (!out) throw IoError(path + ": write failed");
}

Frame load_yuv420_luma(const std::string& path, int width, int height, int index) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0)
    throw IoError(path + ": 4:2:0 dimensions must be positive and even");
  if (index < 0) throw IoError(path + ": negative frame index");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t luma = std::uint64_t(width) * height;
  const std::uint64_t stride = luma * 3 / 2;
  const std::uint64_t offset = stride * std::uint64_t(index);
  if (file_size < offset + stride)
    throw IoError(path + ": frame " + std::to_string(index) + " out of range (file has " +
                  std::to_string(file_size / stride) + " frames)");
  in.seekg(static_cast<std::streamoff>(offset));
  Frame f(width, height);
  in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(luma));
  if (!in) throw IoError(path + ": short read");
  return f;
}

}  // namespace glf
