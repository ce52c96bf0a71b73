#include "hmjnd/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace hmjnd {

ImagePlane ImagePlane::make(int w, int h, int c, double fill) {
  ImagePlane p;
  p.width = w;
  p.height = h;
  p.channels = c;
  p.data.assign(static_cast<std::size_t>(w) * h * c, fill);
  return p;
}

JndMap JndMap::make(int w, int h, double fill) {
  JndMap m;
  m.width = w;
  m.height = h;
  m.thresholds.assign(static_cast<std::size_t>(w) * h, fill);
  return m;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset, const std::string& what) {
  throw std::runtime_error("parse error in " + path + " at byte " + std::to_string(offset) +
                           ": " + what);
}

struct ByteReader {
  const std::string& path;
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  int peek() const { return pos < bytes.size() ? bytes[pos] : -1; }
  int get() { return pos < bytes.size() ? bytes[pos++] : -1; }

  // PNM token: skips whitespace and '#' comments.
  std::string token() {
    for (;;) {
      int c = peek();
      if (c == -1) parse_fail(path, pos, "unexpected end of header");
      if (c == '#') {
        while (peek() != -1 && peek() != '\n') get();
      } else if (std::isspace(c)) {
        get();
      } else {
        break;
      }
    }
    std::string t;
    while (peek() != -1 && !std::isspace(peek())) t.push_back(static_cast<char>(get()));
    return t;
  }

  int number() {
    const std::size_t at = pos;
    const std::string t = token();
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c)))
        parse_fail(path, at, "expected integer, got '" + t + "'");
    if (t.empty() || t.size() > 9) parse_fail(path, at, "bad integer '" + t + "'");
    return std::stoi(t);
  }
};

}  // namespace

ImagePlane load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  ByteReader r{path, bytes};

  const std::string magic = r.token();
  int channels = 0;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    parse_fail(path, 0, "unsupported magic '" + magic + "' (want P5 or P6)");

  const int w = r.number();
  const int h = r.number();
  const int maxval = r.number();
  if (w <= 0 || h <= 0) parse_fail(path, r.pos, "non-positive dimensions");
  if (maxval != 255) parse_fail(path, r.pos, "only 8-bit maxval 255 supported");
  // exactly one whitespace byte separates header from payload
  if (r.get() == -1 || !std::isspace(bytes[r.pos - 1]))
    parse_fail(path, r.pos, "missing separator after maxval");

  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - r.pos < need)
    parse_fail(path, bytes.size(),
               "truncated payload: need " + std::to_string(need) + " bytes, have " +
                   std::to_string(bytes.size() - r.pos));

  ImagePlane p = ImagePlane::make(w, h, channels);
  for (std::size_t i = 0; i < need; ++i) p.data[i] = bytes[r.pos + i] / 255.0;
  return p;
}

void save_image(const ImagePlane& plane, const std::string& path) {
  if (plane.channels != 1 && plane.channels != 3)
    throw std::invalid_argument("save_image: plane must have 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << (plane.channels == 1 ? "P5" : "P6") << "\n"
    << plane.width << " " << plane.height << "\n255\n";
  std::vector<unsigned char> bytes(plane.data.size());
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    const double v = std::clamp(plane.data[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ImagePlane luma_of(const ImagePlane& plane) {
  if (plane.channels == 1) return plane;
  ImagePlane out = ImagePlane::make(plane.width, plane.height, 1);
  for (int y = 0; y < plane.height; ++y)
    for (int x = 0; x < plane.width; ++x)
      out.at(x, y) =
          0.299 * plane.at(x, y, 0) + 0.587 * plane.at(x, y, 1) + 0.114 * plane.at(x, y, 2);
  return out;
}

Tensor plane_to_tensor(const ImagePlane& plane) {
  const int c = plane.channels, h = plane.height, w = plane.width;
  std::vector<double> v(static_cast<std::size_t>(c) * h * w);
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        v[(static_cast<std::size_t>(ci) * h + y) * w + x] = plane.at(x, y, ci);
  return Tensor::from_values({1, c, h, w}, std::move(v));
}

ImagePlane tensor_to_plane(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1)
    throw std::invalid_argument("tensor_to_plane: expected (1, C, H, W)");
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (c != 1 && c != 3) throw std::invalid_argument("tensor_to_plane: C must be 1 or 3");
  ImagePlane p = ImagePlane::make(w, h, c);
  const auto v = t.values();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        p.at(x, y, ci) =
            std::clamp(v[(static_cast<std::size_t>(ci) * h + y) * w + x], 0.0, 1.0);
  return p;
}

}  // namespace hmjnd
