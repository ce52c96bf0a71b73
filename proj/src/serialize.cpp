#include "hmjnd/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hmjnd {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is, const std::string& what) {
  const std::uint32_t u = get_u32(is, what);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void expect_magic(std::istream& is, const char* magic, const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error(what + ": bad magic, expected " + magic);
}

}  // namespace

void write_hmt1(std::ostream& os, const Shape& shape, std::span<const double> values) {
  os.write("HMT1", 4);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : values) put_f32(os, static_cast<float>(v));
}

Hmt1 read_hmt1(std::istream& is, const std::string& what) {
  expect_magic(is, "HMT1", what);
  const std::uint32_t rank = get_u32(is, what);
  if (rank > 8) throw std::runtime_error(what + ": implausible tensor rank");
  Hmt1 t;
  std::int64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get_u32(is, what);
    t.shape.push_back(static_cast<int>(d));
    n *= d;
  }
  t.values.resize(n);
  for (std::int64_t i = 0; i < n; ++i) t.values[i] = get_f32(is, what);
  return t;
}

void write_hmt1_file(const std::string& path, const Shape& shape,
                     std::span<const double> values) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_hmt1(f, shape, values);
  if (!f) throw std::runtime_error("write failed: " + path);
}

Hmt1 read_hmt1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open tensor file: " + path);
  return read_hmt1(f, path);
}

void write_jnd_map(const JndMap& map, const std::string& path) {
  write_hmt1_file(path, {map.height, map.width}, map.thresholds);
}

JndMap read_jnd_map(const std::string& path) {
  const Hmt1 t = read_hmt1_file(path);
  if (t.shape.size() != 2)
    throw std::runtime_error("JND map must be rank 2 (H, W): " + path);
  JndMap m;
  m.height = t.shape[0];
  m.width = t.shape[1];
  m.thresholds = t.values;
  for (double& v : m.thresholds)
    if (v < 0.0) v = 0.0;  // thresholds are magnitudes
  return m;
}

namespace {

std::string config_text(const NetConfig& c) {
  std::ostringstream os;
  os << "channels=" << c.channels << "\nwindow=" << c.window << "\nheads=" << c.heads
     << "\nsta_blocks=" << c.sta_blocks << "\nse_reduction=" << c.se_reduction
     << "\nlayer_norm_eps=" << c.layer_norm_eps << "\nuse_hmpf=" << (c.use_hmpf ? 1 : 0)
     << "\nuse_hmfa=" << (c.use_hmfa ? 1 : 0) << "\n";
  return os.str();
}

NetConfig parse_config_text(const std::string& text) {
  NetConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "channels") c.channels = std::stoi(val);
    else if (key == "window") c.window = std::stoi(val);
    else if (key == "heads") c.heads = std::stoi(val);
    else if (key == "sta_blocks") c.sta_blocks = std::stoi(val);
    else if (key == "se_reduction") c.se_reduction = std::stoi(val);
    else if (key == "layer_norm_eps") c.layer_norm_eps = std::stod(val);
    else if (key == "use_hmpf") c.use_hmpf = std::stoi(val) != 0;
    else if (key == "use_hmfa") c.use_hmfa = std::stoi(val) != 0;
    else throw std::runtime_error("checkpoint config: unknown key '" + key + "'");
  }
  return c;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const NetConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write("HMPS", 4);
  put_u32(f, 1);  // format version
  const std::string cfgtext = config_text(cfg);
  put_u32(f, static_cast<std::uint32_t>(cfgtext.size()));
  f.write(cfgtext.data(), static_cast<std::streamsize>(cfgtext.size()));
  const auto paths = params.paths();
  put_u32(f, static_cast<std::uint32_t>(paths.size()));
  for (const auto& p : paths) {
    put_u32(f, static_cast<std::uint32_t>(p.size()));
    f.write(p.data(), static_cast<std::streamsize>(p.size()));
    const Tensor& t = params.get(p);
    write_hmt1(f, t.shape(), t.values());
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

NetConfig load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  expect_magic(f, "HMPS", path);
  const std::uint32_t version = get_u32(f, path);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version: " + path);
  const std::uint32_t cfglen = get_u32(f, path);
  std::string cfgtext(cfglen, '\0');
  f.read(cfgtext.data(), cfglen);
  if (!f) throw std::runtime_error("truncated checkpoint config: " + path);
  const NetConfig cfg = parse_config_text(cfgtext);
  const std::uint32_t count = get_u32(f, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(f, path);
    std::string name(len, '\0');
    f.read(name.data(), len);
    if (!f) throw std::runtime_error("truncated checkpoint entry name: " + path);
    Hmt1 t = read_hmt1(f, path + " [" + name + "]");
    params.add(name, Tensor::from_values(t.shape, std::move(t.values), true));
  }
  return cfg;
}

std::string sniff_magic(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  char buf[4];
  f.read(buf, 4);
  if (!f) return "";
  if (std::memcmp(buf, "HMT1", 4) == 0) return "HMT1";
  if (std::memcmp(buf, "HMPS", 4) == 0) return "HMPS";
  return "";
}

}  // namespace hmjnd
