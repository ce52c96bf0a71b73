#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hmjnd/image.hpp"
#include "hmjnd/model.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd {

// HMT1 tensor container: magic "HMT1", u32 rank, u32 dims[rank], then
// little-endian f32 payload in row-major order. Checkpoints ("HMPS") hold a
// config text section and a manifest of parameter paths, each followed by an
// embedded HMT1 record.

struct Hmt1 {
  Shape shape;
  std::vector<double> values;
};

void write_hmt1(std::ostream& os, const Shape& shape, std::span<const double> values);
Hmt1 read_hmt1(std::istream& is, const std::string& what);

void write_hmt1_file(const std::string& path, const Shape& shape,
                     std::span<const double> values);
Hmt1 read_hmt1_file(const std::string& path);

void write_jnd_map(const JndMap& map, const std::string& path);   // shape (H, W)
JndMap read_jnd_map(const std::string& path);

void save_checkpoint(const ParamStore& params, const NetConfig& cfg, const std::string& path);
NetConfig load_checkpoint(ParamStore& params, const std::string& path);

/// Peeks the 4-byte magic; "HMT1" or "HMPS" or "" when neither.
std::string sniff_magic(const std::string& path);

}  // namespace hmjnd
