#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace adgn {

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // row-major, nonzero = foreground

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w);
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values);

  bool at(std::size_t r, std::size_t c) const { return bits[r * width + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits[r * width + c] = v ? 1 : 0; }
  std::size_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct InstanceMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> labels;  // row-major, 0 = background

  InstanceMask() = default;
  InstanceMask(std::size_t h, std::size_t w);
  InstanceMask(std::size_t h, std::size_t w, std::vector<std::uint32_t> values);

  std::uint32_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;
};

// An empty denominator scores 1.0 when s agrees with the degenerate g, else 0.0.
double dice(const BinaryMask& g, const BinaryMask& s);
double sensitivity(const BinaryMask& g, const BinaryMask& s);
double specificity(const BinaryMask& g, const BinaryMask& s);
double jaccard(const BinaryMask& g, const BinaryMask& s);

/// Symmetric 95th-percentile boundary distance in pixels: the larger of the
/// two directed nearest-rank percentiles. Boundary pixels are foreground
/// pixels with a background 4-neighbour; outside the image is background.
/// Throws DomainError if either mask is empty.
double hd95(const BinaryMask& g, const BinaryMask& s);

/// Aggregated Jaccard Index. Ground-truth objects are visited in ascending
/// id; each takes the unused segmented object of highest Jaccard (lowest id
/// on ties). A ground-truth object without any overlapping candidate adds
/// its area to the union. Unassigned segmented objects add their area to the
/// union at the end. Both masks empty scores 1.0.
double aji(const InstanceMask& g, const InstanceMask& s);

/// 4-connected labelling; ids start at 1 in raster discovery order.
InstanceMask connected_components(const BinaryMask& mask);

BinaryMask foreground(const InstanceMask& mask);

// Binary P5 PGM (maxval 255 or 65535). Nonzero pixels are foreground.
BinaryMask read_binary_pgm(const std::string& path);
void write_binary_pgm(const std::string& path, const BinaryMask& mask);
// Instance labels as P5 PGM; maxval 65535 stores 16-bit big-endian samples.
InstanceMask read_instance_pgm(const std::string& path);
void write_instance_pgm(const std::string& path, const InstanceMask& mask);

}  // namespace adgn
