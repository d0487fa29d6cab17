#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cnp/tensor.hpp"

namespace cnp {

/// Binary PNM image: P5 (gray) or P6 (RGB), maxval 255 or 65535. 16-bit
/// samples are big-endian on disk per the PNM standard.
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 = P5, 3 = P6
  int maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major, channels interleaved

  std::size_t sample_count() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
};

/// Parses a P5/P6 file. Header comments (#) are allowed; errors carry the
/// byte offset of the problem.
PnmImage read_pnm(const std::string& path);

/// Canonical writer ("P5\n<w> <h>\n<maxval>\n" + payload). Writes are atomic
/// (temp file + rename); read_pnm(write_pnm(img)) is bit-identical.
void write_pnm(const PnmImage& img, const std::string& path);

/// [0,1]-normalized tensor (divide by maxval), shape 1xCxHxW.
Tensor pnm_to_tensor(const PnmImage& img);
PnmImage tensor_to_pnm(const Tensor& t, int maxval);

struct CropRecord {
  int height = 0;
  int width = 0;
};

/// Reflect-pads right/bottom to the next multiple; crop() restores the
/// original size, and pad-then-crop is the identity on the original region.
std::pair<Tensor, CropRecord> pad_reflect(const Tensor& t, int multiple);
Tensor crop(const Tensor& t, const CropRecord& rec);

}  // namespace cnp
