#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "realflow/core.hpp"

namespace realflow::io {

namespace fs = std::filesystem;

// Readers refuse headers that would allocate beyond this many pixels per side.
inline constexpr int kDefaultDimensionCap = 16384;

inline constexpr float kFloMagic = 202021.25f;

// Middlebury .flo: float magic, int32 width, int32 height, then row-major
// interleaved float32 (u, v). Everything little-endian.
FlowField read_flo(const fs::path& path, int dimension_cap = kDefaultDimensionCap);
void write_flo(const FlowField& flow, const fs::path& path);

// Grayscale PFM ("Pf"). Rows are stored bottom-to-top; a negative scale means
// little-endian payload. Color PFM ("PF") is rejected.
DepthMap read_pfm(const fs::path& path, int dimension_cap = kDefaultDimensionCap);
void write_pfm(const DepthMap& depth, const fs::path& path);

enum class BitDepth { Eight = 8, Sixteen = 16 };

// PNG, gray or RGB, 8 or 16 bit. Alpha is discarded and palettes expanded on read.
ImageBuffer read_image(const fs::path& path, int dimension_cap = kDefaultDimensionCap);
void write_image(const ImageBuffer& img, const fs::path& path, BitDepth depth = BitDepth::Eight);

// Round-half-up quantization used by write_image.
std::uint16_t quantize(float value, BitDepth depth);

// Coverage masks are persisted as 16-bit grayscale, M * 65535.
void write_mask(const CoverageMask& mask, const fs::path& path);
CoverageMask read_mask(const fs::path& path);

struct ImageInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
};
ImageInfo probe_image(const fs::path& path);
ImageInfo probe_flo(const fs::path& path);

// Writes through a sibling temp file and renames into place.
void write_text_atomic(const fs::path& path, const std::string& contents);
std::string read_text(const fs::path& path);

}  // namespace realflow::io
