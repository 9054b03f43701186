#include "realflow/io.hpp"

#include <png.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace realflow::io {

namespace {

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t load_u32_le(const char* p) {
  const auto* b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t load_u32_be(const char* p) {
  const auto* b = reinterpret_cast<const unsigned char*>(p);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void store_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void write_bytes_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
}

void check_dims(std::int64_t width, std::int64_t height, int cap, const fs::path& path) {
  if (width <= 0 || height <= 0 || width > cap || height > cap) {
    throw Error(ErrorCode::DimensionOverflow, path.string() + ": dimensions " +
                                                  std::to_string(width) + "x" +
                                                  std::to_string(height) + " outside [1, " +
                                                  std::to_string(cap) + "]");
  }
}

}  // namespace

FlowField read_flo(const fs::path& path, int dimension_cap) {
  const auto bytes = read_all(path);
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, path.string() + ": missing magic");
  const float magic = std::bit_cast<float>(load_u32_le(bytes.data()));
  if (magic != kFloMagic) throw Error(ErrorCode::BadMagic, path.string());
  if (bytes.size() < 12) throw Error(ErrorCode::TruncatedFile, path.string() + ": missing header");

  const auto width = static_cast<std::int32_t>(load_u32_le(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(load_u32_le(bytes.data() + 8));
  check_dims(width, height, dimension_cap, path);

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 2;
  if (bytes.size() - 12 < count * 4) {
    throw Error(ErrorCode::TruncatedFile, path.string() + ": payload holds " +
                                              std::to_string((bytes.size() - 12) / 4) +
                                              " floats, header needs " + std::to_string(count));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(load_u32_le(bytes.data() + 12 + 4 * i));
  }
  return FlowField(width, height, std::move(data));
}

void write_flo(const FlowField& flow, const fs::path& path) {
  std::string out;
  out.reserve(12 + flow.data().size() * 4);
  store_u32_le(out, std::bit_cast<std::uint32_t>(kFloMagic));
  store_u32_le(out, static_cast<std::uint32_t>(flow.width()));
  store_u32_le(out, static_cast<std::uint32_t>(flow.height()));
  for (float v : flow.data()) store_u32_le(out, std::bit_cast<std::uint32_t>(v));
  write_bytes_atomic(path, out);
}

namespace {

// Reads one whitespace-delimited PFM header token starting at pos.
std::string pfm_token(const std::vector<char>& bytes, std::size_t& pos, const fs::path& path) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos || pos >= bytes.size()) {
    throw Error(ErrorCode::BadHeader, path.string() + ": incomplete PFM header");
  }
  return std::string(bytes.data() + start, pos - start);
}

}  // namespace

DepthMap read_pfm(const fs::path& path, int dimension_cap) {
  const auto bytes = read_all(path);
  std::size_t pos = 0;
  const std::string kind = pfm_token(bytes, pos, path);
  if (kind == "PF") throw Error(ErrorCode::UnsupportedColorPFM, path.string());
  if (kind != "Pf") throw Error(ErrorCode::BadHeader, path.string() + ": unknown tag '" + kind + "'");

  std::int64_t width = 0;
  std::int64_t height = 0;
  double scale = 0.0;
  try {
    std::size_t used = 0;
    const std::string w = pfm_token(bytes, pos, path);
    width = std::stoll(w, &used);
    if (used != w.size()) throw std::invalid_argument(w);
    const std::string h = pfm_token(bytes, pos, path);
    height = std::stoll(h, &used);
    if (used != h.size()) throw std::invalid_argument(h);
    const std::string s = pfm_token(bytes, pos, path);
    scale = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::BadHeader, path.string() + ": malformed PFM header field");
  }
  if (scale == 0.0 || !std::isfinite(scale)) {
    throw Error(ErrorCode::BadHeader, path.string() + ": scale must be nonzero");
  }
  check_dims(width, height, dimension_cap, path);
  ++pos;  // the single whitespace byte ending the header

  const bool little = scale < 0.0;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < pos || bytes.size() - pos < count * 4) {
    throw Error(ErrorCode::TruncatedFile, path.string() + ": PFM payload too short");
  }
  std::vector<float> data(count);
  const auto w = static_cast<std::size_t>(width);
  const auto h = static_cast<std::size_t>(height);
  for (std::size_t file_row = 0; file_row < h; ++file_row) {
    const std::size_t row = h - 1 - file_row;
    for (std::size_t x = 0; x < w; ++x) {
      const char* p = bytes.data() + pos + 4 * (file_row * w + x);
      data[row * w + x] = std::bit_cast<float>(little ? load_u32_le(p) : load_u32_be(p));
    }
  }
  return DepthMap(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

void write_pfm(const DepthMap& depth, const fs::path& path) {
  std::string out = "Pf\n" + std::to_string(depth.width()) + " " + std::to_string(depth.height()) +
                    "\n-1.0\n";
  const auto w = static_cast<std::size_t>(depth.width());
  for (int row = depth.height() - 1; row >= 0; --row) {
    for (std::size_t x = 0; x < w; ++x) {
      store_u32_le(out, std::bit_cast<std::uint32_t>(depth.data()[static_cast<std::size_t>(row) * w + x]));
    }
  }
  write_bytes_atomic(path, out);
}

std::uint16_t quantize(float value, BitDepth depth) {
  const double max_level = depth == BitDepth::Sixteen ? 65535.0 : 255.0;
  const double level = std::floor(static_cast<double>(value) * max_level + 0.5);
  return static_cast<std::uint16_t>(std::clamp(level, 0.0, max_level));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

[[noreturn]] void png_throw(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::DecodeError, msg ? msg : "libpng error");
}

void png_warn(png_structp, png_const_charp) {}

DecodedPng decode_png(const fs::path& path, int dimension_cap, bool header_only) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  unsigned char signature[8] = {};
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
  if (!png) throw Error(ErrorCode::DecodeError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) throw Error(ErrorCode::DecodeError, "png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  DecodedPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  check_dims(png_get_image_width(png, info), png_get_image_height(png, info), dimension_cap, path);

  const int color = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (bits == 16) png_set_swap(png);  // host order
  png_read_update_info(png, info);

  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if ((out.channels != 1 && out.channels != 3) || (out.bit_depth != 8 && out.bit_depth != 16)) {
    throw Error(ErrorCode::UnsupportedFormat,
                path.string() + ": unsupported PNG layout (" + std::to_string(out.channels) +
                    " channels, " + std::to_string(out.bit_depth) + " bit)");
  }
  if (header_only) return out;

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(row_bytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = raw.data() + row_bytes * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 8) {
    for (int y = 0; y < out.height; ++y) {
      const std::size_t base = static_cast<std::size_t>(y) * out.width * out.channels;
      for (std::size_t i = 0; i < static_cast<std::size_t>(out.width) * out.channels; ++i) {
        out.samples[base + i] = rows[y][i];
      }
    }
  } else {
    for (int y = 0; y < out.height; ++y) {
      const std::size_t base = static_cast<std::size_t>(y) * out.width * out.channels;
      std::memcpy(out.samples.data() + base, rows[y], static_cast<std::size_t>(out.width) * out.channels * 2);
    }
  }
  return out;
}

void encode_png(const fs::path& path, int width, int height, int channels, BitDepth depth,
                const std::vector<std::uint16_t>& samples) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    FilePtr file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
      png_structp* png;
      png_infop* info;
      ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};
    if (!info) throw Error(ErrorCode::IoError, "png_create_info_struct failed");

    png_init_io(png, file.get());
    const int bits = static_cast<int>(depth);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bits,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
    std::vector<unsigned char> row(row_samples * (bits / 8));
    for (int y = 0; y < height; ++y) {
      const std::uint16_t* src = samples.data() + static_cast<std::size_t>(y) * row_samples;
      for (std::size_t i = 0; i < row_samples; ++i) {
        if (bits == 8) {
          row[i] = static_cast<unsigned char>(src[i]);
        } else {
          row[2 * i] = static_cast<unsigned char>(src[i] >> 8);  // PNG is big-endian
          row[2 * i + 1] = static_cast<unsigned char>(src[i] & 0xFF);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
}

}  // namespace

ImageBuffer read_image(const fs::path& path, int dimension_cap) {
  DecodedPng png = decode_png(path, dimension_cap, false);
  const float scale = png.bit_depth == 16 ? 65535.0f : 255.0f;
  std::vector<float> data(png.samples.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(png.samples[i]) / scale;
  return ImageBuffer(png.width, png.height, png.channels, std::move(data));
}

void write_image(const ImageBuffer& img, const fs::path& path, BitDepth depth) {
  std::vector<std::uint16_t> samples(img.data().size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = quantize(img.data()[i], depth);
  encode_png(path, img.width(), img.height(), img.channels(), depth, samples);
}

void write_mask(const CoverageMask& mask, const fs::path& path) {
  std::vector<std::uint16_t> samples(mask.data().size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = quantize(mask.data()[i], BitDepth::Sixteen);
  encode_png(path, mask.width(), mask.height(), 1, BitDepth::Sixteen, samples);
}

CoverageMask read_mask(const fs::path& path) {
  const ImageBuffer img = read_image(path);
  if (img.channels() != 1) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": mask must be grayscale");
  return CoverageMask(img.width(), img.height(), std::vector<float>(img.data().begin(), img.data().end()));
}

ImageInfo probe_image(const fs::path& path) {
  const DecodedPng png = decode_png(path, kDefaultDimensionCap, true);
  return {png.width, png.height, png.channels};
}

ImageInfo probe_flo(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  char header[12];
  if (!in.read(header, 12)) throw Error(ErrorCode::TruncatedFile, path.string());
  if (std::bit_cast<float>(load_u32_le(header)) != kFloMagic) throw Error(ErrorCode::BadMagic, path.string());
  return {static_cast<std::int32_t>(load_u32_le(header + 4)),
          static_cast<std::int32_t>(load_u32_le(header + 8)), 2};
}

void write_text_atomic(const fs::path& path, const std::string& contents) {
  write_bytes_atomic(path, contents);
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_all(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace realflow::io
