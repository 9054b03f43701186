#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace realflow {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  BadMagic,
  BadHeader,
  TruncatedFile,
  DimensionOverflow,
  UnsupportedColorPFM,
  UnsupportedFormat,
  DecodeError,
  IoError,
  SchemaViolation,
  VersionUnsupported,
  NoValidPixels,
  CorpusEmpty,
  EstimatorFailed,
  TrainerFailed,
  QualityReject,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Pixel centers sit on integer coordinates, origin top-left, row-major.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, std::vector<float> data);

  static ImageBuffer filled(int width, int height, int channels, float value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Displacement in pixels: u to the right, v downward.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height, std::vector<float> data);

  static FlowField zeros(int width, int height);
  static FlowField uniform(int width, int height, float u, float v);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  float u(int x, int y) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 2]; }
  float v(int x, int y) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 2 + 1]; }
  std::span<const float> data() const noexcept { return data_; }

  // Componentwise multiply, computed in double and rounded once to float.
  FlowField scaled(double factor) const;

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Inverse depth: larger means closer to the camera.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, std::vector<float> data);

  static DepthMap filled(int width, int height, float value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Range-map coverage in [0,1]; exact zeros are holes.
class CoverageMask {
 public:
  CoverageMask() = default;
  CoverageMask(int width, int height, std::vector<float> data);

  static CoverageMask filled(int width, int height, float value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const CoverageMask&, const CoverageMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

struct DisturbanceFactor {
  double value = 1.0;

  explicit DisturbanceFactor(double alpha);
  DisturbanceFactor() = default;
  friend bool operator==(const DisturbanceFactor&, const DisturbanceFactor&) = default;
};

struct SampleRecord {
  std::string image1_path;
  std::string image2_path;
  std::string flow_path;
  double alpha = 1.0;
  std::string source_video_id;
  std::int64_t source_frame_index = 0;
  std::int64_t em_iteration = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

enum class SplatMode { Sum, Softmax, Max };
enum class HoleFillMode { None, Bhf };

std::string to_string(SplatMode mode);
std::string to_string(HoleFillMode mode);
SplatMode parse_splat_mode(const std::string& text);
HoleFillMode parse_hole_fill_mode(const std::string& text);

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

// b(u) = max(0, 1-|u_x|) * max(0, 1-|u_y|)
double bilinear_kernel(Vec2 offset) noexcept;

// Clamps to the border outside [0, W-1] x [0, H-1]. Returns one value per channel.
std::vector<float> sample_bilinear(const ImageBuffer& img, double x, double y);

}  // namespace realflow
