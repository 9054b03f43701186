#include "realflow/core.hpp"

#include <algorithm>
#include <cmath>

namespace realflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimensionOverflow: return "DimensionOverflow";
    case ErrorCode::UnsupportedColorPFM: return "UnsupportedColorPFM";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::CorpusEmpty: return "CorpusEmpty";
    case ErrorCode::EstimatorFailed: return "EstimatorFailed";
    case ErrorCode::TrainerFailed: return "TrainerFailed";
    case ErrorCode::QualityReject: return "QualityReject";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

namespace {

void check_shape(int width, int height, std::size_t per_pixel, std::size_t size,
                 const char* type) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, std::string(type) + " must have positive dimensions");
  }
  const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * per_pixel;
  if (size != expected) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(type) + " data length " + std::to_string(size) + " != " +
                    std::to_string(expected));
  }
}

void check_finite(std::span<const float> data, const char* type) {
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFinite, std::string(type) + " contains a non-finite sample");
    }
  }
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::InvalidArgument, "ImageBuffer channels must be 1 or 3");
  }
  check_shape(width, height, static_cast<std::size_t>(channels), data_.size(), "ImageBuffer");
  check_finite(data_, "ImageBuffer");
}

ImageBuffer ImageBuffer::filled(int width, int height, int channels, float value) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * std::max(channels, 0);
  return ImageBuffer(width, height, channels, std::vector<float>(n, value));
}

FlowField::FlowField(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_shape(width, height, 2, data_.size(), "FlowField");
  check_finite(data_, "FlowField");
}

FlowField FlowField::zeros(int width, int height) { return uniform(width, height, 0.0f, 0.0f); }

FlowField FlowField::uniform(int width, int height, float u, float v) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0);
  std::vector<float> data(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    data[2 * i] = u;
    data[2 * i + 1] = v;
  }
  return FlowField(width, height, std::move(data));
}

FlowField FlowField::scaled(double factor) const {
  std::vector<float> out(data_.size());
  std::transform(data_.begin(), data_.end(), out.begin(), [factor](float x) {
    return static_cast<float>(static_cast<double>(x) * factor);
  });
  return FlowField(width_, height_, std::move(out));
}

DepthMap::DepthMap(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_shape(width, height, 1, data_.size(), "DepthMap");
  check_finite(data_, "DepthMap");
}

DepthMap DepthMap::filled(int width, int height, float value) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0);
  return DepthMap(width, height, std::vector<float>(n, value));
}

CoverageMask::CoverageMask(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_shape(width, height, 1, data_.size(), "CoverageMask");
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::InvalidArgument, "CoverageMask values must lie in [0,1]");
    }
  }
}

CoverageMask CoverageMask::filled(int width, int height, float value) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0);
  return CoverageMask(width, height, std::vector<float>(n, value));
}

DisturbanceFactor::DisturbanceFactor(double alpha) : value(alpha) {
  if (!std::isfinite(alpha)) {
    throw Error(ErrorCode::NonFinite, "disturbance factor must be finite");
  }
}

std::string to_string(SplatMode mode) {
  switch (mode) {
    case SplatMode::Sum: return "sum";
    case SplatMode::Softmax: return "softmax";
    case SplatMode::Max: return "max";
  }
  return "softmax";
}

std::string to_string(HoleFillMode mode) { return mode == HoleFillMode::Bhf ? "bhf" : "none"; }

SplatMode parse_splat_mode(const std::string& text) {
  if (text == "sum") return SplatMode::Sum;
  if (text == "softmax") return SplatMode::Softmax;
  if (text == "max") return SplatMode::Max;
  throw Error(ErrorCode::InvalidArgument, "unknown splat mode '" + text + "'");
}

HoleFillMode parse_hole_fill_mode(const std::string& text) {
  if (text == "none") return HoleFillMode::None;
  if (text == "bhf") return HoleFillMode::Bhf;
  throw Error(ErrorCode::InvalidArgument, "unknown hole fill mode '" + text + "'");
}

double bilinear_kernel(Vec2 offset) noexcept {
  return std::max(0.0, 1.0 - std::abs(offset.x)) * std::max(0.0, 1.0 - std::abs(offset.y));
}

std::vector<float> sample_bilinear(const ImageBuffer& img, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = cx - x0;
  const double fy = cy - y0;

  std::vector<float> out(static_cast<std::size_t>(img.channels()));
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[static_cast<std::size_t>(c)] = static_cast<float>((1.0 - fy) * top + fy * bottom);
  }
  return out;
}

}  // namespace realflow
