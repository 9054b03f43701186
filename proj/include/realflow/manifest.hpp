#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "realflow/core.hpp"

namespace realflow {

inline constexpr int kManifestFormatVersion = 1;

// A corpus pair that produced no sample, and why.
struct FailureRecord {
  std::int64_t pair_index = 0;
  std::string source_video_id;
  std::int64_t source_frame_index = 0;
  std::string reason;

  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::int64_t em_iteration = 0;
  std::string created_at;
  std::string source_description;
  std::vector<SampleRecord> samples;
  std::array<double, 2> alpha_range{0.0, 2.0};
  SplatMode splat_mode = SplatMode::Softmax;
  HoleFillMode hole_fill_mode = HoleFillMode::Bhf;
  std::vector<FailureRecord> failures;

  // Keys carried over from a newer format version; written back unchanged.
  nlohmann::json extras = nlohmann::json::object();

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Throws SchemaViolation on duplicate sample paths or an alpha outside alpha_range.
void validate(const DatasetManifest& manifest);

// Checks that every referenced file exists and that the three rasters of each
// sample agree in size. Relative paths resolve against base_dir.
void validate_files(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Canonical form: sorted keys, two-space indent, trailing newline.
std::string dump_canonical(const nlohmann::json& j);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

nlohmann::json to_json(const SampleRecord& record);
SampleRecord sample_from_json(const nlohmann::json& j);

// ISO-8601 UTC. Honors SOURCE_DATE_EPOCH for reproducible output.
std::string utc_timestamp_now();

}  // namespace realflow
