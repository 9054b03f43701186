#include "realflow/manifest.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <set>

#include "realflow/io.hpp"

namespace realflow {

using nlohmann::json;

namespace {

const std::set<std::string> kManifestKeys = {
    "alpha_range", "created_at", "em_iteration", "failures", "format_version",
    "hole_fill_mode", "samples", "source_description", "splat_mode"};

const std::set<std::string> kSampleKeys = {"alpha", "em_iteration", "flow_path", "image1_path",
                                           "image2_path", "source_frame_index", "source_video_id"};

const std::set<std::string> kFailureKeys = {"pair_index", "reason", "source_frame_index",
                                            "source_video_id"};

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::SchemaViolation, what); }

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) schema(std::string("missing key '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) schema(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t get_int(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer()) schema(std::string("'") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double get_number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) schema(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

// Returns unknown keys; rejects them outright when strict.
json check_keys(const json& j, const std::set<std::string>& known, bool strict, const char* where) {
  if (!j.is_object()) schema(std::string(where) + " must be an object");
  json unknown = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.count(it.key())) continue;
    if (strict) schema(std::string("unknown key '") + it.key() + "' in " + where);
    unknown[it.key()] = it.value();
  }
  return unknown;
}

}  // namespace

json to_json(const SampleRecord& r) {
  return json{{"image1_path", r.image1_path},
              {"image2_path", r.image2_path},
              {"flow_path", r.flow_path},
              {"alpha", r.alpha},
              {"source_video_id", r.source_video_id},
              {"source_frame_index", r.source_frame_index},
              {"em_iteration", r.em_iteration}};
}

SampleRecord sample_from_json(const json& j) {
  check_keys(j, kSampleKeys, true, "sample");
  SampleRecord r;
  r.image1_path = get_string(j, "image1_path");
  r.image2_path = get_string(j, "image2_path");
  r.flow_path = get_string(j, "flow_path");
  r.alpha = get_number(j, "alpha");
  r.source_video_id = get_string(j, "source_video_id");
  r.source_frame_index = get_int(j, "source_frame_index");
  r.em_iteration = get_int(j, "em_iteration");
  if (r.em_iteration < 0) schema("em_iteration must be >= 0");
  return r;
}

void validate(const DatasetManifest& m) {
  const auto [low, high] = m.alpha_range;
  if (!std::isfinite(low) || !std::isfinite(high) || low > high) {
    schema("alpha_range must be finite with low <= high");
  }
  if (m.em_iteration < 0) schema("em_iteration must be >= 0");
  std::set<std::string> paths;
  for (const auto& s : m.samples) {
    if (!(s.alpha >= low && s.alpha <= high)) {
      schema("sample alpha " + std::to_string(s.alpha) + " outside alpha_range");
    }
    for (const auto* p : {&s.image1_path, &s.image2_path, &s.flow_path}) {
      if (!paths.insert(*p).second) schema("duplicate sample path '" + *p + "'");
    }
  }
}

void validate_files(const DatasetManifest& m, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  for (const auto& s : m.samples) {
    for (const auto* p : {&s.image1_path, &s.image2_path, &s.flow_path}) {
      if (!std::filesystem::exists(resolve(*p))) schema("referenced file missing: " + *p);
    }
    const auto i1 = io::probe_image(resolve(s.image1_path));
    const auto i2 = io::probe_image(resolve(s.image2_path));
    const auto fl = io::probe_flo(resolve(s.flow_path));
    if (i1.width != i2.width || i1.height != i2.height || i1.width != fl.width ||
        i1.height != fl.height) {
      schema("raster dimensions disagree for sample " + s.flow_path);
    }
  }
}

json to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) samples.push_back(to_json(s));
  json failures = json::array();
  for (const auto& f : m.failures) {
    failures.push_back({{"pair_index", f.pair_index},
                        {"source_video_id", f.source_video_id},
                        {"source_frame_index", f.source_frame_index},
                        {"reason", f.reason}});
  }
  json j = m.extras.is_object() ? m.extras : json::object();
  j["format_version"] = m.format_version;
  j["em_iteration"] = m.em_iteration;
  j["created_at"] = m.created_at;
  j["source_description"] = m.source_description;
  j["samples"] = std::move(samples);
  j["alpha_range"] = {m.alpha_range[0], m.alpha_range[1]};
  j["splat_mode"] = to_string(m.splat_mode);
  j["hole_fill_mode"] = to_string(m.hole_fill_mode);
  j["failures"] = std::move(failures);
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  if (!j.is_object()) schema("manifest must be a JSON object");
  const json& version = field(j, "format_version");
  if (!version.is_number_integer() || version.get<std::int64_t>() < 1) {
    throw Error(ErrorCode::VersionUnsupported, "format_version " + version.dump());
  }
  DatasetManifest m;
  m.format_version = version.get<int>();
  const bool strict = m.format_version == kManifestFormatVersion;
  m.extras = check_keys(j, kManifestKeys, strict, "manifest");
  if (!m.extras.empty()) {
    std::cerr << "warning: manifest format_version " << m.format_version
              << " carries unknown keys; preserving them:";
    for (auto it = m.extras.begin(); it != m.extras.end(); ++it) std::cerr << ' ' << it.key();
    std::cerr << '\n';
  }

  m.em_iteration = get_int(j, "em_iteration");
  m.created_at = get_string(j, "created_at");
  m.source_description = get_string(j, "source_description");

  const json& range = field(j, "alpha_range");
  if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
    schema("alpha_range must be [low, high]");
  }
  m.alpha_range = {range[0].get<double>(), range[1].get<double>()};

  try {
    m.splat_mode = parse_splat_mode(get_string(j, "splat_mode"));
    m.hole_fill_mode = parse_hole_fill_mode(get_string(j, "hole_fill_mode"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaViolation) throw;
    schema(e.what());
  }

  const json& samples = field(j, "samples");
  if (!samples.is_array()) schema("'samples' must be an array");
  for (const auto& s : samples) m.samples.push_back(sample_from_json(s));

  if (auto it = j.find("failures"); it != j.end()) {
    if (!it->is_array()) schema("'failures' must be an array");
    for (const auto& f : *it) {
      check_keys(f, kFailureKeys, true, "failure record");
      m.failures.push_back({get_int(f, "pair_index"), get_string(f, "source_video_id"),
                            get_int(f, "source_frame_index"), get_string(f, "reason")});
    }
  }
  validate(m);
  return m;
}

std::string dump_canonical(const json& j) { return j.dump(2) + "\n"; }

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate(m);
  io::write_text_atomic(path, dump_canonical(to_json(m)));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    schema(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::string utc_timestamp_now() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace realflow
