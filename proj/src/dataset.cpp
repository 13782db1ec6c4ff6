// SPDX-License-Identifier: Apache-2.0
#include "seqpress/dataset.hpp"

#include <algorithm>

#include "seqpress/error.hpp"
#include "seqpress/waveform_io.hpp"

namespace seqpress {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

json load_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifest;
  if (!fs::exists(dir)) fail(ErrorCode::Io, dir.string() + ": no such dataset directory");
  if (!fs::exists(path)) fail(ErrorCode::Io, path.string() + ": dataset manifest not found");
  try {
    json j = json::parse(read_file(path));
    require(j.value("format", "") == "seqpress-dataset", ErrorCode::InvalidFormat,
            path.string() + ": not a dataset manifest");
    return j;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string record_stem(const Recording& rec) {
  std::string stem = rec.features.subject_id.empty() ? "record" : rec.features.subject_id;
  if (!rec.features.session_label.empty()) stem += "_" + rec.features.session_label;
  return stem;
}

void write_dataset(const fs::path& dir, const std::vector<Recording>& recordings, const json& metadata) {
  fs::create_directories(dir);
  json records = json::array();
  std::vector<std::string> stems;
  for (const auto& rec : recordings) {
    require(rec.features.values.rows() == rec.bp.rows(), ErrorCode::LengthMismatch,
            "features and BP of " + record_stem(rec) + " have different lengths");
    std::string stem = record_stem(rec);
    if (std::find(stems.begin(), stems.end(), stem) != stems.end())
      stem += "_" + std::to_string(stems.size());
    stems.push_back(stem);
    const std::string features = stem + ".features.csv";
    const std::string bp = stem + ".bp.csv";
    write_feature_csv(dir / features, rec.features);
    std::vector<double> times = rec.features.times;
    if (times.size() != static_cast<std::size_t>(rec.bp.rows())) {
      times.resize(static_cast<std::size_t>(rec.bp.rows()));
      for (std::size_t i = 0; i < times.size(); ++i) times[i] = static_cast<double>(i);
    }
    write_bp_csv(dir / bp, times, rec.bp);
    records.push_back({{"subject_id", rec.features.subject_id},
                       {"session_label", rec.features.session_label},
                       {"features", features},
                       {"bp", bp},
                       {"length", rec.bp.rows()}});
  }
  json manifest = {{"format", "seqpress-dataset"}, {"version", 1}, {"records", records}, {"metadata", metadata}};
  write_file_atomic(dir / kManifest, manifest.dump(2) + "\n");
}

std::vector<Recording> read_dataset(const fs::path& dir) {
  const json manifest = load_manifest(dir);
  std::vector<Recording> out;
  try {
    for (const auto& entry : manifest.at("records")) {
      Recording rec;
      rec.features = read_feature_csv(dir / entry.at("features").get<std::string>());
      rec.bp = read_bp_csv(dir / entry.at("bp").get<std::string>());
      rec.features.subject_id = entry.value("subject_id", rec.features.subject_id);
      rec.features.session_label = entry.value("session_label", rec.features.session_label);
      require(rec.features.values.rows() == rec.bp.rows(), ErrorCode::LengthMismatch,
              (dir / entry.at("bp").get<std::string>()).string() + ": length differs from its feature file");
      out.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, (dir / kManifest).string() + ": " + e.what());
  }
  return out;
}

json read_dataset_metadata(const fs::path& dir) { return load_manifest(dir).value("metadata", json::object()); }

std::vector<std::string> session_labels(const std::vector<Recording>& recordings) {
  std::vector<std::string> labels;
  for (const auto& r : recordings)
    if (std::find(labels.begin(), labels.end(), r.features.session_label) == labels.end())
      labels.push_back(r.features.session_label);
  return labels;
}

std::vector<Recording> select_sessions(const std::vector<Recording>& recordings,
                                       const std::vector<std::string>& sessions) {
  std::vector<Recording> out;
  for (const auto& r : recordings)
    if (std::find(sessions.begin(), sessions.end(), r.features.session_label) != sessions.end()) out.push_back(r);
  return out;
}

}  // namespace seqpress
