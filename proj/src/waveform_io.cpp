// SPDX-License-Identifier: Apache-2.0
#include "seqpress/waveform_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "seqpress/error.hpp"
#include "text_format.hpp"

namespace seqpress {

namespace fs = std::filesystem;
using json = nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_numeric_csv(const fs::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  CsvTable table;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::InvalidFormat,
          path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto h : detail::split(line, ',')) table.header.emplace_back(h);
  std::vector<double> cells;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto parts = detail::split(line, ',');
    require(parts.size() == table.header.size(), ErrorCode::InvalidFormat,
            path.string() + ": row " + std::to_string(rows + 1) + " has " +
                std::to_string(parts.size()) + " columns, expected " +
                std::to_string(table.header.size()));
    for (auto p : parts) cells.push_back(detail::parse_number(p));
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  table.values.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      table.values(static_cast<Eigen::Index>(r), c) = cells[r * table.header.size() + c];
  return table;
}

void write_numeric_csv(const fs::path& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values) {
  require(static_cast<Eigen::Index>(header.size()) == values.cols(), ErrorCode::ShapeMismatch,
          "CSV header/column count mismatch");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      detail::append_number(out, values(r, c));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_waveform_csv(const fs::path& path, const WaveformRecord& record) {
  record.validate();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(record.ecg.size()), 3);
  for (std::size_t i = 0; i < record.ecg.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = static_cast<double>(i) / record.sample_rate;
    m(r, 1) = record.ecg[i];
    m(r, 2) = record.ppg[i];
  }
  write_numeric_csv(path, {"t", "ecg", "ppg"}, m);
}

WaveformRecord read_waveform_csv(const fs::path& path) {
  auto table = read_numeric_csv(path);
  require(table.header == std::vector<std::string>{"t", "ecg", "ppg"}, ErrorCode::InvalidFormat,
          path.string() + ": expected header t,ecg,ppg");
  const auto n = table.values.rows();
  require(n >= 2, ErrorCode::InvalidFormat, path.string() + ": fewer than 2 samples");
  WaveformRecord rec;
  double span = table.values(n - 1, 0) - table.values(0, 0);
  require(span > 0.0, ErrorCode::InvalidFormat, path.string() + ": time column not increasing");
  rec.sample_rate = static_cast<double>(n - 1) / span;
  // Snap to the nearest integer rate when the time column was rounded.
  double rounded = std::round(rec.sample_rate);
  if (std::abs(rec.sample_rate - rounded) < 1e-6 * rounded) rec.sample_rate = rounded;
  rec.ecg.resize(static_cast<std::size_t>(n));
  rec.ppg.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    rec.ecg[static_cast<std::size_t>(i)] = table.values(i, 1);
    rec.ppg[static_cast<std::size_t>(i)] = table.values(i, 2);
  }
  rec.subject_id = path.stem().string();
  return rec;
}

void write_waveform_binary(const fs::path& path, const WaveformRecord& record) {
  record.validate();
  detail::ByteWriter w;
  w.raw(kWaveformMagic, 4);
  w.put<std::uint16_t>(kWaveformVersion);
  w.put<double>(record.sample_rate);
  w.put<std::uint64_t>(record.ecg.size());
  for (std::size_t i = 0; i < record.ecg.size(); ++i) {
    w.put<double>(record.ecg[i]);
    w.put<double>(record.ppg[i]);
  }
  write_file_atomic(path, w.bytes());
}

WaveformRecord read_waveform_binary(const fs::path& path) {
  const std::string bytes = read_file(path);
  detail::ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  require(std::equal(magic, magic + 4, kWaveformMagic), ErrorCode::InvalidFormat,
          path.string() + ": bad magic");
  auto version = r.get<std::uint16_t>();
  require(version == kWaveformVersion, ErrorCode::InvalidFormat,
          path.string() + ": unsupported version " + std::to_string(version));
  WaveformRecord rec;
  rec.sample_rate = r.get<double>();
  auto n = r.get<std::uint64_t>();
  require(r.remaining() == n * 16, ErrorCode::InvalidFormat, path.string() + ": length field disagrees with payload");
  rec.ecg.resize(n);
  rec.ppg.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    rec.ecg[i] = r.get<double>();
    rec.ppg[i] = r.get<double>();
  }
  rec.subject_id = path.stem().string();
  rec.validate();
  return rec;
}

WaveformRecord read_waveform(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::equal(magic, magic + 4, kWaveformMagic)) return read_waveform_binary(path);
  return read_waveform_csv(path);
}

fs::path sidecar_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  p += ".json";
  return p;
}

namespace {

json stats_to_json(const std::optional<FeatureStats>& stats) {
  if (!stats) return nullptr;
  json j;
  j["mean"] = std::vector<double>(stats->mean.data(), stats->mean.data() + stats->mean.size());
  j["std"] = std::vector<double>(stats->std.data(), stats->std.data() + stats->std.size());
  return j;
}

std::optional<FeatureStats> stats_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  auto mean = j.at("mean").get<std::vector<double>>();
  auto sd = j.at("std").get<std::vector<double>>();
  FeatureStats s;
  s.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

}  // namespace

void write_feature_csv(const fs::path& path, const FeatureSequence& seq) {
  require(seq.values.cols() == static_cast<Eigen::Index>(kNumFeatures), ErrorCode::ShapeMismatch,
          "feature matrix must have 7 columns");
  Eigen::MatrixXd m(seq.values.rows(), kNumFeatures + 1);
  for (Eigen::Index r = 0; r < seq.values.rows(); ++r)
    m(r, 0) = static_cast<std::size_t>(r) < seq.times.size() ? seq.times[static_cast<std::size_t>(r)]
                                                             : static_cast<double>(r);
  m.rightCols(kNumFeatures) = seq.values;
  std::vector<std::string> header{"t"};
  for (auto name : kFeatureNames) header.emplace_back(name);
  write_numeric_csv(path, header, m);

  json meta;
  meta["subject_id"] = seq.subject_id;
  meta["session_label"] = seq.session_label;
  meta["features"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  meta["normalization"] = stats_to_json(seq.normalization);
  write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
}

FeatureSequence read_feature_csv(const fs::path& path) {
  auto table = read_numeric_csv(path);
  std::vector<std::string> expected{"t"};
  for (auto name : kFeatureNames) expected.emplace_back(name);
  require(table.header == expected, ErrorCode::InvalidFormat,
          path.string() + ": expected header t,ptt_s,hr,ri,st,up_time,sv,dv");
  FeatureSequence seq;
  seq.values = table.values.rightCols(kNumFeatures);
  seq.times.assign(table.values.col(0).data(), table.values.col(0).data() + table.values.rows());
  auto side = sidecar_path(path);
  if (fs::exists(side)) {
    json meta = json::parse(read_file(side));
    seq.subject_id = meta.value("subject_id", "");
    seq.session_label = meta.value("session_label", "");
    if (meta.contains("normalization")) seq.normalization = stats_from_json(meta["normalization"]);
  }
  return seq;
}

void write_bp_csv(const fs::path& path, const std::vector<double>& times, const Eigen::MatrixXd& bp) {
  require(bp.cols() == 3, ErrorCode::ShapeMismatch, "BP matrix must have 3 columns");
  require(static_cast<Eigen::Index>(times.size()) == bp.rows(), ErrorCode::LengthMismatch,
          "BP times/rows mismatch");
  Eigen::MatrixXd m(bp.rows(), 4);
  for (Eigen::Index r = 0; r < bp.rows(); ++r) m(r, 0) = times[static_cast<std::size_t>(r)];
  m.rightCols(3) = bp;
  write_numeric_csv(path, {"t", "sbp", "dbp", "mbp"}, m);
}

Eigen::MatrixXd read_bp_csv(const fs::path& path, std::vector<double>* times) {
  auto table = read_numeric_csv(path);
  require(table.header == std::vector<std::string>{"t", "sbp", "dbp", "mbp"}, ErrorCode::InvalidFormat,
          path.string() + ": expected header t,sbp,dbp,mbp");
  if (times) times->assign(table.values.col(0).data(), table.values.col(0).data() + table.values.rows());
  return table.values.rightCols(3);
}

}  // namespace seqpress
