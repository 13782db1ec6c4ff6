// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "seqpress/signal.hpp"

namespace seqpress {

/// Two-channel binary layout, all little-endian:
///   "SQPW" | u16 version (=1) | f64 sample_rate | u64 length | length x (f64 ecg, f64 ppg)
inline constexpr char kWaveformMagic[4] = {'S', 'Q', 'P', 'W'};
inline constexpr std::uint16_t kWaveformVersion = 1;

void write_waveform_csv(const std::filesystem::path& path, const WaveformRecord& record);
WaveformRecord read_waveform_csv(const std::filesystem::path& path);
void write_waveform_binary(const std::filesystem::path& path, const WaveformRecord& record);
WaveformRecord read_waveform_binary(const std::filesystem::path& path);
/// Dispatches on the leading magic bytes.
WaveformRecord read_waveform(const std::filesystem::path& path);

/// `t,ptt_s,hr,ri,st,up_time,sv,dv` plus `<path>.json` holding labels and
/// normalization stats (null when the values are raw).
void write_feature_csv(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_feature_csv(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

/// `t,sbp,dbp,mbp` in mmHg.
void write_bp_csv(const std::filesystem::path& path, const std::vector<double>& times,
                  const Eigen::MatrixXd& bp);
Eigen::MatrixXd read_bp_csv(const std::filesystem::path& path, std::vector<double>* times = nullptr);

/// Generic numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};
CsvTable read_numeric_csv(const std::filesystem::path& path);
void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values);

/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace seqpress
