// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpress/training.hpp"

namespace seqpress {

/// Dataset directory layout:
///   manifest.json                      record list plus free-form metadata
///   <subject>_<session>.features.csv   t,ptt_s,hr,ri,st,up_time,sv,dv (+ .json sidecar)
///   <subject>_<session>.bp.csv         t,sbp,dbp,mbp
std::string record_stem(const Recording& rec);

void write_dataset(const std::filesystem::path& dir, const std::vector<Recording>& recordings,
                   const nlohmann::json& metadata = nlohmann::json::object());
std::vector<Recording> read_dataset(const std::filesystem::path& dir);
nlohmann::json read_dataset_metadata(const std::filesystem::path& dir);

/// Session labels in order of first appearance.
std::vector<std::string> session_labels(const std::vector<Recording>& recordings);
std::vector<Recording> select_sessions(const std::vector<Recording>& recordings,
                                       const std::vector<std::string>& sessions);

}  // namespace seqpress
