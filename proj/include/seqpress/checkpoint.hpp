// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "seqpress/training.hpp"

namespace seqpress {

inline constexpr std::uint16_t kCheckpointVersion = 1;

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const NetworkConfig& config);
/// Applies the keys present in `j` on top of `base`. Unknown keys are
/// rejected with InvalidArgument so typos do not pass silently.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = {});

/// Config file: a JSON object with TrainConfig field names at the top level
/// and an optional "network" object with NetworkConfig field names.
struct RunConfig {
  TrainConfig train;
  NetworkConfig network;
};
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// "SQPC" | u16 version | u64 header length | JSON header | u64 parameter
/// count | f64 little-endian parameters in NetworkParams::tensors() order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// `epoch,train_loss,val_loss,grad_norm_mean`.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace seqpress
