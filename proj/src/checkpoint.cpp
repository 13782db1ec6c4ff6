// SPDX-License-Identifier: Apache-2.0
#include "seqpress/checkpoint.hpp"

#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "seqpress/error.hpp"
#include "seqpress/waveform_io.hpp"
#include "text_format.hpp"

namespace seqpress {
namespace {

using json = nlohmann::json;
constexpr char kMagic[4] = {'S', 'Q', 'P', 'C'};

template <class T>
void read_key(const json& j, const char* key, T& dst) {
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  require(j.is_object(), ErrorCode::InvalidFormat, std::string(what) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) fail(ErrorCode::InvalidArgument, std::string("unknown ") + what + " key '" + item.key() + "'");
  }
}

// JSON has no NaN; an absent validation loss is stored as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json stats_json(const FeatureStats& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

FeatureStats stats_from(const json& j) {
  auto mean = j.at("mean").get<std::vector<double>>();
  auto std = j.at("std").get<std::vector<double>>();
  require(mean.size() == std.size(), ErrorCode::InvalidFormat, "normalization mean/std lengths differ");
  FeatureStats s;
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Eigen::VectorXd>(std.data(), static_cast<Eigen::Index>(std.size()));
  return s;
}

}  // namespace

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"clip_norm", c.clip_norm},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"test_fraction", c.test_fraction},
          {"stride", c.stride},
          {"max_steps", c.max_steps},
          {"finetune_lr_factor", c.finetune_lr_factor},
          {"finetune_fraction", c.finetune_fraction},
          {"channel_mask", c.channel_mask},
          {"threads", c.threads}};
}

json to_json(const NetworkConfig& c) {
  return {{"input_size", c.input_size},   {"hidden_size", c.hidden_size}, {"num_layers", c.num_layers},
          {"seq_len", c.seq_len},         {"bidirectional", c.bidirectional}, {"residual", c.residual},
          {"allow_deep", c.allow_deep}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j,
                 {"batch_size", "clip_norm", "lambda", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                  "max_epochs", "early_stop_patience", "seed", "train_fraction", "val_fraction", "test_fraction",
                  "stride", "max_steps", "finetune_lr_factor", "finetune_fraction", "channel_mask", "threads"},
                 "training config");
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) read_key(j, key, dst);
  };
  opt("batch_size", c.batch_size);
  opt("clip_norm", c.clip_norm);
  opt("lambda", c.lambda);
  opt("learning_rate", c.learning_rate);
  opt("adam_beta1", c.adam_beta1);
  opt("adam_beta2", c.adam_beta2);
  opt("adam_epsilon", c.adam_epsilon);
  opt("max_epochs", c.max_epochs);
  opt("early_stop_patience", c.early_stop_patience);
  opt("seed", c.seed);
  opt("train_fraction", c.train_fraction);
  opt("val_fraction", c.val_fraction);
  opt("test_fraction", c.test_fraction);
  opt("stride", c.stride);
  opt("max_steps", c.max_steps);
  opt("finetune_lr_factor", c.finetune_lr_factor);
  opt("finetune_fraction", c.finetune_fraction);
  opt("channel_mask", c.channel_mask);
  opt("threads", c.threads);
  return c;
}

NetworkConfig network_config_from_json(const json& j, NetworkConfig c) {
  reject_unknown(j, {"input_size", "hidden_size", "num_layers", "seq_len", "bidirectional", "residual", "allow_deep"},
                 "network config");
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) read_key(j, key, dst);
  };
  opt("input_size", c.input_size);
  opt("hidden_size", c.hidden_size);
  opt("num_layers", c.num_layers);
  opt("seq_len", c.seq_len);
  opt("bidirectional", c.bidirectional);
  opt("residual", c.residual);
  opt("allow_deep", c.allow_deep);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, path.string() + ": " + e.what());
  }
  require(j.is_object(), ErrorCode::InvalidFormat, path.string() + ": config must be a JSON object");
  if (j.contains("network")) {
    base.network = network_config_from_json(j["network"], base.network);
    j.erase("network");
  }
  base.train = train_config_from_json(j, base.train);
  return base;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.net.validate();
  json header;
  header["network"] = to_json(ckpt.net.config);
  header["train_config"] = to_json(ckpt.train_config);
  header["feature_stats"] = ckpt.feature_stats ? stats_json(*ckpt.feature_stats) : json(nullptr);
  header["target_maxima"] = ckpt.targets.maxima;
  header["steps"] = ckpt.steps;
  json hist = json::array();
  for (const auto& r : ckpt.history)
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", number_or_null(r.train_loss)},
                    {"val_loss", number_or_null(r.val_loss)},
                    {"grad_norm_mean", number_or_null(r.grad_norm_mean)}});
  header["history"] = hist;
  json tensors = json::array();
  for (const auto& t : ckpt.net.tensors()) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.raw(text.data(), text.size());
  w.put<std::uint64_t>(ckpt.net.parameter_count());
  for (const auto& t : ckpt.net.tensors())
    for (double v : t.data) w.put<double>(v);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::InvalidFormat, "not a checkpoint (bad magic)");
  const auto version = r.get<std::uint16_t>();
  require(version == kCheckpointVersion, ErrorCode::InvalidFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const auto header_len = r.get<std::uint64_t>();
  require(header_len <= r.remaining(), ErrorCode::InvalidFormat, "truncated checkpoint header");
  std::string text(header_len, '\0');
  r.raw(text.data(), header_len);

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.net = NetworkParams::zeros(network_config_from_json(header.at("network")));
    ckpt.train_config = train_config_from_json(header.at("train_config"));
    if (!header.at("feature_stats").is_null()) ckpt.feature_stats = stats_from(header["feature_stats"]);
    ckpt.targets.maxima = header.at("target_maxima").get<std::array<double, 3>>();
    ckpt.steps = header.at("steps").get<std::size_t>();
    for (const auto& h : header.at("history"))
      ckpt.history.push_back({h.at("epoch").get<std::size_t>(), number_or_nan(h.at("train_loss")),
                              number_or_nan(h.at("val_loss")), number_or_nan(h.at("grad_norm_mean"))});
    const auto& layout = header.at("tensors");
    auto views = ckpt.net.tensors();
    require(layout.size() == views.size(), ErrorCode::InvalidFormat, "checkpoint tensor count mismatch");
    for (std::size_t k = 0; k < views.size(); ++k)
      require(layout[k].at("name").get<std::string>() == views[k].name &&
                  layout[k].at("rows").get<Eigen::Index>() == views[k].rows &&
                  layout[k].at("cols").get<Eigen::Index>() == views[k].cols,
              ErrorCode::InvalidFormat, "checkpoint tensor layout differs at " + views[k].name);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string("bad checkpoint header: ") + e.what());
  }

  const auto count = r.get<std::uint64_t>();
  require(count == ckpt.net.parameter_count(), ErrorCode::InvalidFormat, "checkpoint parameter count mismatch");
  require(r.remaining() == count * sizeof(double), ErrorCode::InvalidFormat, "checkpoint blob has the wrong size");
  for (auto& t : ckpt.net.tensors())
    for (double& v : t.data) v = r.get<double>();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidFormat) fail(ErrorCode::InvalidFormat, path.string() + ": " + e.what());
    throw;
  }
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,grad_norm_mean\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.val_loss, r.grad_norm_mean}) {
      out += ',';
      out += std::isfinite(v) ? detail::format_number(v) : std::string("nan");
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace seqpress
