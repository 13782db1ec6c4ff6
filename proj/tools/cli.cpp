// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqpress/baselines.hpp"
#include "seqpress/bptt.hpp"
#include "seqpress/checkpoint.hpp"
#include "seqpress/dataset.hpp"
#include "seqpress/error.hpp"
#include "seqpress/eval.hpp"
#include "seqpress/parallel.hpp"
#include "seqpress/rng.hpp"
#include "seqpress/signal.hpp"
#include "seqpress/synth.hpp"
#include "seqpress/training.hpp"
#include "seqpress/waveform_io.hpp"

namespace seqpress::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
};

/// Network and training overrides shared by the training subcommands.
struct ModelFlags {
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> seq_len;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> batch;
  std::optional<double> learning_rate;

  void attach(CLI::App* cmd) {
    cmd->add_option("--hidden", hidden, "LSTM hidden size");
    cmd->add_option("--layers", layers, "total LSTM layers including the bidirectional one");
    cmd->add_option("--seq-len", seq_len, "window length in beats");
    cmd->add_option("--epochs", epochs, "maximum epochs");
    cmd->add_option("--max-steps", max_steps, "cap on optimizer steps (0 = none)");
    cmd->add_option("--batch", batch, "minibatch size");
    cmd->add_option("--lr", learning_rate, "Adam learning rate");
  }
};

RunConfig resolve_config(const Globals& g, const ModelFlags& m, RunConfig base = {}) {
  RunConfig rc = g.config_path.empty() ? base : load_run_config(g.config_path, base);
  if (g.seed) rc.train.seed = *g.seed;
  if (m.hidden) rc.network.hidden_size = *m.hidden;
  if (m.layers) rc.network.num_layers = *m.layers;
  if (m.seq_len) rc.network.seq_len = *m.seq_len;
  if (m.epochs) rc.train.max_epochs = *m.epochs;
  if (m.max_steps) rc.train.max_steps = *m.max_steps;
  if (m.batch) rc.train.batch_size = *m.batch;
  if (m.learning_rate) rc.train.learning_rate = *m.learning_rate;
  if (rc.train.threads == 0) rc.train.threads = configured_threads();
  rc.network.validate();
  rc.train.validate();
  return rc;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json rmse_json(const std::array<double, 3>& r) {
  json j;
  for (std::size_t c = 0; c < 3; ++c) j[kChannelNames[c]] = std::isfinite(r[c]) ? json(r[c]) : json(nullptr);
  return j;
}

std::vector<Recording> load_sessions(const std::string& data_dir, const std::vector<std::string>& sessions) {
  auto recs = read_dataset(data_dir);
  return sessions.empty() ? recs : select_sessions(recs, sessions);
}

EpochCallback progress(std::ostream& err, bool verbose) {
  if (!verbose) return {};
  return [&err](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << "\n";
    return true;
  };
}

json synth_config_json(const SynthConfig& c) {
  json sessions = json::array();
  for (const auto& s : c.sessions) sessions.push_back({{"label", s.label}, {"drift", s.drift}});
  return {{"seed", c.seed},
          {"num_subjects", c.num_subjects},
          {"sessions", sessions},
          {"samples_per_session", c.samples_per_session},
          {"latent_dim", c.latent_dim},
          {"rho", c.rho},
          {"history_factor", c.history_factor},
          {"history_weight", c.history_weight},
          {"sigma_obs", c.sigma_obs},
          {"drift_magnitude", c.drift_magnitude},
          {"sbp_range", c.sbp_range},
          {"dbp_range", c.dbp_range},
          {"burn_in", c.burn_in}};
}

// ---------------------------------------------------------------- extract

int cmd_extract(const Globals& g, const std::vector<std::string>& inputs, std::ostream& out) {
  const fs::path dir = ensure_dir(g.out_dir);
  for (const auto& input : inputs) {
    WaveformRecord record = read_waveform(input);
    const std::string stem = fs::path(input).stem().string();
    if (record.subject_id.empty()) record.subject_id = stem;
    auto result = extract_features(record);
    write_feature_csv(dir / (stem + ".features.csv"), result.features);
    json log = json::array();
    for (const auto& q : result.quality_log)
      log.push_back({{"kind", to_string(q.kind)}, {"beat", q.beat_index}, {"detail", q.detail}});
    write_json(dir / (stem + ".quality.json"),
               {{"input", input}, {"beats", result.features.length()}, {"issues", log}});
    out << stem << ": " << result.features.length() << " beats, " << result.quality_log.size()
        << " quality issues\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  std::optional<std::size_t> subjects;
  std::optional<std::size_t> samples;
  std::optional<double> rho;
  std::optional<double> sigma_obs;
  std::optional<double> history_weight;
  std::optional<double> drift_magnitude;
  std::size_t oracle_samples = 20000;
  std::size_t waveform_beats = 0;
  double sample_rate = 1000.0;
};

int cmd_synth(const Globals& g, const SynthFlags& f, std::ostream& out) {
  SynthConfig cfg;
  if (g.seed) cfg.seed = *g.seed;
  if (f.subjects) cfg.num_subjects = *f.subjects;
  if (f.samples) cfg.samples_per_session = *f.samples;
  if (f.rho) cfg.rho = *f.rho;
  if (f.sigma_obs) cfg.sigma_obs = *f.sigma_obs;
  if (f.history_weight) cfg.history_weight = *f.history_weight;
  if (f.drift_magnitude) cfg.drift_magnitude = *f.drift_magnitude;
  cfg.validate();

  const fs::path dir = ensure_dir(g.out_dir);
  const auto cohort = generate_feature_cohort(cfg);
  write_dataset(dir, cohort_recordings(cohort), {{"generator", synth_config_json(cfg)}});

  const fs::path truth_dir = ensure_dir((dir / "ground_truth").string());
  json records = json::array();
  for (const auto& r : cohort.recordings) {
    const std::string stem = record_stem(r.recording);
    std::vector<std::string> header = {"t"};
    for (std::size_t k = 0; k < cfg.latent_dim; ++k) header.push_back("latent" + std::to_string(k));
    for (std::size_t k = 0; k < cfg.latent_dim; ++k) header.push_back("history" + std::to_string(k));
    Matrix m(r.latent.rows(), 1 + 2 * r.latent.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = r.recording.features.times[static_cast<std::size_t>(i)];
    m.middleCols(1, r.latent.cols()) = r.latent;
    m.rightCols(r.history.cols()) = r.history;
    write_numeric_csv(truth_dir / (stem + ".latent.csv"), header, m);
    records.push_back({{"record", stem}, {"latent", "ground_truth/" + stem + ".latent.csv"}});
  }
  json oracle = json::object();
  if (f.oracle_samples > 0) {
    for (const auto& s : cfg.sessions) {
      const auto rep = memoryless_oracle(cfg, f.oracle_samples, s.drift, s.drift);
      json j = rmse_json(rep.rmse);
      j["pooled"] = rep.pooled_rmse;
      j["samples"] = rep.eval_samples;
      oracle[s.label] = j;
    }
  }
  json truth = {{"generator", synth_config_json(cfg)}, {"memoryless_oracle_rmse", oracle}, {"records", records}};

  if (f.waveform_beats > 0) {
    WaveformConfig wave;
    wave.beats_per_record = f.waveform_beats;
    wave.sample_rate = f.sample_rate;
    const fs::path wdir = ensure_dir((dir / "waveforms").string());
    json wrecs = json::array();
    for (const auto& w : generate_waveform_cohort(cfg, wave)) {
      const std::string stem = w.record.subject_id + "_" + w.record.session_label;
      write_waveform_csv(wdir / (stem + ".waveform.csv"), w.record);
      Matrix beats(static_cast<Eigen::Index>(w.beats.size()), 1 + static_cast<Eigen::Index>(kNumFeatures));
      for (std::size_t i = 0; i < w.beats.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        beats(row, 0) = w.beats[i].fiducials.r_peak_t;
        const auto values = w.beats[i].features.as_array();
        for (std::size_t k = 0; k < kNumFeatures; ++k) beats(row, 1 + static_cast<Eigen::Index>(k)) = values[k];
      }
      std::vector<std::string> header = {"r_peak_t"};
      for (const char* name : kFeatureNames) header.emplace_back(name);
      write_numeric_csv(wdir / (stem + ".truth.csv"), header, beats);
      write_numeric_csv(wdir / (stem + ".bp.csv"), {"sbp", "dbp", "mbp"}, w.bp);
      wrecs.push_back(stem);
    }
    truth["waveforms"] = {{"sample_rate", wave.sample_rate}, {"beats_per_record", wave.beats_per_record},
                          {"records", wrecs}};
  }
  write_json(dir / "ground_truth.json", truth);
  out << "wrote " << cohort.recordings.size() << " recordings to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train / finetune

int cmd_train(const Globals& g, const ModelFlags& m, const std::string& data, const std::vector<std::string>& sessions,
              bool verbose, std::ostream& out, std::ostream& err) {
  const auto rc = resolve_config(g, m);
  const auto recs = load_sessions(data, sessions);
  const auto prepared = prepare_dataset(recs, rc.network.seq_len, rc.train);
  auto init = NetworkParams::initialize(rc.network, rc.train.seed);
  Checkpoint ckpt = train(rc.train, init, {prepared.split.train, prepared.split.val}, progress(err, verbose));
  ckpt.feature_stats = prepared.feature_stats;
  ckpt.targets = prepared.targets;

  const fs::path dir = ensure_dir(g.out_dir);
  save_checkpoint(dir / "checkpoint.sqpc", ckpt);
  write_history_csv(dir / "history.csv", ckpt.history);
  json metrics = {{"steps", ckpt.steps},
                  {"epochs", ckpt.history.size()},
                  {"windows", {{"train", prepared.split.train.size()},
                               {"val", prepared.split.val.size()},
                               {"test", prepared.split.test.size()}}}};
  if (!prepared.split.test.empty()) metrics["test_rmse"] = rmse_json(window_rmse(ckpt, prepared.split.test));
  write_json(dir / "metrics.json", metrics);
  out << "trained " << ckpt.steps << " steps; checkpoint " << (dir / "checkpoint.sqpc").string() << "\n";
  return kExitOk;
}

int cmd_finetune(const Globals& g, const ModelFlags& m, const std::string& ckpt_path, const std::string& data,
                 const std::vector<std::string>& sessions, std::ostream& out) {
  const Checkpoint base = load_checkpoint(ckpt_path);
  RunConfig rc = resolve_config(g, m, {base.train_config, base.net.config});
  require(rc.network == base.net.config, ErrorCode::InvalidArgument,
          "network shape flags cannot change when finetuning");
  const auto recs = load_sessions(data, sessions);
  Checkpoint tuned = finetune(base, recs, rc.train);
  const fs::path dir = ensure_dir(g.out_dir);
  save_checkpoint(dir / "finetuned.sqpc", tuned);
  write_history_csv(dir / "history.csv", tuned.history);
  out << "finetuned " << tuned.steps << " steps; checkpoint " << (dir / "finetuned.sqpc").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval / baseline

/// Baselines fit on `fit` recordings; the PTT models calibrate per subject.
std::vector<Predictor> make_baselines(const std::vector<std::string>& names, const std::vector<Recording>& fit,
                                      std::size_t calibration_beats) {
  std::vector<Predictor> out;
  for (const auto& name : names) {
    if (name == "ptt-chen")
      out.push_back(ptt_chen_predictor(fit, calibration_beats));
    else if (name == "ptt-poon")
      out.push_back(ptt_poon_predictor(fit, calibration_beats));
    else if (name == "linreg" || name == "blr")
      out.push_back(linreg_predictor("BLR", fit_linreg_on(fit)));
    else if (name == "kalman")
      out.push_back(kalman_predictor("Kalman", fit_kalman_on(fit)));
    else
      fail(ErrorCode::InvalidArgument, "unknown baseline '" + name + "'");
  }
  return out;
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report, const std::string& prefix) {
  write_json(dir / (prefix + "report.json"), to_json(report));
  write_session_csv(dir / (prefix + "sessions.csv"), report);
  for (std::size_t c = 0; c < 2; ++c)
    write_file_atomic(dir / (prefix + std::string(kChannelNames[c]) + ".svg"), render_session_chart_svg(report, c));
  for (std::size_t mi = 0; mi < report.models.size(); ++mi)
    for (std::size_t c = 0; c < 2; ++c)
      if (!report.agreement[mi][c].points.empty())
        write_bland_altman_csv(dir / ("bland_altman_" + report.models[mi] + "_" + kChannelNames[c] + ".csv"),
                               report.agreement[mi][c]);
}

int cmd_eval(const Globals& g, const std::vector<std::string>& checkpoints, const std::string& data,
             std::vector<std::string> sessions, const std::vector<std::string>& baselines,
             std::string calibration_session, std::size_t calibration_beats, std::ostream& out) {
  const auto all = read_dataset(data);
  if (sessions.empty()) sessions = session_labels(all);
  std::vector<Predictor> models;
  for (const auto& path : checkpoints) {
    Checkpoint ckpt = load_checkpoint(path);
    require(ckpt.feature_stats.has_value(), ErrorCode::InvalidFormat,
            path + ": checkpoint has no feature normalization statistics");
    models.push_back(checkpoint_predictor(fs::path(path).stem().string(), std::move(ckpt)));
  }
  if (!baselines.empty()) {
    if (calibration_session.empty()) calibration_session = sessions.front();
    const auto fit = select_sessions(all, {calibration_session});
    for (auto& p : make_baselines(baselines, fit, calibration_beats)) models.push_back(std::move(p));
  }
  require(!models.empty(), ErrorCode::InvalidArgument, "nothing to evaluate: pass --checkpoint or --baselines");
  const auto report = multiday_eval(models, all, sessions, read_dataset_metadata(data).dump());
  const fs::path dir = ensure_dir(g.out_dir);
  write_eval_outputs(dir, report, "");
  for (const auto& r : report.rows)
    out << r.model << " " << r.session << " sbp " << r.pooled[0] << " dbp " << r.pooled[1] << "\n";
  return kExitOk;
}

int cmd_baseline(const Globals& g, const std::string& model, const std::string& data, std::string fit_session,
                 std::vector<std::string> sessions, std::size_t calibration_beats, std::ostream& out) {
  const auto all = read_dataset(data);
  if (sessions.empty()) sessions = session_labels(all);
  if (fit_session.empty()) fit_session = sessions.front();
  const auto fit = select_sessions(all, {fit_session});
  const auto models = make_baselines({model}, fit, calibration_beats);
  const fs::path dir = ensure_dir(g.out_dir);
  const fs::path pred_dir = ensure_dir((dir / "predictions").string());
  for (const auto& rec : select_sessions(all, sessions)) {
    const Matrix pred = models.front().predict(rec);
    Matrix m(pred.rows(), 4);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = rec.features.times[static_cast<std::size_t>(i)];
    m.rightCols(3) = pred;
    write_numeric_csv(pred_dir / (record_stem(rec) + ".pred.csv"), {"t", "sbp", "dbp", "mbp"}, m);
  }
  const auto report = multiday_eval(models, all, sessions);
  json j = to_json(report);
  j["fit_session"] = fit_session;
  write_json(dir / "rmse.json", j);
  for (const auto& r : report.rows)
    out << r.model << " " << r.session << " sbp " << r.pooled[0] << " dbp " << r.pooled[1] << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckFlags {
  std::size_t hidden = 4;
  std::size_t layers = 3;
  std::size_t seq_len = 5;
  double epsilon = 1e-5;
  double lambda = 1e-4;
  std::size_t coords = 200;
};

int cmd_gradcheck(const Globals& g, const GradcheckFlags& f, std::ostream& out) {
  NetworkConfig nc;
  nc.hidden_size = f.hidden;
  nc.num_layers = f.layers;
  nc.seq_len = f.seq_len;
  nc.allow_deep = true;
  nc.validate();
  const std::uint64_t seed = g.seed.value_or(0);
  const auto net = NetworkParams::initialize(nc, seed);
  CounterRng rng(seed, stream_id({0x6C4, f.hidden, f.layers, f.seq_len}));
  Matrix x(static_cast<Eigen::Index>(f.seq_len), static_cast<Eigen::Index>(nc.input_size));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix y(static_cast<Eigen::Index>(f.seq_len), kNumOutputs);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(0.05, 0.95);
  const auto rep = finite_difference_check(net, x, y, f.lambda, f.epsilon, seed, f.coords);
  json j = {{"max_rel_err", rep.max_rel_err},
            {"coordinate", {{"tensor", rep.worst.coordinate.name}, {"index", rep.worst.coordinate.index}}},
            {"analytic", rep.worst.analytic},
            {"numeric", rep.worst.numeric},
            {"epsilon", rep.epsilon},
            {"seed", rep.seed},
            {"coordinates_checked", rep.coordinates_checked},
            {"flagged", rep.flagged.size()},
            {"threshold", kGradCheckFlagThreshold}};
  out << j.dump(2) << "\n";
  write_json(ensure_dir(g.out_dir) / "gradcheck.json", j);
  return rep.max_rel_err < kGradCheckFlagThreshold ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------- ablate / report

int cmd_ablate(const Globals& g, const ModelFlags& m, const std::string& study, const std::string& data,
               const std::vector<std::string>& sessions, std::ostream& out) {
  const auto rc = resolve_config(g, m);
  const auto recs = load_sessions(data, sessions);
  const fs::path dir = ensure_dir(g.out_dir);
  std::string table;
  json j;
  if (study == "residual") {
    const auto rep = ablation_residual(rc.network, rc.train, recs);
    table = format_table("Residual ablation", rep.rows, {0, 1});
    write_history_csv(dir / "history_residual.csv", rep.histories[0]);
    write_history_csv(dir / "history_plain.csv", rep.histories[1]);
    for (const auto& r : rep.rows) j[r.model] = rmse_json(r.rmse);
  } else if (study == "multitask") {
    const auto rep = multitask_vs_singletask_harness(rc.network, rc.train, recs);
    table = format_table("Multi-task vs single-task († = multi-task)", rep.rows, {0, 1, 2});
    for (const auto& r : rep.rows) j[r.model] = rmse_json(r.rmse);
  } else {
    fail(ErrorCode::InvalidArgument, "unknown study '" + study + "' (expected residual or multitask)");
  }
  write_file_atomic(dir / "ablation.md", table);
  write_json(dir / "ablation.json", j);
  out << table;
  return kExitOk;
}

int cmd_report(const Globals& g, const ModelFlags& m, const std::string& data, std::string static_session,
               std::vector<std::string> sessions, std::ostream& out) {
  const auto rc = resolve_config(g, m);
  const auto all = read_dataset(data);
  const auto labels = session_labels(all);
  if (static_session.empty()) static_session = labels.front();
  if (sessions.empty())
    for (const auto& l : labels)
      if (l != static_session) sessions.push_back(l);
  const fs::path dir = ensure_dir(g.out_dir);

  const auto table_rows = static_comparison(rc.network, rc.train, select_sessions(all, {static_session}));
  const std::string table =
      format_table("Static comparison (session " + static_session + ")", table_rows, {0, 1}, kStaticReferenceFooter);
  write_file_atomic(dir / "table_static.md", table);
  out << table;
  if (sessions.empty()) return kExitOk;

  // Multi-day: pretrain on the static session, finetune on the leading part of
  // the first later session, score every session on its trailing part.
  const auto day1 = select_sessions(all, {sessions.front()});
  const auto pf = pretrain_finetune(select_sessions(all, {static_session}), day1, rc.network, rc.train);
  std::vector<Recording> calibration, held_out;
  for (const auto& r : day1) calibration.push_back(split_recording_by_time(r, rc.train.finetune_fraction).first);
  for (const auto& r : select_sessions(all, sessions))
    held_out.push_back(split_recording_by_time(r, rc.train.finetune_fraction).second);
  auto models = make_baselines({"ptt-chen", "ptt-poon", "blr", "kalman"}, calibration, kDefaultCalibrationBeats);
  models.push_back(checkpoint_predictor("DeepRNN-" + std::to_string(rc.network.num_layers) + "L", pf.finetuned));
  const auto report = multiday_eval(models, held_out, sessions, "multi-day");
  write_eval_outputs(dir, report, "multiday_");
  return kExitOk;
}

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage:
      return kExitUsage;
    case ErrorCategory::Numerical:
      return kExitNumerical;
    case ErrorCategory::Data:
      break;
  }
  return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"seqpress: cuffless blood pressure estimation from ECG/PPG features", "seqpress"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();

  std::vector<std::string> inputs;
  auto* extract = app.add_subcommand("extract", "extract per-beat features from waveform files");
  extract->add_option("--input", inputs, "waveform CSV or binary files")->required();

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "generate a synthetic feature cohort");
  synth->add_option("--subjects", sf.subjects, "number of subjects");
  synth->add_option("--samples", sf.samples, "beats per session");
  synth->add_option("--rho", sf.rho, "latent AR(1) coefficient");
  synth->add_option("--sigma-obs", sf.sigma_obs, "feature noise standard deviation");
  synth->add_option("--history-weight", sf.history_weight, "share of BP driven by latent history");
  synth->add_option("--drift", sf.drift_magnitude, "session drift magnitude");
  synth->add_option("--oracle-samples", sf.oracle_samples, "beats for the memoryless oracle (0 skips it)")
      ->capture_default_str();
  synth->add_option("--waveform-beats", sf.waveform_beats, "also write ECG/PPG waveforms with this many beats")
      ->capture_default_str();
  synth->add_option("--sample-rate", sf.sample_rate, "waveform sample rate (Hz)")->capture_default_str();

  std::string data, checkpoint, study, model, fit_session, calibration_session, static_session;
  std::vector<std::string> sessions, checkpoints, baselines;
  std::size_t calibration_beats = kDefaultCalibrationBeats;
  bool verbose = false;

  ModelFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a DeepRNN on a dataset");
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--sessions", sessions, "sessions to train on (default all)")->delimiter(',');
  train_cmd->add_flag("--verbose", verbose, "log every epoch to stderr");
  train_flags.attach(train_cmd);

  ModelFlags ft_flags;
  auto* ft_cmd = app.add_subcommand("finetune", "finetune a checkpoint on new recordings");
  ft_cmd->add_option("--checkpoint", checkpoint, "base checkpoint")->required();
  ft_cmd->add_option("--data", data, "dataset directory")->required();
  ft_cmd->add_option("--sessions", sessions, "sessions to finetune on (default all)")->delimiter(',');
  ft_flags.attach(ft_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "per-session RMSE and Bland-Altman report");
  eval_cmd->add_option("--checkpoint", checkpoints, "checkpoint files");
  eval_cmd->add_option("--data", data, "dataset directory")->required();
  eval_cmd->add_option("--sessions", sessions, "sessions to score (default all)")->delimiter(',');
  eval_cmd->add_option("--baselines", baselines, "ptt-chen,ptt-poon,linreg,kalman")->delimiter(',');
  eval_cmd->add_option("--calibration-session", calibration_session, "session the baselines are fit on");
  eval_cmd->add_option("--calibration-beats", calibration_beats, "PTT calibration beats")->capture_default_str();

  auto* base_cmd = app.add_subcommand("baseline", "fit and score one baseline model");
  base_cmd->add_option("--model", model, "ptt-chen | ptt-poon | kalman | linreg")
      ->required()
      ->check(CLI::IsMember({"ptt-chen", "ptt-poon", "kalman", "linreg"}));
  base_cmd->add_option("--data", data, "dataset directory")->required();
  base_cmd->add_option("--fit-session", fit_session, "session used for fitting (default first)");
  base_cmd->add_option("--sessions", sessions, "sessions to score (default all)")->delimiter(',');
  base_cmd->add_option("--calibration-beats", calibration_beats, "PTT calibration beats")->capture_default_str();

  GradcheckFlags gf;
  auto* gc_cmd = app.add_subcommand("gradcheck", "compare BPTT gradients with finite differences");
  gc_cmd->add_option("--hidden", gf.hidden, "hidden size")->capture_default_str();
  gc_cmd->add_option("--layers", gf.layers, "total LSTM layers")->capture_default_str();
  gc_cmd->add_option("--seq-len", gf.seq_len, "sequence length")->capture_default_str();
  gc_cmd->add_option("--epsilon", gf.epsilon, "finite-difference step")->capture_default_str();
  gc_cmd->add_option("--lambda", gf.lambda, "L2 weight")->capture_default_str();
  gc_cmd->add_option("--coords", gf.coords, "minimum coordinates checked")->capture_default_str();

  ModelFlags ab_flags;
  auto* ab_cmd = app.add_subcommand("ablate", "residual or multi-task ablation");
  ab_cmd->add_option("--study", study, "residual | multitask")
      ->required()
      ->check(CLI::IsMember({"residual", "multitask"}));
  ab_cmd->add_option("--data", data, "dataset directory")->required();
  ab_cmd->add_option("--sessions", sessions, "sessions to use (default all)")->delimiter(',');
  ab_flags.attach(ab_cmd);

  ModelFlags rp_flags;
  auto* rp_cmd = app.add_subcommand("report", "static comparison table and multi-day charts");
  rp_cmd->add_option("--data", data, "dataset directory")->required();
  rp_cmd->add_option("--static-session", static_session, "session for the static comparison (default first)");
  rp_cmd->add_option("--sessions", sessions, "later sessions for the multi-day chart")->delimiter(',');
  rp_flags.attach(rp_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (extract->parsed()) return cmd_extract(g, inputs, out);
    if (synth->parsed()) return cmd_synth(g, sf, out);
    if (train_cmd->parsed()) return cmd_train(g, train_flags, data, sessions, verbose, out, err);
    if (ft_cmd->parsed()) return cmd_finetune(g, ft_flags, checkpoint, data, sessions, out);
    if (eval_cmd->parsed())
      return cmd_eval(g, checkpoints, data, sessions, baselines, calibration_session, calibration_beats, out);
    if (base_cmd->parsed()) return cmd_baseline(g, model, data, fit_session, sessions, calibration_beats, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(g, gf, out);
    if (ab_cmd->parsed()) return cmd_ablate(g, ab_flags, study, data, sessions, out);
    if (rp_cmd->parsed()) return cmd_report(g, rp_flags, data, static_session, sessions, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace seqpress::cli
