// SPDX-License-Identifier: Apache-2.0
#include "seqpress/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "seqpress/error.hpp"
#include "seqpress/waveform_io.hpp"
#include "text_format.hpp"

namespace seqpress {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<double> column(const Matrix& m, Eigen::Index c) { return {m.col(c).data(), m.col(c).data() + m.rows()}; }

Matrix stack_rows(const std::vector<Matrix>& parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

/// Leading distinct rows per subject, in recording order.
std::map<std::string, Recording> calibration_by_subject(const std::vector<Recording>& recordings,
                                                        std::size_t beats) {
  std::map<std::string, std::vector<const Recording*>> grouped;
  for (const auto& r : recordings) grouped[r.features.subject_id].push_back(&r);
  std::map<std::string, Recording> out;
  for (const auto& [subject, recs] : grouped) {
    std::vector<Matrix> x, y;
    Eigen::Index have = 0;
    for (const Recording* r : recs) {
      if (have >= static_cast<Eigen::Index>(beats)) break;
      const Eigen::Index take = std::min<Eigen::Index>(r->bp.rows(), static_cast<Eigen::Index>(beats) - have);
      x.push_back(r->features.values.topRows(take));
      y.push_back(r->bp.topRows(take));
      have += take;
    }
    Recording cal;
    cal.features.subject_id = subject;
    cal.features.values = stack_rows(x, kNumFeatures);
    cal.bp = stack_rows(y, kNumOutputs);
    out.emplace(subject, std::move(cal));
  }
  return out;
}

std::string fixed2(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    fail(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.size()) + " values, truth has " +
                                        std::to_string(truth.size()));
  require(!pred.empty(), ErrorCode::EmptyInput, "RMSE of an empty sequence");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::array<double, 3> rmse_per_channel(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != kNumOutputs || truth.cols() != kNumOutputs)
    fail(ErrorCode::LengthMismatch, "prediction and truth shapes differ");
  require(pred.rows() > 0, ErrorCode::EmptyInput, "RMSE of an empty sequence");
  std::array<double, 3> out{};
  for (Eigen::Index c = 0; c < kNumOutputs; ++c) {
    std::vector<double> p, t;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      if (std::isnan(pred(r, c))) continue;
      p.push_back(pred(r, c));
      t.push_back(truth(r, c));
    }
    out[static_cast<std::size_t>(c)] = p.empty() ? kNan : rmse(p, t);
  }
  return out;
}

BlandAltmanStats bland_altman(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    fail(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.size()) + " values, truth has " +
                                        std::to_string(truth.size()));
  require(pred.size() >= 2, ErrorCode::EmptyInput, "Bland-Altman analysis needs at least 2 pairs");
  const double n = static_cast<double>(pred.size());
  BlandAltmanStats s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s.points.push_back({0.5 * (pred[i] + truth[i]), pred[i] - truth[i]});
    s.mean_diff += pred[i] - truth[i];
  }
  s.mean_diff /= n;
  double var = 0.0;
  for (const auto& p : s.points) var += (p[1] - s.mean_diff) * (p[1] - s.mean_diff);
  s.sd_diff = std::sqrt(var / n);
  s.lower = s.mean_diff - 1.96 * s.sd_diff;
  s.upper = s.mean_diff + 1.96 * s.sd_diff;
  std::size_t within = 0;
  for (const auto& p : s.points)
    if (std::abs(p[1] - s.mean_diff) <= 1.96 * s.sd_diff) ++within;
  s.fraction_within = static_cast<double>(within) / n;
  return s;
}

Predictor checkpoint_predictor(std::string name, Checkpoint ckpt) {
  return {std::move(name), {true, true, true},
          [ckpt = std::move(ckpt)](const Recording& r) { return predict_recording(ckpt, r.features.values); }};
}

Predictor linreg_predictor(std::string name, LinearModel model) {
  return {std::move(name), {true, true, true},
          [model = std::move(model)](const Recording& r) { return linreg_predict(model, r.features.values); }};
}

Predictor kalman_predictor(std::string name, KalmanModel model) {
  return {std::move(name), {true, true, true},
          [model = std::move(model)](const Recording& r) { return kalman_predict(model, r.features.values); }};
}

Predictor ptt_chen_predictor(const std::vector<Recording>& calibration, std::size_t calibration_beats) {
  std::map<std::string, PttChenModel> models;
  for (const auto& [subject, cal] : calibration_by_subject(calibration, calibration_beats))
    models[subject] = ptt_chen_fit(column(cal.features.values, 0), column(cal.bp, 0));
  return {"PTT-Chen", {true, false, false}, [models](const Recording& r) {
            auto it = models.find(r.features.subject_id);
            if (it == models.end())
              fail(ErrorCode::InsufficientCalibration, "no calibration for subject '" + r.features.subject_id + "'");
            Matrix out = Matrix::Constant(r.features.values.rows(), kNumOutputs, kNan);
            out.col(0) = ptt_chen_predict(it->second, column(r.features.values, 0));
            return out;
          }};
}

Predictor ptt_poon_predictor(const std::vector<Recording>& calibration, std::size_t calibration_beats) {
  std::map<std::string, PttPoonModel> models;
  for (const auto& [subject, cal] : calibration_by_subject(calibration, calibration_beats))
    models[subject] = ptt_poon_fit(column(cal.features.values, 0), column(cal.bp, 0), column(cal.bp, 1));
  return {"PTT-Poon", {true, true, false}, [models](const Recording& r) {
            auto it = models.find(r.features.subject_id);
            if (it == models.end())
              fail(ErrorCode::InsufficientCalibration, "no calibration for subject '" + r.features.subject_id + "'");
            Matrix out = Matrix::Constant(r.features.values.rows(), kNumOutputs, kNan);
            out.leftCols(2) = ptt_poon_predict(it->second, column(r.features.values, 0));
            return out;
          }};
}

LinearModel fit_linreg_on(const std::vector<Recording>& recordings, double alpha) {
  std::vector<Matrix> x, y;
  for (const auto& r : recordings) {
    x.push_back(r.features.values);
    y.push_back(r.bp);
  }
  return linreg_fit(stack_rows(x, kNumFeatures), stack_rows(y, kNumOutputs), alpha);
}

KalmanModel fit_kalman_on(const std::vector<Recording>& recordings) {
  std::vector<Matrix> x, y;
  for (const auto& r : recordings) {
    x.push_back(r.features.values);
    y.push_back(r.bp);
  }
  return kalman_fit(x, y);
}

const SessionRow& EvalReport::row(const std::string& model, const std::string& session) const {
  for (const auto& r : rows)
    if (r.model == model && r.session == session) return r;
  fail(ErrorCode::MissingSession, "no row for model '" + model + "', session '" + session + "'");
}

EvalReport multiday_eval(const std::vector<Predictor>& models, const std::vector<Recording>& data,
                         const std::vector<std::string>& sessions, const std::string& dataset_id) {
  require(!sessions.empty(), ErrorCode::MissingSession, "no sessions to evaluate");
  for (const auto& s : sessions) {
    bool found = std::any_of(data.begin(), data.end(),
                             [&](const Recording& r) { return r.features.session_label == s; });
    if (!found) fail(ErrorCode::MissingSession, "session '" + s + "' has no recordings");
  }
  EvalReport report;
  report.dataset_id = dataset_id;
  report.sessions = sessions;
  for (const auto& model : models) {
    report.models.push_back(model.name);
    std::vector<Matrix> all_pred, all_truth;
    for (const auto& session : sessions) {
      std::map<std::string, std::pair<std::vector<Matrix>, std::vector<Matrix>>> by_subject;
      std::vector<Matrix> preds, truths;
      for (const auto& rec : data) {
        if (rec.features.session_label != session) continue;
        Matrix p = model.predict(rec);
        by_subject[rec.features.subject_id].first.push_back(p);
        by_subject[rec.features.subject_id].second.push_back(rec.bp);
        preds.push_back(std::move(p));
        truths.push_back(rec.bp);
      }
      SessionRow row;
      row.model = model.name;
      row.session = session;
      const Matrix pred = stack_rows(preds, kNumOutputs);
      const Matrix truth = stack_rows(truths, kNumOutputs);
      row.pooled = rmse_per_channel(pred, truth);
      row.samples = static_cast<std::size_t>(pred.rows());
      row.subjects = by_subject.size();
      row.macro = {0.0, 0.0, 0.0};
      for (const auto& [subject, pair] : by_subject) {
        auto r = rmse_per_channel(stack_rows(pair.first, kNumOutputs), stack_rows(pair.second, kNumOutputs));
        for (std::size_t c = 0; c < 3; ++c) row.macro[c] += r[c] / static_cast<double>(by_subject.size());
      }
      report.rows.push_back(row);
      all_pred.push_back(pred);
      all_truth.push_back(truth);
    }
    const Matrix pred = stack_rows(all_pred, kNumOutputs);
    const Matrix truth = stack_rows(all_truth, kNumOutputs);
    std::array<BlandAltmanStats, 2> agreement;
    for (Eigen::Index c = 0; c < 2; ++c) {
      if (!model.channels[static_cast<std::size_t>(c)] || pred.rows() < 2) continue;
      std::vector<double> p, t;
      for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        if (std::isnan(pred(r, c))) continue;
        p.push_back(pred(r, c));
        t.push_back(truth(r, c));
      }
      if (p.size() >= 2) agreement[static_cast<std::size_t>(c)] = bland_altman(p, t);
    }
    report.agreement.push_back(std::move(agreement));
  }
  return report;
}

std::array<double, 3> window_rmse(const Checkpoint& ckpt, const std::vector<TrainingSample>& samples) {
  require(!samples.empty(), ErrorCode::EmptyInput, "no windows to score");
  std::vector<Matrix> preds, truths;
  for (const auto& s : samples) {
    preds.push_back(denormalize_targets(deeprnn_forward(ckpt.net, s.x).z, ckpt.targets));
    truths.push_back(denormalize_targets(s.y, ckpt.targets));
  }
  return rmse_per_channel(stack_rows(preds, kNumOutputs), stack_rows(truths, kNumOutputs));
}

ScoredModel train_and_score(const NetworkConfig& net_config, const TrainConfig& config, const PreparedData& data) {
  auto init = NetworkParams::initialize(net_config, config.seed);
  ScoredModel out;
  out.checkpoint = train(config, init, {data.split.train, data.split.val});
  out.checkpoint.feature_stats = data.feature_stats;
  out.checkpoint.targets = data.targets;
  out.test_rmse = window_rmse(out.checkpoint, data.split.test);
  return out;
}

AblationReport ablation_residual(const NetworkConfig& net_config, const TrainConfig& config,
                                 const std::vector<Recording>& recordings) {
  const auto data = prepare_dataset(recordings, net_config.seq_len, config);
  AblationReport report;
  const std::string base = "DeepRNN-" + std::to_string(net_config.num_layers) + "L";
  for (bool residual : {true, false}) {
    NetworkConfig cfg = net_config;
    cfg.residual = residual;
    auto scored = train_and_score(cfg, config, data);
    report.rows.push_back({base + (residual ? " with residual" : " without residual"), scored.test_rmse});
    report.histories.push_back(scored.checkpoint.history);
  }
  return report;
}

MultitaskReport multitask_vs_singletask_harness(const NetworkConfig& net_config, const TrainConfig& config,
                                                const std::vector<Recording>& recordings,
                                                const std::vector<std::size_t>& depths) {
  for (const auto& r : recordings)
    require(r.bp.cols() == kNumOutputs, ErrorCode::ShapeMismatch, "every recording needs SBP, DBP and MBP");
  const auto data = prepare_dataset(recordings, net_config.seq_len, config);
  MultitaskReport report;
  for (std::size_t depth : depths) {
    NetworkConfig cfg = net_config;
    cfg.num_layers = depth;
    const std::string name = "DeepRNN-" + std::to_string(depth) + "L";
    TableRow single{name, {}};
    for (std::size_t c = 0; c < 3; ++c) {
      TrainConfig one = config;
      one.channel_mask = {0.0, 0.0, 0.0};
      one.channel_mask[c] = 1.0;
      single.rmse[c] = train_and_score(cfg, one, data).test_rmse[c];
    }
    TrainConfig joint = config;
    joint.channel_mask = {1.0, 1.0, 1.0};
    report.rows.push_back(single);
    report.rows.push_back({name + "†", train_and_score(cfg, joint, data).test_rmse});
  }
  return report;
}

std::vector<TableRow> static_comparison(const NetworkConfig& deep_config, const TrainConfig& config,
                                        const std::vector<Recording>& recordings) {
  const auto data = prepare_dataset(recordings, deep_config.seq_len, config);

  // Raw-unit windows as short recordings for the baselines.
  auto as_recordings = [&](const std::vector<TrainingSample>& samples) {
    std::vector<Recording> out;
    for (const auto& s : samples) {
      Recording r;
      r.features.values = invert_feature_stats(s.x, data.feature_stats);
      r.features.subject_id = s.subject_id;
      r.features.session_label = s.session_label;
      r.bp = denormalize_targets(s.y, data.targets);
      out.push_back(std::move(r));
    }
    return out;
  };
  auto train_recs = as_recordings(data.split.train);
  const auto test_recs = as_recordings(data.split.test);

  // Calibration rows: each subject's training windows in time order, overlap removed.
  std::vector<Recording> calibration;
  {
    std::map<std::string, std::vector<const TrainingSample*>> by_subject;
    for (const auto& s : data.split.train) by_subject[s.subject_id].push_back(&s);
    for (auto& [subject, list] : by_subject) {
      std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
      std::vector<Matrix> x, y;
      std::size_t next = 0;
      for (const auto* s : list) {
        const std::size_t begin = std::max(next, s->offset);
        const std::size_t end = s->offset + static_cast<std::size_t>(s->x.rows());
        if (begin >= end) continue;
        const auto skip = static_cast<Eigen::Index>(begin - s->offset);
        const auto take = static_cast<Eigen::Index>(end - begin);
        x.push_back(invert_feature_stats(s->x.middleRows(skip, take), data.feature_stats));
        y.push_back(denormalize_targets(s->y.middleRows(skip, take), data.targets));
        next = end;
      }
      Recording cal;
      cal.features.subject_id = subject;
      cal.features.values = stack_rows(x, kNumFeatures);
      cal.bp = stack_rows(y, kNumOutputs);
      calibration.push_back(std::move(cal));
    }
  }

  std::vector<Predictor> baselines = {ptt_chen_predictor(calibration), ptt_poon_predictor(calibration),
                                      linreg_predictor("BLR", fit_linreg_on(train_recs)),
                                      kalman_predictor("Kalman", fit_kalman_on(train_recs))};
  std::vector<TableRow> rows;
  for (const auto& model : baselines) {
    std::vector<Matrix> preds, truths;
    for (const auto& r : test_recs) {
      preds.push_back(model.predict(r));
      truths.push_back(r.bp);
    }
    rows.push_back({model.name, rmse_per_channel(stack_rows(preds, kNumOutputs), stack_rows(truths, kNumOutputs))});
  }

  struct Variant {
    std::string name;
    std::size_t layers;
    bool bidirectional;
  };
  const std::vector<Variant> variants = {
      {"LSTM", 1, false}, {"BiLSTM", 1, true}, {"DeepRNN-2L", 2, true}, {"DeepRNN-3L", 3, true},
      {"DeepRNN-4L", 4, true}};
  for (const auto& v : variants) {
    NetworkConfig cfg = deep_config;
    cfg.num_layers = v.layers;
    cfg.bidirectional = v.bidirectional;
    rows.push_back({v.name, train_and_score(cfg, config, data).test_rmse});
  }
  return rows;
}

std::string format_table(const std::string& title, const std::vector<TableRow>& rows,
                         const std::vector<std::size_t>& channels, const std::string& footer) {
  std::string out = "## " + title + "\n\n| Model |";
  std::string rule = "|---|";
  for (std::size_t c : channels) {
    std::string name = kChannelNames.at(c);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
    out += " RMSE " + name + " (mmHg) |";
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& row : rows) {
    out += "| " + row.model + " |";
    for (std::size_t c : channels) out += " " + fixed2(row.rmse.at(c)) + " |";
    out += "\n";
  }
  if (!footer.empty()) out += "\n" + footer + "\n";
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  auto triple = [&](const std::array<double, 3>& a) {
    json j;
    for (std::size_t c = 0; c < 3; ++c) j[kChannelNames[c]] = num(a[c]);
    return j;
  };
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"model", r.model},
                    {"session", r.session},
                    {"rmse_pooled", triple(r.pooled)},
                    {"rmse_macro", triple(r.macro)},
                    {"subjects", r.subjects},
                    {"samples", r.samples}});
  json agreement = json::object();
  for (std::size_t m = 0; m < report.models.size() && m < report.agreement.size(); ++m) {
    json per = json::object();
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& s = report.agreement[m][c];
      if (s.points.empty()) continue;
      per[kChannelNames[c]] = {{"mean_diff", s.mean_diff},
                               {"sd_diff", s.sd_diff},
                               {"lower", s.lower},
                               {"upper", s.upper},
                               {"fraction_within", s.fraction_within},
                               {"n", s.points.size()}};
    }
    agreement[report.models[m]] = per;
  }
  return {{"dataset", report.dataset_id},
          {"models", report.models},
          {"sessions", report.sessions},
          {"rows", rows},
          {"bland_altman", agreement}};
}

void write_session_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string out = "model,session,sbp_pooled,dbp_pooled,mbp_pooled,sbp_macro,dbp_macro,mbp_macro,subjects,samples\n";
  auto cell = [](double v) { return std::isfinite(v) ? detail::format_number(v) : std::string(); };
  for (const auto& r : report.rows) {
    out += r.model + "," + r.session;
    for (double v : r.pooled) out += "," + cell(v);
    for (double v : r.macro) out += "," + cell(v);
    out += "," + std::to_string(r.subjects) + "," + std::to_string(r.samples) + "\n";
  }
  write_file_atomic(path, out);
}

std::string render_session_chart_svg(const EvalReport& report, std::size_t channel) {
  require(channel < 3, ErrorCode::InvalidArgument, "channel index out of range");
  static const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
  const double width = 720, height = 380, left = 60, right = 180, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double ymax = 0.0;
  for (const auto& r : report.rows)
    if (std::isfinite(r.pooled[channel])) ymax = std::max(ymax, r.pooled[channel]);
  ymax = ymax > 0.0 ? ymax * 1.1 : 1.0;

  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                width, height);
  svg += buf;
  std::string upper = kChannelNames[channel];
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
  std::snprintf(buf, sizeof(buf), "<text x=\"%.0f\" y=\"24\" font-size=\"14\">Pooled RMSE %s (mmHg) by session</text>\n",
                left, upper.c_str());
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, top, left, top + plot_h, left, top + plot_h, left + plot_w, top + plot_h);
  svg += buf;
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = ymax * tick / 4.0;
    const double y = top + plot_h - plot_h * tick / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n", left - 6,
                  y + 4, v);
    svg += buf;
  }
  const std::size_t nm = std::max<std::size_t>(report.models.size(), 1);
  const std::size_t ns = std::max<std::size_t>(report.sessions.size(), 1);
  const double group_w = plot_w / static_cast<double>(ns);
  const double bar_w = group_w * 0.8 / static_cast<double>(nm);
  for (std::size_t s = 0; s < report.sessions.size(); ++s) {
    const double gx = left + group_w * static_cast<double>(s) + group_w * 0.1;
    for (std::size_t m = 0; m < report.models.size(); ++m) {
      const double v = report.row(report.models[m], report.sessions[s]).pooled[channel];
      if (!std::isfinite(v)) continue;
      const double h = plot_h * v / ymax;
      std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                    gx + bar_w * static_cast<double>(m), top + plot_h - h, bar_w, h, palette[m % 10]);
      svg += buf;
    }
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
                  gx + group_w * 0.4, top + plot_h + 18, report.sessions[s].c_str());
    svg += buf;
  }
  for (std::size_t m = 0; m < report.models.size(); ++m) {
    const double y = top + 16.0 * static_cast<double>(m);
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                  width - right + 16, y, palette[m % 10], width - right + 32, y + 9, report.models[m].c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

void write_bland_altman_csv(const std::filesystem::path& path, const BlandAltmanStats& stats) {
  Matrix m(static_cast<Eigen::Index>(stats.points.size()), 2);
  for (std::size_t i = 0; i < stats.points.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = stats.points[i][0];
    m(static_cast<Eigen::Index>(i), 1) = stats.points[i][1];
  }
  write_numeric_csv(path, {"mean", "difference"}, m);
}

}  // namespace seqpress
