#include "umafd/protocols.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "umafd/errors.hpp"

namespace umafd {
namespace fs = std::filesystem;

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::Baseline: return "baseline";
    case Protocol::Umafd: return "umafd";
    case Protocol::SupervisedTarget: return "supervised-target";
  }
  return "?";
}

Protocol protocol_from_name(std::string_view name) {
  for (Protocol p : {Protocol::Baseline, Protocol::Umafd, Protocol::SupervisedTarget}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

namespace {

void cls_only(TrainConfig& t) {
  t.enabled = {true, false, false, false, false};
  t.weight_mode = WeightMode::Fixed;
}

}  // namespace

RunConfig protocol_config(Protocol p, const RunConfig& cfg) {
  RunConfig out = cfg;
  switch (p) {
    case Protocol::Baseline:
      cls_only(out.train);
      out.train.supervised_depth = false;
      break;
    case Protocol::Umafd:
      out.train.supervised_depth = false;
      break;
    case Protocol::SupervisedTarget:
      cls_only(out.train);
      out.train.supervised_depth = true;
      break;
  }
  return out;
}

MetricsReport evaluate_depth_test(const UmaModel& model, const std::vector<data::ClipRecord>& records,
                                  data::ClipSource& source, std::vector<double>* scores_out) {
  const auto test = data::select(records, data::Split::Test, data::Modality::Depth);
  if (test.empty()) throw DataError("dataset has no DEPTH TEST clips");
  source.prefetch(test);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : test) {
    scores.push_back(model.scores(source.tensor(r))[0]);
    labels.push_back(source.label(r));
  }
  const MetricsReport m = metrics(scores, labels);
  if (scores_out) *scores_out = std::move(scores);
  return m;
}

namespace {

void write_lines(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

ProtocolResult evaluate_checkpoint(Protocol p, const fs::path& ckpt, const std::vector<data::ClipRecord>& records,
                                   data::ClipSource& source, const RunConfig& run) {
  TrainState state(run.backbone, run.train);
  load_checkpoint(ckpt, state, false, false);
  ProtocolResult res;
  res.protocol = p;
  res.seed = run.train.seed;
  res.config_echo = echo_run_config(run);
  res.checkpoint = ckpt;
  res.metrics = evaluate_depth_test(state.model, records, source, &res.scores);
  return res;
}

}  // namespace

ProtocolResult run_protocol(Protocol p, const std::vector<data::ClipRecord>& records, data::ClipSource& source,
                            const RunConfig& cfg, const fs::path& out_dir, const ProtocolOptions& options) {
  const RunConfig run = protocol_config(p, cfg);
  run.validate();
  FitOptions fo;
  fo.out_dir = out_dir;
  fo.init_checkpoint = options.init_checkpoint;
  fo.resume = options.resume;
  const FitResult fit_result = fit(records, source, run, fo);
  ProtocolResult res = evaluate_checkpoint(p, fit_result.best_checkpoint, records, source, run);
  if (options.write_report) {
    const std::string row = std::string(to_string(p)) + "," + std::to_string(res.seed) + "," + format_percent_row(res.metrics);
    write_lines(out_dir / ("report_" + std::string(to_string(p)) + ".csv"), kReportHeader, {row});
  }
  return res;
}

RunConfig ablation_config(std::size_t index, const RunConfig& base) {
  if (index >= kAblationStages) throw ConfigError("ablation stage index " + std::to_string(index) + " out of range");
  RunConfig out = protocol_config(Protocol::Baseline, base);
  auto& t = out.train;
  // cls, then modality, pseudo, bridge, triplet, then adaptive weighting
  static constexpr std::array<LossTerm, 4> ladder{LossTerm::Modality, LossTerm::Pseudo, LossTerm::Bridge,
                                                  LossTerm::Triplet};
  for (std::size_t k = 0; k < std::min<std::size_t>(index, ladder.size()); ++k) {
    t.enabled[static_cast<std::size_t>(ladder[k])] = true;
  }
  if (index >= 3) out.backbone.idm_enabled = true;
  if (index == 5) t.weight_mode = WeightMode::Adaptive;
  return out;
}

std::vector<AblationRow> ablation(const std::vector<data::ClipRecord>& records, data::ClipSource& source,
                                  const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<AblationRow> rows;
  std::optional<fs::path> previous;
  for (std::size_t i = 0; i < kAblationStages; ++i) {
    const RunConfig run = ablation_config(i, cfg);
    const fs::path dir = out_dir / kStageIds[i];
    const fs::path done = dir / "stage.done";
    AblationRow row;
    row.stage = kStageIds[i];
    const Protocol tag = i == 0 ? Protocol::Baseline : Protocol::Umafd;
    if (fs::exists(done)) {
      std::ifstream in(done);
      std::string best;
      std::getline(in, best);
      row.result = evaluate_checkpoint(tag, dir / best, records, source, run);
      row.skipped = true;
    } else {
      ProtocolOptions po;
      po.init_checkpoint = previous;
      po.resume = true;
      po.write_report = false;
      row.result = run_protocol(tag, records, source, run, dir, po);
      std::ofstream out(done, std::ios::trunc);
      out << row.result.checkpoint.filename().string() << '\n';
    }
    previous = row.result.checkpoint;
    rows.push_back(std::move(row));
  }
  std::vector<std::string> lines;
  for (const auto& r : rows) lines.push_back(r.stage + "," + format_percent_row(r.result.metrics));
  write_lines(out_dir / "ablation.csv", kAblationHeader, lines);
  return rows;
}

void export_embeddings(const fs::path& checkpoint, const std::vector<data::ClipRecord>& records,
                       data::ClipSource& source, const BackboneConfig& backbone, const fs::path& out) {
  TrainConfig tc;
  TrainState state(backbone, tc);
  load_checkpoint(checkpoint, state, false, false);
  std::vector<data::ClipRecord> test;
  for (const auto& r : records) {
    if (r.split == data::Split::Test) test.push_back(r);
  }
  std::sort(test.begin(), test.end(), [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  source.prefetch(test);

  std::string header = kEmbeddingPrefix;
  for (std::size_t k = 0; k < backbone.embedding_dim; ++k) header += ",e" + std::to_string(k);
  std::vector<std::string> lines;
  for (const auto& r : test) {
    const Var emb = state.model.embed(source.tensor(r));
    std::string line = r.clip_id + "," + std::string(data::to_string(r.modality)) + ",";
    line += r.label ? std::to_string(*r.label) : std::string();
    for (double v : emb.value().values()) line += "," + format_double(v);
    lines.push_back(std::move(line));
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_lines(out, header, lines);
}

}  // namespace umafd
