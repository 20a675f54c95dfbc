#include "umafd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "umafd/errors.hpp"
#include "umafd/ops.hpp"

namespace umafd {
namespace fs = std::filesystem;

UmaModel::UmaModel(const BackboneConfig& cfg, double grl_lambda, std::uint64_t seed)
    : init_rng_(seed),
      backbone(cfg, params, init_rng_),
      idm(cfg.stage1_channels, params, init_rng_),
      classifier(cfg.embedding_dim, params, init_rng_),
      modality(cfg.embedding_dim, grl_lambda, params, init_rng_),
      weight_head(cfg.embedding_dim, params, init_rng_) {}

Var UmaModel::embed(const Tensor& clips) const { return backbone.pooled_embedding(backbone.features(as_batch(clips))); }

std::vector<double> UmaModel::scores(const Tensor& clips) const { return classifier.classify(embed(clips)); }

TrainState::TrainState(const BackboneConfig& backbone, const TrainConfig& train)
    : model(backbone, train.grl_lambda, train.seed), optimizer(train.momentum), memory(train.xbm_capacity) {}

bool needs_depth_stream(const TrainConfig& cfg) {
  if (cfg.supervised_depth || cfg.weight_mode == WeightMode::Adaptive) return true;
  for (std::size_t i = 1; i < kLossTerms; ++i) {
    if (cfg.enabled[i]) return true;
  }
  return false;
}

namespace {

Var zero_term() { return ops::constant(Tensor::scalar(0.0)); }

}  // namespace

StepResult train_step(const StepInput& input, TrainState& state, const TrainConfig& cfg, double lr) {
  if (!input.rgb) throw DataError("train_step: missing RGB clip");
  const bool need_depth = needs_depth_stream(cfg);
  if (need_depth && !input.depth) throw DataError("train_step: configuration needs the depth clip");
  if (cfg.supervised_depth && !input.depth_label) throw DataError("train_step: supervised step without depth label");
  UmaModel& m = state.model;

  // 1. features
  FeatureBundle fb;
  if (need_depth) {
    const bool with_idm = cfg.uses(LossTerm::Bridge);
    fb = forward_features(m.backbone, with_idm ? &m.idm : nullptr, *input.rgb, *input.depth);
  } else {
    fb.feat_rgb = m.backbone.features(as_batch(*input.rgb));
    fb.emb_rgb = m.backbone.pooled_embedding(fb.feat_rgb);
  }

  std::vector<Var> terms(kLossTerms, zero_term());
  StepResult result;

  // 2. classification on RGB (plus revealed depth labels), pseudo labels on depth
  const Var logit_rgb = m.classifier.logits(fb.emb_rgb);
  if (cfg.supervised_depth) {
    const Var logit_depth = m.classifier.logits(fb.emb_depth);
    const std::array<int, 2> labels{input.rgb_label, *input.depth_label};
    terms[0] = cls_loss(ops::concat_rows(logit_rgb, logit_depth), labels);
  } else {
    const std::array<int, 1> labels{input.rgb_label};
    terms[0] = cls_loss(logit_rgb, labels);
  }

  std::optional<int> depth_pseudo;
  if (need_depth && (cfg.uses(LossTerm::Pseudo) || cfg.uses(LossTerm::Triplet))) {
    const Var logit_depth = m.classifier.logits(fb.emb_depth);
    const std::array<double, 1> score{clamped_sigmoid(logit_depth.value()[0])};
    const auto pl = pseudo_labels(score, cfg.tau);
    result.losses.pseudo_count = pl.count;
    if (pl.count) depth_pseudo = pl.labels[0];
    if (cfg.uses(LossTerm::Pseudo)) terms[1] = pseudo_loss(logit_depth, cfg.tau);
  }

  // 3. modality adversarial loss through the gradient reversal layer
  if (cfg.uses(LossTerm::Modality)) {
    const Var logits = ops::concat_rows(m.modality.logits(fb.emb_rgb), m.modality.logits(fb.emb_depth));
    const std::array<int, 2> modality_labels{1, 0};
    terms[2] = modality_loss(logits, modality_labels);
  }

  // 4. bridge loss on the final maps
  if (cfg.uses(LossTerm::Bridge)) {
    terms[3] = bridge_loss(fb.feat_rgb, fb.feat_depth, fb.feat_inter, *fb.coeffs);
  }

  // 5. triplet loss against the memory snapshot, then enqueue labelled embeddings
  if (cfg.uses(LossTerm::Triplet)) {
    const Var emb = ops::concat_rows(fb.emb_rgb, fb.emb_depth);
    const std::array<std::optional<int>, 2> labels{input.rgb_label, depth_pseudo};
    const auto snapshot = state.memory.snapshot();
    terms[4] = xbm_triplet_loss(emb, labels, snapshot, cfg.margin);
    const std::size_t d = fb.emb_rgb.size();
    const auto& rv = fb.emb_rgb.value().vec();
    state.memory.push({std::vector<double>(rv.begin(), rv.begin() + static_cast<long>(d)), input.rgb_label,
                       data::Modality::Rgb, state.step});
    if (depth_pseudo) {
      const auto& dv = fb.emb_depth.value().vec();
      state.memory.push({std::vector<double>(dv.begin(), dv.begin() + static_cast<long>(d)), *depth_pseudo,
                         data::Modality::Depth, state.step});
    }
  }

  // 6. weights
  Var weights;
  if (cfg.weight_mode == WeightMode::Adaptive) {
    const Var pooled = need_depth ? ops::scale(ops::add(fb.emb_rgb, fb.emb_depth), 0.5) : fb.emb_rgb;
    weights = m.weight_head.weights(ops::detach(pooled));
  } else {
    weights = ops::constant(Tensor({kLossTerms}, std::vector<double>(cfg.lambdas.begin(), cfg.lambdas.end())));
  }

  for (std::size_t i = 0; i < kLossTerms; ++i) {
    const double v = terms[i].value().item();
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + kLossNames[i] + " loss at step " + std::to_string(state.step));
    result.losses.values[i] = v;
    result.weights[i] = weights.value()[i];
  }

  // 7. total loss and momentum update
  const Var total = total_loss(terms, weights);
  result.total = total.value().item();
  if (!std::isfinite(result.total)) throw NumericError("non-finite total loss at step " + std::to_string(state.step));
  m.params.zero_grad();
  backward(total);
  state.optimizer.step(m.params, lr);
  ++state.step;
  return result;
}

std::string format_log_row(std::size_t step, const StepResult& r) {
  std::string row = std::to_string(step);
  for (double v : r.losses.values) row += "," + format_double(v);
  row += "," + format_double(r.total);
  for (double w : r.weights) row += "," + format_double(w);
  row += "," + std::to_string(r.losses.pseudo_count);
  return row;
}

fs::path checkpoint_path(const fs::path& dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_epoch_%03zu.bin", epoch);
  return dir / name;
}

namespace {

fs::path meta_path(const fs::path& bin) {
  fs::path p = bin;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace

void save_checkpoint(const fs::path& bin_path, const TrainState& state, const RunConfig& cfg) {
  save_blob(bin_path, state.model.params, &state.optimizer.velocity());
  nlohmann::ordered_json meta;
  meta["format"] = "umafd-checkpoint-1";
  meta["epoch"] = state.epoch;
  meta["step"] = state.step;
  meta["seed"] = cfg.train.seed;
  meta["parameters"] = state.model.params.scalar_count();
  meta["checksum"] = hex64(state.model.params.checksum());
  meta["config"] = echo_run_config(cfg);
  if (state.init_from) {
    meta["init_from"] = state.init_from->string();
    meta["init_checksum"] = state.init_checksum;
  }
  std::ofstream out(meta_path(bin_path), std::ios::binary);
  if (!out) throw FileError("cannot write checkpoint metadata for " + bin_path.string());
  out << meta.dump(2) << '\n';
}

void load_checkpoint(const fs::path& bin_path, TrainState& state, bool state_too, bool allow_missing) {
  std::vector<Tensor> velocity;
  load_blob(bin_path, state.model.params, state_too ? &velocity : nullptr, allow_missing);
  if (state_too) {
    state.optimizer.velocity() = std::move(velocity);
    std::ifstream in(meta_path(bin_path));
    if (!in) throw FileError("missing checkpoint metadata for " + bin_path.string());
    const auto meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded()) throw FileError("corrupt checkpoint metadata for " + bin_path.string());
    state.epoch = meta.value("epoch", std::size_t{0});
    state.step = meta.value("step", std::size_t{0});
    if (meta.contains("init_from")) {
      state.init_from = meta["init_from"].get<std::string>();
      state.init_checksum = meta.value("init_checksum", std::string());
    }
  }
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL * (epoch + 1);
}

std::optional<std::size_t> newest_epoch(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(ckpt_epoch_(\d{3,})\.bin)");
  std::optional<std::size_t> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const std::size_t e = std::stoul(m[1].str());
      if (!best || e > *best) best = e;
    }
  }
  return best;
}

double rgb_accuracy(const UmaModel& model, const std::vector<data::ClipRecord>& records, data::ClipSource& source) {
  std::size_t correct = 0;
  for (const auto& r : records) {
    const double s = model.scores(source.tensor(r))[0];
    correct += ((s > 0.5 ? 1 : 0) == source.label(r)) ? 1 : 0;
  }
  return records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace

FitResult fit(const std::vector<data::ClipRecord>& records, data::ClipSource& source, const RunConfig& cfg,
              const FitOptions& options) {
  cfg.validate();
  const TrainConfig& tc = cfg.train;
  auto rgb = data::select(records, data::Split::Train, data::Modality::Rgb);
  const auto depth = data::select(records, data::Split::Train, data::Modality::Depth);
  if (rgb.empty()) throw DataError("dataset has no RGB TRAIN clips");
  if (depth.empty()) throw DataError("dataset has no DEPTH TRAIN clips");
  for (const auto& r : rgb) {
    if (!r.label) throw DataError("RGB TRAIN clip '" + r.clip_id + "' has no label");
  }
  if (tc.supervised_depth) {
    for (const auto& r : depth) {
      if (!r.label) throw DataError("supervised target needs labels on every DEPTH TRAIN clip; '" + r.clip_id + "' has none");
    }
  }

  std::vector<data::ClipRecord> val;
  if (tc.val_fraction > 0.0) {
    const auto perm = data::seeded_permutation(rgb.size(), tc.seed ^ 0x76616cULL);
    const auto n_val = static_cast<std::size_t>(std::ceil(tc.val_fraction * static_cast<double>(rgb.size())));
    if (n_val >= rgb.size()) throw DataError("validation split leaves no RGB training clips");
    std::vector<data::ClipRecord> kept;
    for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? val : kept).push_back(rgb[perm[i]]);
    rgb = std::move(kept);
  }

  fs::create_directories(options.out_dir);
  TrainState state(cfg.backbone, tc);
  if (options.init_checkpoint) {
    load_checkpoint(*options.init_checkpoint, state, false, true);
    state.init_from = *options.init_checkpoint;
    state.init_checksum = hex64(state.model.params.checksum());
  }

  const bool need_depth = needs_depth_stream(tc);
  const std::size_t per_epoch = std::min(rgb.size(), depth.size());
  std::size_t start_epoch = 0;
  const fs::path log_path = options.out_dir / "train_log.csv";
  std::vector<std::string> kept_log;
  double best_val = -1.0;
  if (options.resume) {
    if (const auto last = newest_epoch(options.out_dir)) {
      load_checkpoint(checkpoint_path(options.out_dir, *last), state, true, false);
      start_epoch = *last + 1;
      state.step = start_epoch * per_epoch;
      std::ifstream in(log_path);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (std::stoul(line.substr(0, line.find(','))) < state.step) kept_log.push_back(line);
      }
      if (fs::exists(options.out_dir / "best.json")) {
        std::ifstream bj(options.out_dir / "best.json");
        best_val = nlohmann::json::parse(bj, nullptr, false).value("val_accuracy", -1.0);
      }
    }
  }

  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw FileError("cannot write " + log_path.string());
  log << kTrainLogHeader << '\n';
  for (const auto& l : kept_log) log << l << '\n';

  source.prefetch(rgb);
  if (need_depth) source.prefetch(depth);

  FitResult result;
  const fs::path best_path = options.out_dir / "ckpt_best.bin";
  for (std::size_t epoch = start_epoch; epoch < tc.epochs; ++epoch) {
    state.epoch = epoch;
    state.memory.clear();
    const double lr = lr_schedule(epoch, tc);
    const auto pairs = data::make_pairs(rgb.size(), depth.size(), epoch_seed(tc.seed, epoch));
    for (const auto& [ri, di] : pairs) {
      StepInput in;
      in.rgb = &source.tensor(rgb[ri]);
      in.rgb_label = source.label(rgb[ri]);
      if (need_depth) in.depth = &source.tensor(depth[di]);
      if (tc.supervised_depth) in.depth_label = source.label(depth[di]);
      const std::size_t step = state.step;
      const StepResult r = train_step(in, state, tc, lr);
      log << format_log_row(step, r) << '\n';
      if (options.on_step) options.on_step(step, r);
      ++result.steps_run;
    }
    log.flush();
    save_checkpoint(checkpoint_path(options.out_dir, epoch), state, cfg);
    if (!val.empty()) {
      const double acc = rgb_accuracy(state.model, val, source);
      if (acc > best_val) {
        best_val = acc;
        save_checkpoint(best_path, state, cfg);
        std::ofstream bj(options.out_dir / "best.json");
        bj << nlohmann::json{{"epoch", epoch}, {"val_accuracy", acc}}.dump() << '\n';
      }
    }
  }

  result.final_checkpoint = options.out_dir / "ckpt_final.bin";
  save_checkpoint(result.final_checkpoint, state, cfg);
  result.best_checkpoint = (!val.empty() && fs::exists(best_path)) ? best_path : result.final_checkpoint;
  result.checksum = state.model.params.checksum();
  return result;
}

}  // namespace umafd
