#include "umafd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "umafd/errors.hpp"
#include "umafd/png_io.hpp"

namespace umafd::synth {
namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (n_train_pairs == 0 || n_test_depth == 0) throw ConfigError("synth: clip counts must be > 0");
  if (frames < 8 || height < 8 || width < 8) throw ConfigError("synth: frames, height and width must be >= 8");
  if (!(noise_level >= 0.0)) throw ConfigError("synth: noise_level must be >= 0");
}

std::array<double, 2> Scene::centre(std::size_t t, std::size_t frames) const {
  const double s = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.0;
  return {x0 + s * (x1 - x0), y0 + s * (y1 - y0)};
}

std::array<double, 2> Scene::stretch(std::size_t t, std::size_t frames) const {
  const double upright = 1.0 / elongation;
  if (motion != Motion::Fall) return {upright, elongation};
  const double s = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.0;
  const double ex = upright + s * (elongation - upright);
  return {ex, 1.0 / ex};
}

Scene random_scene(int label, std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * std::generate_canonical<double, 53>(rng); };
  const double H = static_cast<double>(height), W = static_cast<double>(width);

  Scene s;
  s.label = label;
  s.radius = uni(0.13, 0.17) * std::min(H, W);
  if (label == 1) {
    s.motion = Motion::Fall;
    s.x0 = uni(0.25, 0.75) * W;
    s.x1 = s.x0 + uni(-0.08, 0.08) * W;
    s.y0 = uni(0.3, 0.4) * H;
    s.y1 = s.y0 + uni(0.2, 0.3) * H;
  } else {
    s.motion = uni(0.0, 1.0) < 0.5 ? Motion::Horizontal : Motion::Static;
    s.y0 = uni(0.3, 0.7) * H;
    s.y1 = s.y0;
    if (s.motion == Motion::Horizontal) {
      const double span = uni(0.2, 0.3) * W;
      const bool rightward = uni(0.0, 1.0) < 0.5;
      s.x0 = rightward ? uni(0.25, 0.45) * W : uni(0.55, 0.75) * W;
      s.x1 = rightward ? s.x0 + span : s.x0 - span;
    } else {
      s.x0 = uni(0.25, 0.75) * W;
      s.x1 = s.x0;
    }
  }
  for (auto& c : s.color) c = uni(0.7, 1.0);
  for (auto& c : s.base) c = uni(0.15, 0.4);
  s.texture = {uni(2.0, 6.0), uni(2.0, 6.0), uni(0.0, 2.0 * std::numbers::pi), uni(0.0, 2.0 * std::numbers::pi)};
  s.background_distance = uni(0.8, 0.9);
  s.near_distance = uni(0.3, 0.45);
  s.far_shift = label == 1 ? uni(0.0, 0.1) : 0.0;
  s.noise_seed = rng();
  return s;
}

namespace {

double blob_mask(double dy, double dx, double radius, std::array<double, 2> stretch) {
  const double d = std::hypot(dx / stretch[0], dy / stretch[1]);
  // Solid ellipse with a roughly one-pixel soft edge.
  return std::clamp((radius - d) * std::min(stretch[0], stretch[1]) + 0.5, 0.0, 1.0);
}

}  // namespace

std::vector<std::vector<double>> render(const Scene& scene, data::Modality modality, const SynthConfig& cfg,
                                        bool blob, bool noise) {
  const std::size_t T = cfg.frames, H = cfg.height, W = cfg.width;
  const std::size_t channels = modality == data::Modality::Rgb ? 3 : 1;
  std::mt19937_64 rng(scene.noise_seed ^ (modality == data::Modality::Rgb ? 0x9e3779b97f4a7c15ULL : 0ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> frames(T, std::vector<double>(H * W * channels));
  for (std::size_t t = 0; t < T; ++t) {
    const auto [cx, cy] = scene.centre(t, T);
    const auto stretch = scene.stretch(t, T);
    const double s = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
    auto& f = frames[t];
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double m = blob ? blob_mask(static_cast<double>(y) + 0.5 - cy, static_cast<double>(x) + 0.5 - cx,
                                          scene.radius, stretch)
                              : 0.0;
        const std::size_t p = y * W + x;
        if (channels == 3) {
          const double u = static_cast<double>(x) / static_cast<double>(W);
          const double v = static_cast<double>(y) / static_cast<double>(H);
          const double tex = 0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * scene.texture[0] * u + scene.texture[2]) +
                             0.25 * std::sin(2.0 * std::numbers::pi * scene.texture[1] * v + scene.texture[3]);
          for (std::size_t c = 0; c < 3; ++c) {
            const double bg = scene.base[c] * (0.6 + 0.8 * tex);
            f[p * 3 + c] = bg * (1.0 - m) + scene.color[c] * m;
          }
        } else {
          const double near = scene.near_distance + s * scene.far_shift;
          f[p] = scene.background_distance * (1.0 - m) + near * m;
        }
      }
    }
    if (noise && cfg.noise_level > 0.0) {
      for (auto& v : f) v += cfg.noise_level * gauss(rng);
    }
    for (auto& v : f) v = std::clamp(v, 0.0, 1.0);
  }
  return frames;
}

std::vector<data::ClipRecord> generate(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw FileError("cannot create dataset directory " + root.string());

  std::mt19937_64 rng(cfg.seed);
  auto balanced_labels = [&](std::size_t n) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1 : 0;
    for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng() % i]);
    return labels;
  };

  struct Job {
    data::ClipRecord record;
    Scene scene;
  };
  std::vector<Job> jobs;
  auto add = [&](std::string prefix, data::Modality m, data::Split sp, std::size_t i, const Scene& scene) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%05zu", prefix.c_str(), i);
    data::ClipRecord r;
    r.clip_id = id;
    r.modality = m;
    r.split = sp;
    r.label = scene.label;
    r.frame_dir = root / data::to_string(m) / data::to_string(sp) / id;
    jobs.push_back({std::move(r), scene});
  };

  const auto train_labels = balanced_labels(cfg.n_train_pairs);
  std::vector<Scene> train_scenes;
  for (std::size_t i = 0; i < cfg.n_train_pairs; ++i) train_scenes.push_back(random_scene(train_labels[i], cfg.height, cfg.width, rng()));
  const auto test_labels = balanced_labels(cfg.n_test_depth);
  std::vector<Scene> test_scenes;
  for (std::size_t i = 0; i < cfg.n_test_depth; ++i) test_scenes.push_back(random_scene(test_labels[i], cfg.height, cfg.width, rng()));

  for (std::size_t i = 0; i < train_scenes.size(); ++i) add("rgb_train", data::Modality::Rgb, data::Split::Train, i, train_scenes[i]);
  for (std::size_t i = 0; i < train_scenes.size(); ++i) add("depth_train", data::Modality::Depth, data::Split::Train, i, train_scenes[i]);
  for (std::size_t i = 0; i < test_scenes.size(); ++i) add("depth_test", data::Modality::Depth, data::Split::Test, i, test_scenes[i]);

  std::string failure;
  const long n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < n; ++j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    try {
      fs::create_directories(job.record.frame_dir);
      const auto frames = render(job.scene, job.record.modality, cfg);
      for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto path = data::frame_path(job.record.frame_dir, t);
        if (job.record.modality == data::Modality::Rgb) {
          std::vector<std::uint8_t> px(frames[t].size());
          for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(std::lround(frames[t][i] * 255.0));
          png::write_rgb8(path, cfg.width, cfg.height, px);
        } else {
          std::vector<std::uint16_t> px(frames[t].size());
          for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint16_t>(std::lround(frames[t][i] * 65535.0));
          png::write_gray16(path, cfg.width, cfg.height, px);
        }
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw FileError(failure);

  std::vector<data::ClipRecord> records;
  records.reserve(jobs.size());
  for (auto& job : jobs) records.push_back(std::move(job.record));
  data::write_manifest(root, records);
  return records;
}

double vertical_centroid(const Tensor& clip, data::Modality modality, std::size_t t) {
  const std::size_t T = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  const double* base = clip.ptr();
  double mass = 0.0, moment = 0.0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double v = 0.0;
      for (std::size_t c = 0; c < 3; ++c) v += base[((c * T + t) * H + y) * W + x];
      v /= 3.0;
      // The blob is brighter than any RGB background and nearer (darker) than any depth background.
      const double w = modality == data::Modality::Rgb ? std::max(0.0, v - 0.63) : std::max(0.0, 0.65 - v);
      mass += w;
      moment += w * static_cast<double>(y);
    }
  }
  return mass > 0.0 ? moment / mass : static_cast<double>(H) / 2.0;
}

int displacement_rule(const Tensor& clip, data::Modality modality) {
  const std::size_t T = clip.dim(1), H = clip.dim(2);
  const double dy = vertical_centroid(clip, modality, T - 1) - vertical_centroid(clip, modality, 0);
  return dy > 0.15 * static_cast<double>(H) ? 1 : 0;
}

}  // namespace umafd::synth
