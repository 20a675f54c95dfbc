#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "umafd/data.hpp"

namespace umafd::synth {

struct SynthConfig {
  std::size_t n_train_pairs = 200;
  std::size_t n_test_depth = 80;
  std::size_t frames = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  double noise_level = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Motion { Fall, Horizontal, Static };

/// Everything needed to render one clip in either modality.
struct Scene {
  int label = 0;
  Motion motion = Motion::Static;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // blob centre at first/last frame, pixels
  double radius = 0;
  // Posture: the blob is an ellipse stretched by `elongation` vertically while
  // upright; a fall ends lying down (stretched horizontally).
  double elongation = 1.5;
  std::array<double, 3> color{};            // RGB blob colour
  std::array<double, 3> base{};             // RGB background base colour
  std::array<double, 4> texture{};          // two grating frequencies and phases
  double background_distance = 0.85;        // depth background level
  double near_distance = 0.4;               // depth of the blob at the first frame
  double far_shift = 0.0;                   // blob distance change over the clip
  std::uint64_t noise_seed = 0;

  /// Blob centre at frame t of T (linear trajectory).
  std::array<double, 2> centre(std::size_t t, std::size_t frames) const;
  /// Horizontal and vertical stretch factors at frame t of T.
  std::array<double, 2> stretch(std::size_t t, std::size_t frames) const;
};

Scene random_scene(int label, std::size_t height, std::size_t width, std::uint64_t seed);

/// Renders frames as interleaved planes with values in [0, 1]: RGB frames have 3
/// channels, depth frames 1. `blob` = false renders the background only.
std::vector<std::vector<double>> render(const Scene& scene, data::Modality modality, const SynthConfig& cfg,
                                        bool blob = true, bool noise = true);

/// Writes manifest + frames under `root` and returns the records in manifest order.
std::vector<data::ClipRecord> generate(const SynthConfig& cfg, const std::filesystem::path& root);

/// Hand-written label rule: sign of net vertical displacement of the blob
/// centroid, estimated from the decoded clip (3, T, H, W).
int displacement_rule(const Tensor& clip, data::Modality modality);

/// Vertical centroid of the foreground mass of frame t.
double vertical_centroid(const Tensor& clip, data::Modality modality, std::size_t t);

}  // namespace umafd::synth
